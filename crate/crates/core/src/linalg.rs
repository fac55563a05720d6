//! Dense linear-algebra kernels shared by every estimator.
//!
//! The Moore-Penrose inverse is built on an SVD with an explicit
//! singular-value cutoff; least-squares problems go through a Householder QR
//! with column pivoting so that rank deficiency is reported with the names of
//! the offending columns instead of being papered over.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold on `|R_kk| / |R_00|` below which a pivoted column is
/// declared collinear in least-squares fits.
pub const COLLINEARITY_TOL: f64 = 1e-10;

/// Multiplier in the pinv cutoff `sigma_i > scale * max(m, n) * sigma_max * eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinvCutoff {
    pub scale: f64,
}

impl Default for PinvCutoff {
    fn default() -> Self {
        Self { scale: 1.0 }
    }
}

impl PinvCutoff {
    fn threshold(&self, rows: usize, cols: usize, sigma_max: f64) -> f64 {
        self.scale * rows.max(cols) as f64 * sigma_max * f64::EPSILON
    }
}

pub(crate) fn ensure_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn ensure_finite_vec(v: &DVector<f64>, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Thin singular value decomposition `A = U diag(s) V'`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `m x k`, `k = min(m, n)`.
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    /// `n x k`.
    pub v: DMatrix<f64>,
}

impl Svd {
    pub fn sigma_max(&self) -> f64 {
        self.singular_values.iter().copied().fold(0.0, f64::max)
    }

    pub fn sigma_min(&self) -> f64 {
        self.singular_values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// SVD backed by faer; nalgebra 0.35's SVD returns inaccurate singular
/// vectors on some rank-deficient inputs.
pub fn svd(a: &DMatrix<f64>) -> Result<Svd> {
    ensure_finite(a, "svd input")?;
    let (m, n) = a.shape();
    let k = m.min(n);
    let fm = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)]);
    let dec = fm
        .thin_svd()
        .map_err(|e| Error::Convergence(format!("singular value decomposition: {e:?}")))?;
    let (fu, fs, fv) = (dec.U(), dec.S(), dec.V());
    let sv = fs.column_vector();
    Ok(Svd {
        u: DMatrix::from_fn(m, k, |i, j| fu[(i, j)]),
        singular_values: DVector::from_fn(k, |i, _| sv[i]),
        v: DMatrix::from_fn(n, k, |i, j| fv[(i, j)]),
    })
}

/// Moore-Penrose pseudo-inverse with the default cutoff.
pub fn pinv(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    pinv_with(a, PinvCutoff::default())
}

pub fn pinv_with(a: &DMatrix<f64>, cutoff: PinvCutoff) -> Result<DMatrix<f64>> {
    ensure_finite(a, "pinv input")?;
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(DMatrix::zeros(n, m));
    }
    let svd = svd(a)?;
    let sigma_max = svd.sigma_max();
    if sigma_max == 0.0 {
        return Ok(DMatrix::zeros(n, m));
    }
    let tol = cutoff.threshold(m, n, sigma_max);
    if m == n && is_lower_triangular(a) && svd.sigma_min() > tol {
        // Nonsingular triangular input: the inverse by substitution keeps the
        // structural zeros exact, which the SVD route only gets to rounding.
        if let Some(inv) = a.solve_lower_triangular(&DMatrix::identity(n, n)) {
            if inv.iter().all(|v| v.is_finite()) {
                return Ok(inv);
            }
        }
    }
    let mut out = DMatrix::zeros(n, m);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            // out += v_i * u_i' / s
            out.ger(1.0 / s, &svd.v.column(i), &svd.u.column(i), 1.0);
        }
    }
    Ok(out)
}

fn is_lower_triangular(a: &DMatrix<f64>) -> bool {
    (0..a.ncols()).all(|j| (0..j.min(a.nrows())).all(|i| a[(i, j)] == 0.0))
}

/// Number of singular values above the pinv cutoff.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return 0;
    }
    let Ok(svd) = svd(a) else {
        return 0;
    };
    let sigma_max = svd.sigma_max();
    if sigma_max == 0.0 {
        return 0;
    }
    let tol = PinvCutoff::default().threshold(m, n, sigma_max);
    svd.singular_values.iter().filter(|&&s| s > tol).count()
}

/// Column-major vectorization.
pub fn vec(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// Commutation matrix `K` with `vec(A') = K vec(A)` for every `m x n` matrix `A`.
pub fn commutation_matrix(m: usize, n: usize) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(m * n, m * n);
    for i in 0..m {
        for j in 0..n {
            // A[i, j] sits at i + j*m in vec(A) and at j + i*n in vec(A').
            k[(j + i * n, i + j * m)] = 1.0;
        }
    }
    k
}

/// `S_h = [I_{h+1}, 0_{(h+1) x (H-h)}]`.
pub fn selection_matrix(h: usize, horizon: usize) -> Result<DMatrix<f64>> {
    if h > horizon {
        return Err(Error::invalid(format!(
            "selection horizon h = {h} exceeds H = {horizon}"
        )));
    }
    let mut s = DMatrix::zeros(h + 1, horizon + 1);
    for i in 0..=h {
        s[(i, i)] = 1.0;
    }
    Ok(s)
}

/// Residual maker `I - A (A'A)^+ A'` onto the orthogonal complement of col(A).
pub fn residual_maker(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = a * pinv(a)?;
    Ok(DMatrix::identity(a.nrows(), a.nrows()) - p)
}

pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> DVector<f64> {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
}

/// Output of [`lstsq`].
#[derive(Debug, Clone)]
pub struct LeastSquares {
    /// `n_regressors x n_rhs` coefficients.
    pub coef: DMatrix<f64>,
    /// `n_obs x n_rhs` residuals.
    pub residuals: DMatrix<f64>,
}

/// Householder QR with column pivoting of a tall matrix.
struct PivotedQr {
    /// Householder vectors below the diagonal, R on and above.
    qr: DMatrix<f64>,
    /// `perm[k]` is the original column placed at position k.
    perm: Vec<usize>,
    /// Householder scalars.
    tau: Vec<f64>,
    rank: usize,
}

impl PivotedQr {
    fn new(a: &DMatrix<f64>, rel_tol: f64) -> Self {
        let (m, n) = a.shape();
        let mut qr = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let steps = m.min(n);
        let mut tau = vec![0.0; steps];
        let mut r00 = 0.0_f64;
        let mut rank = steps;
        for k in 0..steps {
            let (best, best_norm) = (k..n)
                .map(|j| (j, qr.view((k, j), (m - k, 1)).norm_squared()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best != k {
                qr.swap_columns(k, best);
                perm.swap(k, best);
            }
            let norm = best_norm.sqrt();
            if k == 0 {
                r00 = norm;
            }
            if norm <= rel_tol * r00 || norm == 0.0 {
                rank = k;
                break;
            }
            let x0 = qr[(k, k)];
            let alpha = if x0 >= 0.0 { -norm } else { norm };
            // v = x - alpha e1, normalized so that v[0] = 1.
            let v0 = x0 - alpha;
            for i in (k + 1)..m {
                qr[(i, k)] /= v0;
            }
            tau[k] = -v0 / alpha;
            qr[(k, k)] = alpha;
            for j in (k + 1)..n {
                let mut dot = qr[(k, j)];
                for i in (k + 1)..m {
                    dot += qr[(i, k)] * qr[(i, j)];
                }
                let s = tau[k] * dot;
                qr[(k, j)] -= s;
                for i in (k + 1)..m {
                    let vik = qr[(i, k)];
                    qr[(i, j)] -= s * vik;
                }
            }
        }
        Self { qr, perm, tau, rank }
    }

    /// Applies `Q'` to `b` in place.
    fn apply_qt(&self, b: &mut DMatrix<f64>) {
        let m = self.qr.nrows();
        for k in 0..self.rank {
            for c in 0..b.ncols() {
                let mut dot = b[(k, c)];
                for i in (k + 1)..m {
                    dot += self.qr[(i, k)] * b[(i, c)];
                }
                let s = self.tau[k] * dot;
                b[(k, c)] -= s;
                for i in (k + 1)..m {
                    b[(i, c)] -= s * self.qr[(i, k)];
                }
            }
        }
    }

    /// Solves the leading `rank x rank` triangular system; unidentified
    /// coefficients are left at zero.
    fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.qr.ncols();
        let mut qtb = b.clone();
        self.apply_qt(&mut qtb);
        let r = self.rank;
        let mut x = DMatrix::zeros(n, b.ncols());
        for c in 0..b.ncols() {
            for k in (0..r).rev() {
                let mut s = qtb[(k, c)];
                for j in (k + 1)..r {
                    s -= self.qr[(k, j)] * x[(self.perm[j], c)];
                }
                x[(self.perm[k], c)] = s / self.qr[(k, k)];
            }
        }
        x
    }
}

/// Least squares `min ||y - x b||` column by column of `y`.
///
/// `names` labels the columns of `x` for error reporting; rank deficiency
/// returns [`Error::Collinear`] naming the columns dropped by the pivoting.
pub fn lstsq(x: &DMatrix<f64>, y: &DMatrix<f64>, names: &[String]) -> Result<LeastSquares> {
    if x.nrows() != y.nrows() {
        return Err(Error::shape(format!(
            "lstsq: {} regressor rows vs {} response rows",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() < x.ncols() {
        return Err(Error::InsufficientSample(format!(
            "{} observations for {} regressors",
            x.nrows(),
            x.ncols()
        )));
    }
    ensure_finite(x, "regressors")?;
    ensure_finite(y, "regression response")?;
    let qr = PivotedQr::new(x, COLLINEARITY_TOL);
    if qr.rank < x.ncols() {
        let columns = qr.perm[qr.rank..]
            .iter()
            .map(|&j| names.get(j).cloned().unwrap_or_else(|| format!("col{j}")))
            .collect();
        return Err(Error::Collinear { columns });
    }
    let coef = qr.solve(y);
    let residuals = y - x * &coef;
    Ok(LeastSquares { coef, residuals })
}

/// Solves a square system, failing loudly when it is numerically singular.
pub fn solve_square(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::shape(format!(
            "{what}: {}x{} system with {} right-hand rows",
            n,
            a.ncols(),
            b.nrows()
        )));
    }
    ensure_finite(a, what)?;
    let sv = svd(a)?;
    let (sigma_min, sigma_max) = (sv.sigma_min(), sv.sigma_max());
    if sigma_max == 0.0 || sigma_min <= PinvCutoff::default().threshold(n, n, sigma_max) {
        return Err(Error::Singular {
            what,
            sigma_min,
            sigma_max,
        });
    }
    let qr = PivotedQr::new(a, 0.0);
    Ok(qr.solve(b))
}

pub fn inverse(a: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    solve_square(a, &DMatrix::identity(a.nrows(), a.nrows()), what)
}
