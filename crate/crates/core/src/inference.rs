//! Long-run variances, projection standard errors and delta-method variances.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::analytic::{CounterfactualEstimate, Method};
use crate::error::{Error, Result};
use crate::linalg::{
    commutation_matrix, ensure_finite, inverse, numerical_rank, pinv, residual_maker, svd, symmetric_eigenvalues,
    PinvCutoff,
};
use crate::lp::{FitTarget, ProjectionFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Bartlett,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrvMethod {
    Hac {
        kernel: Kernel,
        bandwidth: usize,
    },
    /// Sample covariance of the reordered scores; `dropped` dates lacked residual history.
    HrReordered {
        dropped: usize,
    },
}

#[derive(Debug, Clone)]
pub struct LrvEstimate {
    pub matrix: DMatrix<f64>,
    pub method: LrvMethod,
    /// Number of score observations used.
    pub n: usize,
}

/// Newey-West rule `floor(4 (T/100)^(2/9))`.
pub fn default_bandwidth(t: usize) -> usize {
    (4.0 * (t as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

fn kernel_lrv(scores: &DMatrix<f64>, bandwidth: usize) -> Result<DMatrix<f64>> {
    let (n, k) = scores.shape();
    if n < 2 {
        return Err(Error::InsufficientSample(format!("{n} score observations")));
    }
    ensure_finite(scores, "scores")?;
    let mean = scores.row_mean();
    let mut s = scores.clone();
    for mut row in s.row_iter_mut() {
        row -= &mean;
    }
    let nf = n as f64;
    let mut omega = s.transpose() * &s / nf;
    for lag in 1..=bandwidth.min(n - 1) {
        let w = 1.0 - lag as f64 / (bandwidth as f64 + 1.0);
        let gamma = s.rows(lag, n - lag).transpose() * s.rows(0, n - lag) / nf;
        omega += (&gamma + gamma.transpose()) * w;
    }
    omega = (&omega + omega.transpose()) * 0.5;
    let trace = omega.trace();
    let eig = symmetric_eigenvalues(&omega);
    let tol = 1e-10 * trace.abs();
    if let Some(&bad) = eig.iter().find(|&&e| e < -tol) {
        return Err(Error::NotPsd {
            eigenvalue: bad,
            tolerance: tol,
        });
    }
    if eig.iter().any(|&e| e < 0.0) && k > 0 {
        let dec = omega.clone().symmetric_eigen();
        let clipped = dec.eigenvalues.map(|e| e.max(0.0));
        omega = &dec.eigenvectors * DMatrix::from_diagonal(&clipped) * dec.eigenvectors.transpose();
        omega = (&omega + omega.transpose()) * 0.5;
    }
    Ok(omega)
}

/// Bartlett HAC estimate with the default bandwidth. Rows of `scores` are observations.
pub fn hac_lrv(scores: &DMatrix<f64>) -> Result<LrvEstimate> {
    hac_lrv_with(scores, default_bandwidth(scores.nrows()))
}

pub fn hac_lrv_with(scores: &DMatrix<f64>, bandwidth: usize) -> Result<LrvEstimate> {
    Ok(LrvEstimate {
        matrix: kernel_lrv(scores, bandwidth)?,
        method: LrvMethod::Hac {
            kernel: Kernel::Bartlett,
            bandwidth,
        },
        n: scores.nrows(),
    })
}

/// Scores with the residual reordered so that each row pairs `z_t` with
/// `u_t, ..., u_{t-h}`. Dates without that history are skipped.
pub fn reordered_scores(fit: &ProjectionFit) -> (DMatrix<f64>, usize) {
    let h = fit.horizon;
    let lead = fit.target != FitTarget::Beta;
    let width = h + 1 + usize::from(lead);
    let mut rows = Vec::new();
    for (i, &t) in fit.dates.iter().enumerate() {
        if i < h || fit.dates[i - h] + h != t {
            continue;
        }
        let mut row = Vec::with_capacity(width);
        if lead {
            row.push(fit.instruments[(i, 0)] * fit.residuals[i]);
        }
        for k in 0..=h {
            row.push(fit.base_instrument[i] * fit.residuals[i - k]);
        }
        rows.push(row);
    }
    let dropped = fit.dates.len() - rows.len();
    let m = DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]);
    (m, dropped)
}

/// Reordered-score estimate of the score long-run variance.
pub fn hr_lrv(fit: &ProjectionFit) -> Result<LrvEstimate> {
    let (scores, dropped) = reordered_scores(fit);
    Ok(LrvEstimate {
        n: scores.nrows(),
        matrix: kernel_lrv(&scores, 0)?,
        method: LrvMethod::HrReordered { dropped },
    })
}

/// Linear combination of a projection fit's coefficients.
#[derive(Debug, Clone)]
pub enum Contrast {
    /// `psi_h = beta_h' d`.
    Hypothetical(DVector<f64>),
    /// `phi_h`, the leading coefficient of a policy-intervention fit.
    Intervention,
}

/// Two-sided standard normal critical value at `level`.
pub fn normal_critical_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("confidence level {level} not in (0, 1)")));
    }
    let n = Normal::standard();
    Ok(n.inverse_cdf(0.5 + level / 2.0))
}

/// Point estimate, standard error and normal interval for a contrast of `fit`.
pub fn se_counterfactual(
    fit: &ProjectionFit,
    lrv: &LrvEstimate,
    contrast: &Contrast,
    level: f64,
) -> Result<CounterfactualEstimate> {
    let k = fit.coef.len();
    if lrv.matrix.shape() != (k, k) {
        return Err(Error::shape(format!(
            "long-run variance is {:?}, fit has {k} coefficients",
            lrv.matrix.shape()
        )));
    }
    let weights = match (contrast, fit.target) {
        (Contrast::Hypothetical(d), FitTarget::Beta) => {
            if d.len() != k {
                return Err(Error::shape(format!(
                    "path deviation of length {}, expected {k}",
                    d.len()
                )));
            }
            d.clone()
        }
        (Contrast::Hypothetical(d), _) => {
            if d.len() != k - 1 {
                return Err(Error::shape(format!(
                    "path deviation of length {}, expected {}",
                    d.len(),
                    k - 1
                )));
            }
            let mut w = DVector::zeros(k);
            w.rows_mut(1, k - 1).copy_from(d);
            w
        }
        (Contrast::Intervention, FitTarget::Beta) => {
            return Err(Error::invalid("phi needs a policy-intervention fit"));
        }
        (Contrast::Intervention, _) => {
            let mut w = DVector::zeros(k);
            w[0] = 1.0;
            w
        }
    };
    let sigma_inv = inverse(&fit.cross_moment, "instrument-regressor cross-moment")?;
    let a = sigma_inv.transpose() * &weights;
    let var = (a.transpose() * &lrv.matrix * &a)[0].max(0.0);
    let se = var.sqrt() / (fit.n_eff() as f64).sqrt();
    let value = weights.dot(&fit.coef);
    let method = Method::LpIv;
    Ok(CounterfactualEstimate::point(fit.horizon, value, fit.beta(), method)
        .with_normal_ci(se, normal_critical_value(level)?))
}

/// Rank profile of `Theta_re` selecting the Jacobian formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PinvCase {
    FullColumnRank,
    Square,
    FullRowRank,
}

impl PinvCase {
    /// Square-and-nonsingular first, then full column, then full row rank.
    pub fn detect(theta_re: &DMatrix<f64>) -> Result<Self> {
        let (m, n) = theta_re.shape();
        let rank = numerical_rank(theta_re);
        if m == n && rank == n {
            Ok(PinvCase::Square)
        } else if rank == n {
            Ok(PinvCase::FullColumnRank)
        } else if rank == m {
            Ok(PinvCase::FullRowRank)
        } else {
            let s = svd(theta_re)?;
            Err(Error::Singular {
                what: "theta_re (rank deficient in both dimensions)",
                sigma_min: s.sigma_min(),
                sigma_max: s.sigma_max(),
            })
        }
    }

    fn consistent_with(self, theta_re: &DMatrix<f64>) -> bool {
        let (m, n) = theta_re.shape();
        let rank = numerical_rank(theta_re);
        match self {
            PinvCase::Square => m == n && rank == n,
            PinvCase::FullColumnRank => rank == n,
            PinvCase::FullRowRank => rank == m,
        }
    }
}

/// `G = d beta_{h,H} / d (vec(Theta_re)', theta_ye_h')`, an `(H+1) x ((H+1) n_e + n_e)` matrix.
pub fn jacobian_g(theta_re: &DMatrix<f64>, theta_ye_h: &DVector<f64>, case: PinvCase) -> Result<DMatrix<f64>> {
    let (m, n) = theta_re.shape();
    if theta_ye_h.len() != n {
        return Err(Error::shape(format!(
            "theta_ye has length {}, expected {n}",
            theta_ye_h.len()
        )));
    }
    if !case.consistent_with(theta_re) {
        return Err(Error::invalid(format!(
            "declared {case:?} but theta_re ({m}x{n}) has numerical rank {}",
            numerical_rank(theta_re)
        )));
    }
    let a = theta_re;
    let a_pinv = pinv(a)?;
    let k = commutation_matrix(m, n);
    let theta_t = theta_ye_h.transpose();
    let g1 = match case {
        PinvCase::Square => {
            let a_inv = inverse(a, "theta_re")?;
            -(theta_t * &a_inv).kronecker(&a_inv.transpose()) * &k
        }
        PinvCase::FullColumnRank => {
            let ata_inv = inverse(&(a.transpose() * a), "theta_re' theta_re")?;
            let left = (&theta_t * ata_inv).kronecker(&residual_maker(a)?);
            left - (&theta_t * &a_pinv).kronecker(&a_pinv.transpose()) * &k
        }
        PinvCase::FullRowRank => {
            let aat_inv = inverse(&(a * a.transpose()), "theta_re theta_re'")?;
            let proj = DMatrix::identity(n, n) - &a_pinv * a;
            let left = (&theta_t * proj).kronecker(&aat_inv);
            left - (&theta_t * &a_pinv).kronecker(&a_pinv.transpose()) * &k
        }
    };
    let mut g = DMatrix::zeros(m, m * n + n);
    g.columns_mut(0, m * n).copy_from(&g1);
    g.columns_mut(m * n, n).copy_from(&a_pinv.transpose());
    Ok(g)
}

/// Joint asymptotic distribution of `(theta_yx_h, d_po', vec(Theta_re)', theta_ye_h')'`.
#[derive(Debug, Clone)]
pub struct IrfJointDistribution {
    pub point: DVector<f64>,
    /// Possibly singular.
    pub covariance: DMatrix<f64>,
    pub horizon: usize,
    pub n_e: usize,
}

impl IrfJointDistribution {
    pub fn new(
        theta_yx_h: f64,
        d_po: &DVector<f64>,
        theta_re: &DMatrix<f64>,
        theta_ye_h: &DVector<f64>,
        covariance: DMatrix<f64>,
    ) -> Result<Self> {
        let (m, n) = theta_re.shape();
        if d_po.len() != m || theta_ye_h.len() != n {
            return Err(Error::shape("d_po / theta_ye lengths do not match theta_re"));
        }
        let len = 1 + m + m * n + n;
        if covariance.shape() != (len, len) {
            return Err(Error::shape(format!(
                "covariance is {:?}, stacked length is {len}",
                covariance.shape()
            )));
        }
        let mut point = DVector::zeros(len);
        point[0] = theta_yx_h;
        point.rows_mut(1, m).copy_from(d_po);
        point.rows_mut(1 + m, m * n).copy_from_slice(theta_re.as_slice());
        point.rows_mut(1 + m + m * n, n).copy_from(theta_ye_h);
        Ok(Self {
            point,
            covariance,
            horizon: m - 1,
            n_e: n,
        })
    }

    pub fn len(&self) -> usize {
        self.point.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point.is_empty()
    }

    pub fn theta_yx(&self) -> f64 {
        self.point[0]
    }

    pub fn d_po(&self) -> DVector<f64> {
        self.point.rows(1, self.horizon + 1).into_owned()
    }

    pub fn theta_re(&self) -> DMatrix<f64> {
        let m = self.horizon + 1;
        DMatrix::from_column_slice(m, self.n_e, self.point.rows(1 + m, m * self.n_e).as_slice())
    }

    pub fn theta_ye(&self) -> DVector<f64> {
        let m = self.horizon + 1;
        self.point.rows(1 + m + m * self.n_e, self.n_e).into_owned()
    }

    /// Block for `(vec(Theta_re), theta_ye)`.
    pub fn omega_e(&self) -> DMatrix<f64> {
        let start = 2 + self.horizon;
        let len = self.len() - start;
        self.covariance.view((start, start), (len, len)).into_owned()
    }
}

#[derive(Debug, Clone)]
pub struct DeltaVariance {
    pub avar_psi: Option<f64>,
    pub avar_phi: f64,
    pub case: PinvCase,
    pub auto_detected: bool,
    /// `sigma_min / sigma_max` of `Theta_re`; small values flag a near-singular transformation.
    pub conditioning: f64,
    /// Set when a returned variance is exactly or numerically zero.
    pub zero_variance: bool,
}

/// Delta-method asymptotic variances of `psi_h` (when `d_ht` is given) and `phi_h`.
pub fn delta_method_avar(
    dist: &IrfJointDistribution,
    d_ht: Option<&DVector<f64>>,
    case: Option<PinvCase>,
) -> Result<DeltaVariance> {
    let theta_re = dist.theta_re();
    let theta_ye = dist.theta_ye();
    let d_po = dist.d_po();
    let m = dist.horizon + 1;
    let (case, auto_detected) = match case {
        Some(c) => (c, false),
        None => (PinvCase::detect(&theta_re)?, true),
    };
    let g = jacobian_g(&theta_re, &theta_ye, case)?;
    let beta = pinv(&theta_re)?.transpose() * &theta_ye;
    let avar_psi = match d_ht {
        Some(d) => {
            if d.len() != m {
                return Err(Error::shape(format!("d_ht has length {}, expected {m}", d.len())));
            }
            let a = g.transpose() * d;
            Some((a.transpose() * dist.omega_e() * &a)[0])
        }
        None => None,
    };
    let mut j = DVector::zeros(dist.len());
    j[0] = 1.0;
    j.rows_mut(1, m).copy_from(&(-&beta));
    let dg = -(g.transpose() * &d_po);
    j.rows_mut(1 + m, dg.len()).copy_from(&dg);
    let avar_phi = (j.transpose() * &dist.covariance * &j)[0];
    let s = svd(&theta_re)?;
    let scale = dist.covariance.amax().max(f64::MIN_POSITIVE);
    let tiny = |v: f64| v.abs() <= PinvCutoff::default().scale * f64::EPSILON * scale;
    Ok(DeltaVariance {
        zero_variance: tiny(avar_phi) || avar_psi.is_some_and(tiny),
        avar_psi,
        avar_phi,
        case,
        auto_detected,
        conditioning: if s.sigma_max() > 0.0 {
            s.sigma_min() / s.sigma_max()
        } else {
            0.0
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn zero_bandwidth_is_sample_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = randn(&mut rng, 50, 3);
        let lrv = hac_lrv_with(&s, 0).unwrap();
        let mean = s.row_mean();
        let mut c = DMatrix::zeros(3, 3);
        for r in s.row_iter() {
            let d = (r - &mean).transpose();
            c += &d * d.transpose();
        }
        assert!((lrv.matrix - c / 50.0).amax() < 1e-14);
    }

    #[test]
    fn constant_scores_give_zero() {
        let s = DMatrix::from_fn(40, 2, |_, j| j as f64 + 1.5);
        assert!(hac_lrv(&s).unwrap().matrix.amax() < 1e-14);
        assert!(hac_lrv(&DMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn ma1_long_run_variance() {
        // s_t = e_t + 0.5 e_{t-1}: long-run variance (1 + 0.5)^2 = 2.25.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let e: Vec<f64> = (0..=n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = DMatrix::from_fn(n, 1, |t, _| e[t + 1] + 0.5 * e[t]);
        let lrv = hac_lrv(&s).unwrap();
        assert!((lrv.matrix[(0, 0)] / 2.25 - 1.0).abs() < 0.05, "{}", lrv.matrix[(0, 0)]);
    }

    #[test]
    fn bandwidth_rule() {
        assert_eq!(default_bandwidth(100), 4);
        assert_eq!(default_bandwidth(2000), 7);
        assert_eq!(default_bandwidth(10), 2);
    }

    #[test]
    fn critical_values() {
        assert!((normal_critical_value(0.95).unwrap() - 1.959964).abs() < 1e-5);
        assert!((normal_critical_value(0.90).unwrap() - 1.644854).abs() < 1e-5);
        assert!(normal_critical_value(1.0).is_err());
    }

    fn beta_of(a: &DMatrix<f64>, t: &DVector<f64>) -> DVector<f64> {
        pinv(a).unwrap().transpose() * t
    }

    fn fd_jacobian(a: &DMatrix<f64>, t: &DVector<f64>) -> DMatrix<f64> {
        let (m, n) = a.shape();
        let eps = 1e-6;
        let mut out = DMatrix::zeros(m, m * n + n);
        for c in 0..m * n + n {
            let bump = |sign: f64| {
                let mut a2 = a.clone();
                let mut t2 = t.clone();
                if c < m * n {
                    a2.as_mut_slice()[c] += sign * eps;
                } else {
                    t2[c - m * n] += sign * eps;
                }
                beta_of(&a2, &t2)
            };
            out.set_column(c, &((bump(1.0) - bump(-1.0)) / (2.0 * eps)));
        }
        out
    }

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax() / a.amax().max(1e-12)
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (case, rows, cols) in [
            (PinvCase::Square, 4, 4),
            (PinvCase::FullColumnRank, 5, 3),
            (PinvCase::FullRowRank, 3, 5),
        ] {
            for _ in 0..50 {
                let a = randn(&mut rng, rows, cols) + DMatrix::identity(rows, cols) * 2.0;
                let t = randn(&mut rng, cols, 1).column(0).into_owned();
                let g = jacobian_g(&a, &t, case).unwrap();
                let fd = fd_jacobian(&a, &t);
                assert!(rel_err(&g, &fd) < 1e-6, "{case:?}: {}", rel_err(&g, &fd));
            }
        }
    }

    #[test]
    fn cases_coincide_on_square_nonsingular() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let a = randn(&mut rng, 4, 4) + DMatrix::identity(4, 4) * 3.0;
            let t = randn(&mut rng, 4, 1).column(0).into_owned();
            let sq = jacobian_g(&a, &t, PinvCase::Square).unwrap();
            for c in [PinvCase::FullColumnRank, PinvCase::FullRowRank] {
                assert!((&sq - jacobian_g(&a, &t, c).unwrap()).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn identity_square_case() {
        let n = 3;
        let a = DMatrix::identity(n, n);
        let t = DVector::from_vec(vec![0.4, -1.0, 2.0]);
        let g = jacobian_g(&a, &t, PinvCase::Square).unwrap();
        assert_eq!(g.columns(n * n, n).into_owned(), DMatrix::identity(n, n));
        let expected = -(t.transpose().kronecker(&DMatrix::identity(n, n))) * commutation_matrix(n, n);
        assert!((g.columns(0, n * n) - expected).amax() < 1e-15);
        // Theta fixed: response to eta is pinv(Theta)' eta.
        let eta = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let mut dir = DVector::zeros(n * n + n);
        dir.rows_mut(n * n, n).copy_from(&eta);
        assert!((&g * dir - &eta).amax() < 1e-15);
    }

    #[test]
    fn declared_case_must_match_rank() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let t = DVector::from_vec(vec![1.0, 1.0]);
        assert!(jacobian_g(&a, &t, PinvCase::FullRowRank).is_err());
        assert!(jacobian_g(&a, &t, PinvCase::Square).is_err());
        assert_eq!(PinvCase::detect(&a).unwrap(), PinvCase::FullColumnRank);
        assert_eq!(PinvCase::detect(&a.transpose()).unwrap(), PinvCase::FullRowRank);
        let rank1 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(PinvCase::detect(&rank1).is_err());
    }

    fn dist_with(cov_scale: f64, rng: &mut ChaCha8Rng) -> IrfJointDistribution {
        let m = 3;
        let a = DMatrix::identity(m, m);
        let t = randn(rng, m, 1).column(0).into_owned();
        let d = randn(rng, m, 1).column(0).into_owned();
        let len = 1 + m + m * m + m;
        IrfJointDistribution::new(0.7, &d, &a, &t, DMatrix::identity(len, len) * cov_scale).unwrap()
    }

    #[test]
    fn zero_covariance_gives_zero_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dist = dist_with(0.0, &mut rng);
        let d = DVector::from_element(3, 1.0);
        let v = delta_method_avar(&dist, Some(&d), None).unwrap();
        assert_eq!(v.avar_phi, 0.0);
        assert_eq!(v.avar_psi, Some(0.0));
        assert!(v.zero_variance);
        assert!(v.auto_detected);
        assert_eq!(v.case, PinvCase::Square);
    }

    #[test]
    fn identity_covariance_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dist = dist_with(1.0, &mut rng);
        let v = delta_method_avar(&dist, None, Some(PinvCase::Square)).unwrap();
        let beta = dist.theta_ye();
        let g = jacobian_g(&dist.theta_re(), &dist.theta_ye(), PinvCase::Square).unwrap();
        let dg = g.transpose() * dist.d_po();
        let expected = 1.0 + beta.norm_squared() + dg.norm_squared();
        assert!((v.avar_phi - expected).abs() < 1e-12);
        assert!(!v.zero_variance);
    }

    #[test]
    fn delta_variance_matches_small_perturbation_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (m, n) = (4, 2);
        let a = randn(&mut rng, m, n) + DMatrix::identity(m, n) * 2.0;
        let t = randn(&mut rng, n, 1).column(0).into_owned();
        let d_po = randn(&mut rng, m, 1).column(0).into_owned();
        let d_ht = randn(&mut rng, m, 1).column(0).into_owned();
        let len = 1 + m + m * n + n;
        let l = randn(&mut rng, len, len) * 0.3;
        let cov = &l * l.transpose();
        let dist = IrfJointDistribution::new(0.5, &d_po, &a, &t, cov.clone()).unwrap();
        let v = delta_method_avar(&dist, Some(&d_ht), None).unwrap();
        assert_eq!(v.case, PinvCase::FullColumnRank);

        let scale = 1e-4;
        let draws = 20_000;
        let (mut psi, mut phi) = (Vec::with_capacity(draws), Vec::with_capacity(draws));
        for _ in 0..draws {
            let e: DVector<f64> = &l * DVector::from_fn(len, |_, _| StandardNormal.sample(&mut rng));
            let x = &dist.point + e * scale;
            let a2 = DMatrix::from_column_slice(m, n, x.rows(1 + m, m * n).as_slice());
            let t2 = x.rows(1 + m + m * n, n).into_owned();
            let b = beta_of(&a2, &t2);
            psi.push(b.dot(&d_ht));
            phi.push(x[0] - b.dot(&x.rows(1, m).into_owned()));
        }
        let var = |xs: &[f64]| {
            let mu = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (xs.len() - 1) as f64 / (scale * scale)
        };
        assert!((var(&psi) / v.avar_psi.unwrap() - 1.0).abs() < 0.1);
        assert!((var(&phi) / v.avar_phi - 1.0).abs() < 0.1);
    }
}
