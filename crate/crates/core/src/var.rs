//! Reduced-form VARs, external-instrument identification and the wild bootstrap.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{lagged_design, InstrumentSeries};
use crate::error::{Error, Result};
use crate::linalg::{inverse, lstsq};
use crate::svma::var_to_ma;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VarOptions {
    /// Adds a linear time trend to every equation.
    pub trend: bool,
}

/// Least-squares VAR(p) with intercept.
#[derive(Debug, Clone)]
pub struct VarFit {
    pub lags: usize,
    pub intercept: DVector<f64>,
    pub trend: Option<DVector<f64>>,
    /// `A_1..A_p`, each `n x n`.
    pub coeffs: Vec<DMatrix<f64>>,
    /// Residual rows for data rows `p..T`.
    pub residuals: DMatrix<f64>,
    /// Degrees-of-freedom adjusted residual covariance.
    pub resid_cov: DMatrix<f64>,
    /// `(X'X)^{-1}` of the common regressor matrix.
    pub xtx_inv: DMatrix<f64>,
}

impl VarFit {
    pub fn n_vars(&self) -> usize {
        self.intercept.len()
    }

    /// Data row of residual row 0.
    pub fn first_row(&self) -> usize {
        self.lags
    }

    /// Deterministic part plus lagged terms at data row `t`, given `history(t - k)`.
    fn conditional_mean(&self, t: usize, history: &DMatrix<f64>) -> DVector<f64> {
        let mut m = self.intercept.clone();
        if let Some(tr) = &self.trend {
            m += tr * t as f64;
        }
        for (k, a) in self.coeffs.iter().enumerate() {
            m.gemv(1.0, a, &history.row(t - k - 1).transpose(), 1.0);
        }
        m
    }

    /// Standard errors of `A_1..A_p` entries, same layout as `coeffs`.
    pub fn coef_std_errors(&self) -> Vec<DMatrix<f64>> {
        let n = self.n_vars();
        let offset = 1 + usize::from(self.trend.is_some());
        (0..self.lags)
            .map(|k| {
                DMatrix::from_fn(n, n, |i, j| {
                    let c = offset + k * n + j;
                    (self.resid_cov[(i, i)] * self.xtx_inv[(c, c)]).sqrt()
                })
            })
            .collect()
    }
}

fn design(obs: &DMatrix<f64>, dates: &[usize], p: usize, trend: bool) -> (DMatrix<f64>, Vec<String>) {
    let names: Vec<String> = (0..obs.ncols()).map(|j| format!("w{j}")).collect();
    let (x, cols) = lagged_design(obs, dates, p, &names, true);
    if !trend {
        return (x, cols);
    }
    let mut xt = DMatrix::zeros(x.nrows(), x.ncols() + 1);
    xt.column_mut(0).copy_from(&x.column(0));
    for (r, &t) in dates.iter().enumerate() {
        xt[(r, 1)] = t as f64;
    }
    xt.columns_mut(2, x.ncols() - 1).copy_from(&x.columns(1, x.ncols() - 1));
    let mut names = vec![cols[0].clone(), "trend".to_string()];
    names.extend_from_slice(&cols[1..]);
    (xt, names)
}

pub fn fit_var(obs: &DMatrix<f64>, p: usize) -> Result<VarFit> {
    fit_var_with(obs, p, VarOptions::default())
}

pub fn fit_var_with(obs: &DMatrix<f64>, p: usize, options: VarOptions) -> Result<VarFit> {
    fit_var_on(obs, p, p, options)
}

/// Fits on data rows `start..T`, `start >= p`.
fn fit_var_on(obs: &DMatrix<f64>, p: usize, start: usize, options: VarOptions) -> Result<VarFit> {
    if p == 0 {
        return Err(Error::invalid("VAR lag order must be at least 1"));
    }
    let (t_len, n) = obs.shape();
    if t_len <= start || t_len - start <= n * p + 1 + usize::from(options.trend) {
        return Err(Error::InsufficientSample(format!(
            "{} usable observations for a {n}-variable VAR({p})",
            t_len.saturating_sub(start)
        )));
    }
    let dates: Vec<usize> = (start..t_len).collect();
    let (x, names) = design(obs, &dates, p, options.trend);
    let y = obs.rows(start, t_len - start).into_owned();
    let fit = lstsq(&x, &y, &names)?;
    let b = fit.coef; // k x n
    let offset = 1 + usize::from(options.trend);
    let intercept = b.row(0).transpose();
    let trend = options.trend.then(|| b.row(1).transpose());
    let coeffs = (0..p).map(|k| b.rows(offset + k * n, n).transpose()).collect();
    let dof = (dates.len() - x.ncols()) as f64;
    let resid_cov = fit.residuals.transpose() * &fit.residuals / dof;
    let xtx_inv = inverse(&(x.transpose() * &x), "VAR regressor cross-product")?;
    Ok(VarFit {
        lags: p,
        intercept,
        trend,
        coeffs,
        residuals: fit.residuals,
        resid_cov,
        xtx_inv,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagCriterion {
    Aic,
    Hq,
    Sc,
    Fpe,
}

/// Criterion-minimizing lag order over `1..=p_max`, all fits on rows `p_max..T`.
pub fn select_lag_order(obs: &DMatrix<f64>, p_max: usize, criterion: LagCriterion) -> Result<usize> {
    if p_max == 0 {
        return Err(Error::invalid("maximum lag order must be at least 1"));
    }
    let n = obs.ncols() as f64;
    let mut best = (1, f64::INFINITY);
    for p in 1..=p_max {
        let fit = fit_var_on(obs, p, p_max, VarOptions::default())?;
        let big_n = fit.residuals.nrows() as f64;
        let sigma = fit.residuals.transpose() * &fit.residuals / big_n;
        let det = sigma.determinant();
        if det <= 0.0 {
            return Err(Error::Singular {
                what: "residual covariance in lag selection",
                sigma_min: 0.0,
                sigma_max: sigma.abs().max(),
            });
        }
        let k = n * (n * p as f64 + 1.0);
        let value = match criterion {
            LagCriterion::Aic => det.ln() + 2.0 * k / big_n,
            LagCriterion::Hq => det.ln() + 2.0 * big_n.ln().ln() * k / big_n,
            LagCriterion::Sc => det.ln() + big_n.ln() * k / big_n,
            LagCriterion::Fpe => {
                let m = n * p as f64 + 1.0;
                ((big_n + m) / (big_n - m)).powf(n) * det
            }
        };
        if value < best.1 {
            best = (p, value);
        }
    }
    Ok(best.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    /// Unit-variance structural shock.
    UnitShock,
    /// Impact on variable `var` equals `size`.
    UnitImpact { var: usize, size: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentifyOptions {
    pub normalization: Normalization,
    /// Smallest acceptable first-stage F of the instrument on the residuals.
    pub min_first_stage_f: f64,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        Self {
            normalization: Normalization::UnitShock,
            min_first_stage_f: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiedShockColumn {
    pub impact: DVector<f64>,
    pub normalization: Normalization,
    pub first_stage_f: f64,
    /// Number of residual rows where the instrument is observed.
    pub overlap: usize,
}

/// Impact column proportional to the instrument-residual covariance.
pub fn identify_shock_iv(
    fit: &VarFit,
    instrument: &InstrumentSeries,
    options: &IdentifyOptions,
) -> Result<IdentifiedShockColumn> {
    let n = fit.n_vars();
    let rows: Vec<(usize, f64)> = (0..fit.residuals.nrows())
        .filter_map(|r| instrument.get(r + fit.first_row()).map(|z| (r, z)))
        .collect();
    let m = rows.len();
    if m <= n + 1 {
        return Err(Error::InsufficientSample(format!(
            "instrument overlaps {m} residual rows, need more than {}",
            n + 1
        )));
    }
    let mf = m as f64;
    let z_mean = rows.iter().map(|(_, z)| z).sum::<f64>() / mf;
    let mut u = DMatrix::zeros(m, n);
    let mut z = DMatrix::zeros(m, 1);
    for (i, &(r, zv)) in rows.iter().enumerate() {
        u.set_row(i, &fit.residuals.row(r));
        z[(i, 0)] = zv - z_mean;
    }
    let u_mean = u.row_mean();
    for mut row in u.row_iter_mut() {
        row -= &u_mean;
    }
    let cov_uz = u.transpose() * &z / mf;
    let cov_uz = cov_uz.column(0).into_owned();
    let scale = (z.norm_squared() / mf).sqrt() * u.column_iter().map(|c| c.norm()).fold(0.0, f64::max) / mf.sqrt();
    if scale == 0.0 || cov_uz.amax() <= 1e-12 * scale {
        return Err(Error::IrrelevantInstrument(
            "instrument covariance with every residual is numerically zero".into(),
        ));
    }

    // First stage: z on (1, u).
    let mut x = DMatrix::from_element(m, n + 1, 1.0);
    x.columns_mut(1, n).copy_from(&u);
    let names: Vec<String> = std::iter::once("const".to_string())
        .chain((0..n).map(|j| format!("u{j}")))
        .collect();
    let fs = lstsq(&x, &z, &names)?;
    let ssr = fs.residuals.norm_squared();
    let sst = z.norm_squared();
    let df = (m - n - 1) as f64;
    let first_stage_f = if ssr <= 1e-14 * sst {
        f64::INFINITY
    } else {
        ((sst - ssr) / n as f64) / (ssr / df)
    };
    if first_stage_f < options.min_first_stage_f {
        return Err(Error::IrrelevantInstrument(format!(
            "first-stage F = {first_stage_f:.3} below {}",
            options.min_first_stage_f
        )));
    }

    let impact = match options.normalization {
        Normalization::UnitShock => {
            let sigma_u = u.transpose() * &u / mf;
            let w = inverse(&sigma_u, "residual covariance")? * &cov_uz;
            let q = cov_uz.dot(&w);
            if q <= 0.0 {
                return Err(Error::IrrelevantInstrument(
                    "non-positive instrument signal in unit-shock scaling".into(),
                ));
            }
            cov_uz / q.sqrt()
        }
        Normalization::UnitImpact { var, size } => {
            if var >= n {
                return Err(Error::invalid(format!("normalization variable {var} out of range")));
            }
            let pivot = cov_uz[var];
            if pivot.abs() <= 1e-12 * cov_uz.amax() {
                return Err(Error::IrrelevantInstrument(format!(
                    "instrument does not move variable {var}, cannot normalize its impact"
                )));
            }
            let mut b = cov_uz * (size / pivot);
            b[var] = size;
            b
        }
    };
    Ok(IdentifiedShockColumn {
        impact,
        normalization: options.normalization,
        first_stage_f,
        overlap: m,
    })
}

/// `Psi_h b` for `h = 0..=horizon`.
pub fn irf_from_var(fit: &VarFit, column: &IdentifiedShockColumn, horizon: usize) -> Vec<DVector<f64>> {
    let b = DMatrix::from_column_slice(column.impact.len(), 1, column.impact.as_slice());
    var_to_ma(&fit.coeffs, &b, horizon)
        .into_iter()
        .map(|m| m.column(0).into_owned())
        .collect()
}

#[derive(Debug, Clone)]
pub struct BootstrapOptions {
    pub n_boot: usize,
    pub seed: u64,
    pub var: VarOptions,
    pub identify: IdentifyOptions,
}

impl BootstrapOptions {
    pub fn new(n_boot: usize, seed: u64) -> Self {
        Self {
            n_boot,
            seed,
            var: VarOptions::default(),
            identify: IdentifyOptions::default(),
        }
    }
}

/// Replication draws of a vector statistic, in replication order.
#[derive(Debug, Clone)]
pub struct BootstrapDraws {
    pub draws: Vec<DVector<f64>>,
    pub dropped: usize,
    pub requested: usize,
}

/// Lower and upper percentile band of each statistic entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Bands {
    pub level: f64,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

/// Linear-interpolation sample quantile of a sorted slice.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl BootstrapDraws {
    pub fn bands(&self, level: f64) -> Result<Bands> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::invalid(format!("level {level} outside (0, 1)")));
        }
        let first = self
            .draws
            .first()
            .ok_or_else(|| Error::InsufficientSample("no bootstrap draws".into()))?;
        let k = first.len();
        let tail = (1.0 - level) / 2.0;
        let mut lower = DVector::zeros(k);
        let mut upper = DVector::zeros(k);
        let mut col = Vec::with_capacity(self.draws.len());
        for i in 0..k {
            col.clear();
            col.extend(self.draws.iter().map(|d| d[i]));
            col.sort_by(f64::total_cmp);
            lower[i] = quantile_sorted(&col, tail);
            upper[i] = quantile_sorted(&col, 1.0 - tail);
        }
        Ok(Bands { level, lower, upper })
    }

    /// Sample covariance of the draws.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let n = self.draws.len();
        if n < 2 {
            return Err(Error::InsufficientSample("need two draws for a covariance".into()));
        }
        let k = self.draws[0].len();
        let mean = self.draws.iter().fold(DVector::zeros(k), |a, d| a + d) / n as f64;
        let mut cov = DMatrix::zeros(k, k);
        for d in &self.draws {
            let c = d - &mean;
            cov.ger(1.0, &c, &c, 1.0);
        }
        Ok(cov / (n - 1) as f64)
    }
}

/// Wild-bootstrap sample: residual rows and every instrument are multiplied
/// by the same Rademacher draw, and the data are rebuilt recursively from the
/// first `p` actual observations.
fn bootstrap_sample(
    obs: &DMatrix<f64>,
    fit: &VarFit,
    instruments: &[&InstrumentSeries],
    rng: &mut ChaCha8Rng,
) -> Result<(DMatrix<f64>, Vec<InstrumentSeries>)> {
    let (t_len, _) = obs.shape();
    let p = fit.lags;
    let mut sample = obs.clone();
    let mut signs = vec![0.0; t_len];
    for t in p..t_len {
        let e = if rng.random::<bool>() { 1.0 } else { -1.0 };
        signs[t] = e;
        let row = fit.conditional_mean(t, &sample) + fit.residuals.row(t - p).transpose() * e;
        sample.set_row(t, &row.transpose());
    }
    let zs = instruments
        .iter()
        .map(|z| {
            InstrumentSeries::new(
                (0..z.len())
                    .map(|t| z.get(t).map(|v| v * if t >= p { signs[t] } else { 1.0 }))
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((sample, zs))
}

/// Runs the wild bootstrap and evaluates `statistic` on every replication.
///
/// The statistic receives the re-fitted VAR and the re-identified columns
/// (one per instrument, each re-normalized). Failed replications are dropped
/// and counted; more than 10% failures is an error.
pub fn wild_bootstrap<F>(
    obs: &DMatrix<f64>,
    p: usize,
    instruments: &[&InstrumentSeries],
    options: &BootstrapOptions,
    statistic: F,
) -> Result<BootstrapDraws>
where
    F: Fn(&VarFit, &[IdentifiedShockColumn]) -> Result<DVector<f64>> + Sync,
{
    if options.n_boot < 2 {
        return Err(Error::invalid("bootstrap needs at least 2 replications"));
    }
    if instruments.iter().any(|z| z.len() != obs.nrows()) {
        return Err(Error::shape("instrument length differs from the panel"));
    }
    let fit = fit_var_with(obs, p, options.var)?;
    let one = |rep: usize| -> Result<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        rng.set_stream(rep as u64);
        let (sample, zs) = bootstrap_sample(obs, &fit, instruments, &mut rng)?;
        let refit = fit_var_with(&sample, p, options.var)?;
        let cols = zs
            .iter()
            .map(|z| identify_shock_iv(&refit, z, &options.identify))
            .collect::<Result<Vec<_>>>()?;
        let s = statistic(&refit, &cols)?;
        if s.iter().all(|v| v.is_finite()) {
            Ok(s)
        } else {
            Err(Error::NonFinite("bootstrap statistic"))
        }
    };
    #[cfg(feature = "parallel")]
    let results: Vec<Result<DVector<f64>>> = {
        use rayon::prelude::*;
        (0..options.n_boot).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<DVector<f64>>> = (0..options.n_boot).map(one).collect();

    let requested = options.n_boot;
    let draws: Vec<DVector<f64>> = results.into_iter().filter_map(|r| r.ok()).collect();
    let dropped = requested - draws.len();
    if dropped * 10 > requested {
        return Err(Error::TooManyFailures {
            failed: dropped,
            total: requested,
        });
    }
    Ok(BootstrapDraws {
        draws,
        dropped,
        requested,
    })
}

/// IRF stacked horizon-major: entry `h * n + i` is variable `i` at horizon `h`.
pub fn stack_irf(irf: &[DVector<f64>]) -> DVector<f64> {
    let n = irf.first().map_or(0, |v| v.len());
    DVector::from_iterator(irf.len() * n, irf.iter().flat_map(|v| v.iter().copied()))
}

/// Per-horizon percentile bands of the SVAR-IV impulse responses.
#[derive(Debug, Clone)]
pub struct IrfBands {
    pub point: Vec<DVector<f64>>,
    pub lower: Vec<DVector<f64>>,
    pub upper: Vec<DVector<f64>>,
    pub level: f64,
    pub dropped: usize,
}

pub fn wild_bootstrap_bands(
    obs: &DMatrix<f64>,
    p: usize,
    instrument: &InstrumentSeries,
    horizon: usize,
    options: &BootstrapOptions,
    level: f64,
) -> Result<IrfBands> {
    let fit = fit_var_with(obs, p, options.var)?;
    let col = identify_shock_iv(&fit, instrument, &options.identify)?;
    let point = irf_from_var(&fit, &col, horizon);
    let draws = wild_bootstrap(obs, p, &[instrument], options, |f, cols| {
        Ok(stack_irf(&irf_from_var(f, &cols[0], horizon)))
    })?;
    let bands = draws.bands(level)?;
    let n = obs.ncols();
    let split =
        |v: &DVector<f64>| -> Vec<DVector<f64>> { (0..=horizon).map(|h| v.rows(h * n, n).into_owned()).collect() };
    Ok(IrfBands {
        point,
        lower: split(&bands.lower),
        upper: split(&bands.upper),
        level,
        dropped: draws.dropped,
    })
}
