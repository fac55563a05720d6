//! Local projections with external instruments, one scalar policy shock per period.
//!
//! Every regression variable is first partialled out on an intercept and `p`
//! lags of the full panel; the instruments themselves are used as given.

use nalgebra::{DMatrix, DVector};

use crate::analytic::hypothetical_trajectory_param;
use crate::data::{lagged_design, InstrumentSeries, PanelDataset};
use crate::error::{Error, Result, StageExt};
use crate::linalg::{lstsq, pinv, residual_maker, solve_square};
use crate::svma::{build_irf_set, SelectedShocks, SvmaModel};
use crate::var::{select_lag_order, LagCriterion};

/// Residuals of `series` after least squares on `controls`.
pub fn partial_out(series: &DMatrix<f64>, controls: &DMatrix<f64>, control_names: &[String]) -> Result<DMatrix<f64>> {
    if controls.nrows() <= controls.ncols() {
        return Err(Error::InsufficientSample(format!(
            "{} observations for {} control regressors",
            controls.nrows(),
            controls.ncols()
        )));
    }
    Ok(lstsq(controls, series, control_names)?.residuals)
}

/// AIC lag order of a VAR on the panel, searched over `1..=floor(T^(1/3))`.
pub fn default_lag_order(data: &PanelDataset) -> Result<usize> {
    let cap = ((data.len() as f64).cbrt().floor() as usize).max(1);
    select_lag_order(&data.observations, cap, LagCriterion::Aic)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitTarget {
    /// `beta_h` from the outcome on the policy path.
    Beta,
    /// `(phi_h, beta_h)` with the shock of interest recovered as `X_t` partialled out.
    Phi,
    /// `(phi_h, beta_h)` with `X_t` as regressor and its own instrument.
    PhiAlternative,
}

/// One just-identified local-projection IV regression.
#[derive(Debug, Clone)]
pub struct ProjectionFit {
    pub target: FitTarget,
    pub horizon: usize,
    pub lags: usize,
    /// Base dates `t` entering the regression (data row indices).
    pub dates: Vec<usize>,
    /// `beta_h` for [`FitTarget::Beta`]; `(phi_h, beta_h')'` otherwise.
    pub coef: DVector<f64>,
    /// `u_hat` or `v_hat` per date.
    pub residuals: DVector<f64>,
    /// Rows are the regressor vectors.
    pub regressors: DMatrix<f64>,
    /// Rows are the instrument vectors.
    pub instruments: DMatrix<f64>,
    /// `z_t` per date.
    pub base_instrument: DVector<f64>,
    /// Rows are `instrument * residual`.
    pub scores: DMatrix<f64>,
    /// `n^{-1} sum z R'`.
    pub cross_moment: DMatrix<f64>,
}

impl ProjectionFit {
    pub fn n_eff(&self) -> usize {
        self.dates.len()
    }

    /// `phi_h` for the policy-intervention fits.
    pub fn phi(&self) -> Option<f64> {
        match self.target {
            FitTarget::Beta => None,
            _ => Some(self.coef[0]),
        }
    }

    pub fn beta(&self) -> DVector<f64> {
        match self.target {
            FitTarget::Beta => self.coef.clone(),
            _ => self.coef.rows(1, self.coef.len() - 1).into_owned(),
        }
    }
}

fn usable_dates(t_len: usize, h: usize, p: usize, z: &InstrumentSeries, zx: Option<&InstrumentSeries>) -> Vec<usize> {
    (p..t_len.saturating_sub(h))
        .filter(|&t| (t..=t + h).all(|s| z.get(s).is_some()))
        .filter(|&t| zx.is_none_or(|zx| zx.get(t).is_some()))
        .collect()
}

fn run_fit(
    data: &PanelDataset,
    z: &InstrumentSeries,
    zx: Option<&InstrumentSeries>,
    h: usize,
    p: usize,
    target: FitTarget,
) -> Result<ProjectionFit> {
    if p == 0 {
        return Err(Error::invalid("local projections need at least one control lag"));
    }
    if z.len() != data.len() || zx.is_some_and(|zx| zx.len() != data.len()) {
        return Err(Error::shape("instrument length differs from the panel"));
    }
    let roles = data.roles()?;
    let dates = usable_dates(data.len(), h, p, z, zx);
    let (controls, names) = lagged_design(&data.observations, &dates, p, &data.names, true);
    let n = dates.len();
    if n <= controls.ncols() + h + 2 {
        return Err(Error::InsufficientSample(format!(
            "{n} usable dates at horizon {h} with {p} lags"
        )));
    }

    // Columns: Y_{t+h}, R_t..R_{t+h}, X_t.
    let obs = &data.observations;
    let mut series = DMatrix::zeros(n, h + 3);
    for (i, &t) in dates.iter().enumerate() {
        series[(i, 0)] = obs[(t + h, roles.y)];
        for k in 0..=h {
            series[(i, 1 + k)] = obs[(t + k, roles.r)];
        }
        series[(i, h + 2)] = obs[(t, roles.x)];
    }
    let resid = partial_out(&series, &controls, &names).stage("partialling out controls")?;
    let y = resid.column(0).into_owned();
    let r_perp = resid.columns(1, h + 1).into_owned();
    let x_perp = resid.column(h + 2).into_owned();

    let z_path = DMatrix::from_fn(n, h + 1, |i, k| z.get(dates[i] + k).expect("usable date"));
    let base_instrument = z_path.column(0).into_owned();
    let (regressors, instruments) = match target {
        FitTarget::Beta => (r_perp, z_path),
        FitTarget::Phi | FitTarget::PhiAlternative => {
            let lead_inst = match (target, zx) {
                (FitTarget::PhiAlternative, Some(zx)) => {
                    DVector::from_fn(n, |i, _| zx.get(dates[i]).expect("usable date"))
                }
                _ => x_perp.clone(),
            };
            let mut reg = DMatrix::zeros(n, h + 2);
            reg.set_column(0, &x_perp);
            reg.columns_mut(1, h + 1).copy_from(&r_perp);
            let mut inst = DMatrix::zeros(n, h + 2);
            inst.set_column(0, &lead_inst);
            inst.columns_mut(1, h + 1).copy_from(&z_path);
            (reg, inst)
        }
    };
    let zr = instruments.transpose() * &regressors;
    let zy = instruments.transpose() * &y;
    let zy = DMatrix::from_column_slice(zy.len(), 1, zy.as_slice());
    let coef = solve_square(&zr, &zy, "instrument-regressor cross-moment")
        .stage("local projection IV")?
        .column(0)
        .into_owned();
    let residuals = &y - &regressors * &coef;
    let mut scores = instruments.clone();
    for (i, mut row) in scores.row_iter_mut().enumerate() {
        row *= residuals[i];
    }
    Ok(ProjectionFit {
        target,
        horizon: h,
        lags: p,
        dates,
        coef,
        residuals,
        regressors,
        instruments,
        base_instrument,
        scores,
        cross_moment: zr / n as f64,
    })
}

/// `beta_h` by LP-IV with instruments `(z_t, ..., z_{t+h})`.
pub fn estimate_beta(data: &PanelDataset, instrument: &InstrumentSeries, h: usize, p: usize) -> Result<ProjectionFit> {
    run_fit(data, instrument, None, h, p, FitTarget::Beta)
}

/// `phi_h` with the shock of interest recovered as the partialled-out `X_t`.
pub fn estimate_phi(data: &PanelDataset, instrument: &InstrumentSeries, h: usize, p: usize) -> Result<ProjectionFit> {
    run_fit(data, instrument, None, h, p, FitTarget::Phi)
}

/// `phi_h` with `X_t` as the regressor of interest instrumented by `zx`.
///
/// Valid only when the policy shock has no contemporaneous effect on `X_t`.
pub fn estimate_phi_alternative(
    data: &PanelDataset,
    instrument: &InstrumentSeries,
    zx: &InstrumentSeries,
    h: usize,
    p: usize,
) -> Result<ProjectionFit> {
    run_fit(data, instrument, Some(zx), h, p, FitTarget::PhiAlternative)
}

/// Population counterparts of the projection moments in a known SVMA.
#[derive(Debug, Clone)]
pub struct MomentCheck {
    /// `E[z R']^+ E[z Y]`.
    pub beta_from_moments: DVector<f64>,
    /// `pinv(Theta_re)' theta_ye_h`.
    pub beta_analytic: DVector<f64>,
    /// `1 + d_po' M_Theta d_po`.
    pub mu_theta: f64,
    /// `mu_theta * v(1)' E[z_x R_x']^+ E[z_x Y]`, when a shock of interest exists.
    pub phi_from_moments: Option<f64>,
    pub phi_analytic: Option<f64>,
}

impl MomentCheck {
    pub fn beta_gap(&self) -> f64 {
        (&self.beta_from_moments - &self.beta_analytic).amax()
    }

    pub fn phi_gap(&self) -> Option<f64> {
        Some((self.phi_from_moments? - self.phi_analytic?).abs())
    }
}

/// Evaluates the population IV moments of `z = Pi eps_S + eta` in `model`
/// and compares the recovered parameters with their closed forms.
pub fn population_moment_check(
    model: &SvmaModel,
    selected: &SelectedShocks,
    pi: &DMatrix<f64>,
    h: usize,
    horizon: usize,
) -> Result<MomentCheck> {
    let irf = build_irf_set(model, horizon, selected)?;
    let n_e = irf.n_e();
    if pi.shape() != (n_e, n_e) {
        return Err(Error::shape(format!(
            "instrument loadings are {:?}, expected {n_e}x{n_e}",
            pi.shape()
        )));
    }
    if h > horizon {
        return Err(Error::invalid(format!("horizon {h} exceeds H = {horizon}")));
    }
    let var = model.shock_variances();
    let sigma_s = DMatrix::from_fn(n_e, n_e, |i, j| if i == j { var[selected.entries()[i].1] } else { 0.0 });
    let pis = pi * sigma_s;
    let e_zr = &pis * irf.theta_re.transpose();
    let e_zy = &pis * &irf.theta_ye_by_h[h];
    let beta_from_moments = pinv(&e_zr)? * &e_zy;
    let beta_analytic = hypothetical_trajectory_param(&irf, h)?;

    let (mu_theta, phi_from_moments, phi_analytic) = match (&irf.theta_yx, &irf.d_po, model.shock_of_interest()) {
        (Some(yx), Some(dpo), Some(x)) => {
            let m_theta = residual_maker(&irf.theta_re)?;
            let mu = 1.0 + (dpo.transpose() * &m_theta * dpo)[0];
            let sx = var[x];
            let k = horizon + 2;
            let mut m = DMatrix::zeros(n_e + 1, k);
            m[(0, 0)] = sx;
            for j in 0..=horizon {
                m[(0, 1 + j)] = sx * dpo[j];
            }
            m.view_mut((1, 1), (n_e, horizon + 1)).copy_from(&e_zr);
            let mut b = DVector::zeros(n_e + 1);
            b[0] = sx * yx[h];
            b.rows_mut(1, n_e).copy_from(&e_zy);
            let sol = pinv(&m)? * b;
            let phi_analytic = yx[h] - beta_analytic.dot(dpo);
            (mu, Some(mu * sol[0]), Some(phi_analytic))
        }
        _ => (1.0, None, None),
    };
    Ok(MomentCheck {
        beta_from_moments,
        beta_analytic,
        mu_theta,
        phi_from_moments,
        phi_analytic,
    })
}
