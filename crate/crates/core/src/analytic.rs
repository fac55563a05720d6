//! Closed-form counterfactuals from known impulse responses.
//!
//! Minimal-norm shock deviations come from the Moore-Penrose inverse of the
//! policy response matrix; everything else is a linear map of that inverse.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, ensure_finite_vec, pinv, solve_square, symmetric_eigenvalues};
use crate::svma::ImpulseResponseSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    /// Baseline minus hypothetical policy path.
    HypotheticalTrajectory,
    /// Policy response to the shock of interest.
    PolicyIntervention,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyPathDeviation {
    pub kind: PathKind,
    pub values: DVector<f64>,
}

impl PolicyPathDeviation {
    pub fn new(kind: PathKind, values: DVector<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::shape("policy path deviation is empty"));
        }
        ensure_finite_vec(&values, "policy path deviation")?;
        Ok(Self { kind, values })
    }

    pub fn hypothetical(values: DVector<f64>) -> Result<Self> {
        Self::new(PathKind::HypotheticalTrajectory, values)
    }

    /// `d = r - r_tilde` from a baseline and a hypothetical policy path.
    pub fn from_paths(baseline: &DVector<f64>, hypothetical: &DVector<f64>) -> Result<Self> {
        if baseline.len() != hypothetical.len() {
            return Err(Error::shape("baseline and hypothetical paths differ in length"));
        }
        Self::hypothetical(baseline - hypothetical)
    }

    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShockDeviation {
    pub values: DVector<f64>,
    /// `||d - Theta_re delta||`.
    pub fit_residual_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Analytic,
    LpIv,
    Delta,
    Simulated,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::LpIv => "lp_iv",
            Method::Delta => "delta",
            Method::Simulated => "simulated",
        }
    }
}

/// `total = direct + indirect`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub total: f64,
    pub direct: f64,
    pub indirect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualEstimate {
    pub horizon: usize,
    pub value: f64,
    pub beta: DVector<f64>,
    pub decomposition: Option<Decomposition>,
    pub se: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub method: Method,
}

impl CounterfactualEstimate {
    pub fn point(horizon: usize, value: f64, beta: DVector<f64>, method: Method) -> Self {
        Self {
            horizon,
            value,
            beta,
            decomposition: None,
            se: None,
            ci: None,
            method,
        }
    }

    /// Attaches a symmetric normal interval `value +- z * se`.
    pub fn with_normal_ci(mut self, se: f64, z: f64) -> Self {
        self.se = Some(se);
        self.ci = Some((self.value - z * se, self.value + z * se));
        self
    }
}

/// Weight matrix of the quadratic policymaker utility `(y - Theta delta)' A (y - Theta delta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilitySpec {
    pub weight: DMatrix<f64>,
}

impl UtilitySpec {
    pub fn new(weight: DMatrix<f64>) -> Result<Self> {
        if weight.nrows() != weight.ncols() {
            return Err(Error::shape("utility weight matrix must be square"));
        }
        ensure_finite(&weight, "utility weights")?;
        let scale = weight.abs().max().max(1.0);
        if (&weight - weight.transpose()).abs().max() > 1e-12 * scale {
            return Err(Error::invalid("utility weight matrix must be symmetric"));
        }
        Ok(Self { weight })
    }

    /// `diag[1, alpha, ..., alpha^H]`. Positive weights make the utility convex
    /// in delta, so this fails the maximization check unless negated.
    pub fn discounted(alpha: f64, horizon: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::invalid(format!("discount {alpha} outside (0, 1]")));
        }
        let d = DVector::from_iterator(horizon + 1, (0..=horizon).map(|h| alpha.powi(h as i32)));
        Self::new(DMatrix::from_diagonal(&d))
    }

    /// `-diag[1, alpha, ..., alpha^H]`: a discounted squared-gap loss expressed as a utility.
    pub fn discounted_loss(alpha: f64, horizon: usize) -> Result<Self> {
        let mut s = Self::discounted(alpha, horizon)?;
        s.weight = -s.weight;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesiredPath {
    pub delta: DVector<f64>,
    /// `r - Theta_re delta`.
    pub policy_path: DVector<f64>,
}

/// `delta = pinv(Theta_re) d`, the minimal-norm least-squares shock deviation.
pub fn solve_shock_deviation(theta_re: &DMatrix<f64>, d: &PolicyPathDeviation) -> Result<ShockDeviation> {
    if theta_re.nrows() != d.values.len() {
        return Err(Error::shape(format!(
            "theta_re has {} rows, deviation has length {}",
            theta_re.nrows(),
            d.values.len()
        )));
    }
    let values = pinv(theta_re)? * &d.values;
    let fit_residual_norm = (&d.values - theta_re * &values).norm();
    Ok(ShockDeviation {
        values,
        fit_residual_norm,
    })
}

fn check_horizon(irf: &ImpulseResponseSet, h: usize) -> Result<()> {
    if h > irf.horizon {
        Err(Error::invalid(format!("horizon {h} exceeds H = {}", irf.horizon)))
    } else {
        Ok(())
    }
}

/// `beta_{h,H} = pinv(Theta_re)' theta_ye_h`.
pub fn hypothetical_trajectory_param(irf: &ImpulseResponseSet, h: usize) -> Result<DVector<f64>> {
    check_horizon(irf, h)?;
    Ok(pinv(&irf.theta_re)?.transpose() * &irf.theta_ye_by_h[h])
}

/// `beta_{h,H}` for every h, sharing one pseudo-inverse.
pub fn hypothetical_trajectory_params(irf: &ImpulseResponseSet) -> Result<Vec<DVector<f64>>> {
    let pt = pinv(&irf.theta_re)?.transpose();
    Ok(irf.theta_ye_by_h.iter().map(|v| &pt * v).collect())
}

/// `psi_h = beta' d`.
pub fn hypothetical_output_gap(
    h: usize,
    beta: &DVector<f64>,
    d: &PolicyPathDeviation,
) -> Result<CounterfactualEstimate> {
    if d.kind != PathKind::HypotheticalTrajectory {
        return Err(Error::invalid("output gap needs a hypothetical-trajectory deviation"));
    }
    if beta.len() != d.values.len() {
        return Err(Error::shape(format!(
            "beta has length {}, deviation has length {}",
            beta.len(),
            d.values.len()
        )));
    }
    Ok(CounterfactualEstimate::point(
        h,
        beta.dot(&d.values),
        beta.clone(),
        Method::Analytic,
    ))
}

/// `phi_h = theta_yx_h - beta' d_po`, with the total/direct/indirect split.
pub fn policy_intervention_effect(irf: &ImpulseResponseSet, h: usize) -> Result<CounterfactualEstimate> {
    check_horizon(irf, h)?;
    let (Some(theta_yx), Some(d_po)) = (&irf.theta_yx, &irf.d_po) else {
        return Err(Error::Roles(
            "policy intervention needs responses to a shock of interest".into(),
        ));
    };
    let beta = hypothetical_trajectory_param(irf, h)?;
    let total = theta_yx[h];
    let indirect = beta.dot(d_po);
    let direct = total - indirect;
    let mut est = CounterfactualEstimate::point(h, direct, beta, Method::Analytic);
    est.decomposition = Some(Decomposition {
        total,
        direct,
        indirect,
    });
    Ok(est)
}

fn check_desired_shapes(
    theta_ye: &DMatrix<f64>,
    theta_re: &DMatrix<f64>,
    y: &DVector<f64>,
    r: &DVector<f64>,
) -> Result<()> {
    let rows = theta_ye.nrows();
    if theta_re.nrows() != rows || theta_re.ncols() != theta_ye.ncols() {
        return Err(Error::shape(format!(
            "theta_ye is {:?} but theta_re is {:?}",
            theta_ye.shape(),
            theta_re.shape()
        )));
    }
    if y.len() != rows || r.len() != rows {
        return Err(Error::shape(format!(
            "paths must have length {rows}, got y {} and r {}",
            y.len(),
            r.len()
        )));
    }
    Ok(())
}

/// Shock deviation that moves the outcome path from `baseline_y` to `target_y`.
pub fn desired_path_for_target(
    theta_ye: &DMatrix<f64>,
    theta_re: &DMatrix<f64>,
    baseline_y: &DVector<f64>,
    target_y: &DVector<f64>,
    baseline_r: &DVector<f64>,
) -> Result<DesiredPath> {
    check_desired_shapes(theta_ye, theta_re, baseline_y, baseline_r)?;
    if target_y.len() != baseline_y.len() {
        return Err(Error::shape("target and baseline outcome paths differ in length"));
    }
    let delta = pinv(theta_ye)? * (baseline_y - target_y);
    let policy_path = baseline_r - theta_re * &delta;
    Ok(DesiredPath { delta, policy_path })
}

/// Shock deviation maximizing `U(delta) = (y - Theta delta)' A (y - Theta delta)`.
///
/// The maximizer exists only when `Theta' A Theta` is negative definite; it
/// then solves the stationarity condition `Theta' A Theta delta = Theta' A y`.
pub fn desired_path_for_utility(
    theta_ye: &DMatrix<f64>,
    theta_re: &DMatrix<f64>,
    baseline_y: &DVector<f64>,
    baseline_r: &DVector<f64>,
    spec: &UtilitySpec,
) -> Result<DesiredPath> {
    check_desired_shapes(theta_ye, theta_re, baseline_y, baseline_r)?;
    if spec.weight.nrows() != theta_ye.nrows() {
        return Err(Error::shape(format!(
            "utility weights are {}x{}, horizon needs {}",
            spec.weight.nrows(),
            spec.weight.ncols(),
            theta_ye.nrows()
        )));
    }
    let at = &spec.weight * theta_ye;
    let hess = theta_ye.transpose() * &at;
    let eig = symmetric_eigenvalues(&hess);
    let max_eigenvalue = eig.max();
    if max_eigenvalue >= -1e-10 * hess.norm() {
        return Err(Error::NotNegativeDefinite { max_eigenvalue });
    }
    let grad = at.transpose() * baseline_y;
    let grad_rhs = DMatrix::from_column_slice(grad.len(), 1, grad.as_slice());
    let delta = solve_square(&hess, &grad_rhs, "utility Hessian")?
        .column(0)
        .into_owned();
    let policy_path = baseline_r - theta_re * &delta;
    Ok(DesiredPath { delta, policy_path })
}
