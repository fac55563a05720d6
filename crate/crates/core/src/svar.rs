//! Fully specified linear structural VAR built from a reduced-form fit and
//! instrument-identified impact columns.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{inverse, symmetric_eigenvalues};
use crate::nonlinear::StructuralModel;
use crate::svma::{var_to_ma, RoleIndex, ShockRole, SvmaModel, VariableRole};
use crate::var::{IdentifiedShockColumn, VarFit};

/// `W_t = c + sum_k A_k W_{t-k} + B eps_t` with unit-variance shocks.
///
/// Shock order is `[eps_x (if identified), eps_r, remaining]`. The initial
/// condition passed to [`StructuralModel::evaluate`] stacks `W_0, W_{-1}, ..., W_{1-p}`.
#[derive(Debug, Clone)]
pub struct StructuralVar {
    pub intercept: DVector<f64>,
    pub coeffs: Vec<DMatrix<f64>>,
    pub impact: DMatrix<f64>,
    impact_inv: DMatrix<f64>,
    variable_roles: Vec<VariableRole>,
    shock_roles: Vec<ShockRole>,
    role_index: RoleIndex,
}

fn sigma_norm(b: &DVector<f64>, sigma_inv: &DMatrix<f64>) -> f64 {
    b.dot(&(sigma_inv * b)).max(0.0).sqrt()
}

impl StructuralVar {
    pub fn new(
        intercept: DVector<f64>,
        coeffs: Vec<DMatrix<f64>>,
        impact: DMatrix<f64>,
        variable_roles: Vec<VariableRole>,
        shock_roles: Vec<ShockRole>,
    ) -> Result<Self> {
        let n = intercept.len();
        if coeffs.is_empty() {
            return Err(Error::invalid("structural VAR needs at least one lag"));
        }
        if coeffs.iter().any(|a| a.shape() != (n, n)) || impact.shape() != (n, n) {
            return Err(Error::shape(format!("VAR matrices must be {n}x{n}")));
        }
        if variable_roles.len() != n || shock_roles.len() != n {
            return Err(Error::shape("one role per variable and per shock required"));
        }
        if shock_roles.iter().filter(|r| **r == ShockRole::Interest).count() > 1 {
            return Err(Error::Roles("more than one shock of interest".into()));
        }
        if !shock_roles.contains(&ShockRole::Policy) {
            return Err(Error::Roles("at least one shock must have the policy role".into()));
        }
        let role_index = RoleIndex::from_roles(&variable_roles)?;
        let impact_inv = inverse(&impact, "structural impact matrix")?;
        Ok(Self {
            intercept,
            coeffs,
            impact,
            impact_inv,
            variable_roles,
            shock_roles,
            role_index,
        })
    }

    /// Completes the identified columns to an impact matrix with `B B' = Sigma_u`.
    ///
    /// Identified columns are rescaled to unit-variance shocks; the column of
    /// interest is made orthogonal to the policy column in the `Sigma_u^{-1}` metric.
    pub fn from_identified(
        fit: &VarFit,
        policy: &IdentifiedShockColumn,
        interest: Option<&IdentifiedShockColumn>,
        variable_roles: Vec<VariableRole>,
    ) -> Result<Self> {
        if fit.trend.is_some() {
            return Err(Error::invalid("structural VAR simulation does not support a trend"));
        }
        let n = fit.n_vars();
        let sigma = &fit.resid_cov;
        let sigma_inv = inverse(sigma, "residual covariance")?;
        let unit = |b: &DVector<f64>, what: &'static str| -> Result<DVector<f64>> {
            let s = sigma_norm(b, &sigma_inv);
            if !(s > 0.0) {
                return Err(Error::Singular {
                    what,
                    sigma_min: 0.0,
                    sigma_max: b.amax(),
                });
            }
            Ok(b / s)
        };
        let g_r = unit(&policy.impact, "policy impact column")?;
        let mut cols = Vec::new();
        let mut shock_roles = Vec::new();
        if let Some(x) = interest {
            let proj = g_r.dot(&(&sigma_inv * &x.impact));
            cols.push(unit(&(&x.impact - &g_r * proj), "interest impact column")?);
            shock_roles.push(ShockRole::Interest);
        }
        cols.push(g_r);
        shock_roles.push(ShockRole::Policy);
        let k = cols.len();
        let g = DMatrix::from_columns(&cols);
        let rest = sigma - &g * g.transpose();
        let rest = (&rest + rest.transpose()) * 0.5;
        let eig = rest.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut impact = DMatrix::zeros(n, n);
        impact.columns_mut(0, k).copy_from(&g);
        for (c, &i) in order.iter().take(n - k).enumerate() {
            let lam = eig.eigenvalues[i].max(0.0);
            impact.set_column(k + c, &(eig.eigenvectors.column(i) * lam.sqrt()));
            shock_roles.push(ShockRole::Other);
        }
        let min_eig = symmetric_eigenvalues(&rest).min();
        if min_eig < -1e-8 * sigma.trace() {
            return Err(Error::NotPsd {
                eigenvalue: min_eig,
                tolerance: 1e-8 * sigma.trace(),
            });
        }
        Self::new(
            fit.intercept.clone(),
            fit.coeffs.clone(),
            impact,
            variable_roles,
            shock_roles,
        )
    }

    pub fn lags(&self) -> usize {
        self.coeffs.len()
    }

    pub fn variable_roles(&self) -> &[VariableRole] {
        &self.variable_roles
    }

    pub fn shock_roles(&self) -> &[ShockRole] {
        &self.shock_roles
    }

    /// Initial condition for a path starting at data row `row`: `W_{row-1}, ..., W_{row-p}`.
    pub fn initial_state(&self, data: &DMatrix<f64>, row: usize) -> Result<DVector<f64>> {
        let (p, n) = (self.lags(), self.intercept.len());
        if row < p || row > data.nrows() || data.ncols() != n {
            return Err(Error::invalid(format!("no {p} lags available before row {row}")));
        }
        let mut w0 = DVector::zeros(n * p);
        for k in 0..p {
            w0.rows_mut(k * n, n).copy_from(&data.row(row - 1 - k).transpose());
        }
        Ok(w0)
    }

    /// MA representation truncated at `q` with unit shock variances.
    pub fn to_svma(&self, q: usize) -> Result<SvmaModel> {
        let n = self.intercept.len();
        SvmaModel::new(
            var_to_ma(&self.coeffs, &self.impact, q),
            DMatrix::identity(n, n),
            DVector::zeros(n),
            self.variable_roles.clone(),
            self.shock_roles.clone(),
        )
    }

    fn check_state(&self, w0: &DVector<f64>, width: usize) -> Result<()> {
        let n = self.intercept.len();
        if w0.len() != n * self.lags() || width != n {
            return Err(Error::shape(format!(
                "initial state of length {} and width {width}, expected {} and {n}",
                w0.len(),
                n * self.lags()
            )));
        }
        Ok(())
    }

    fn lagged(&self, out: &DMatrix<f64>, w0: &DVector<f64>, t: usize, k: usize) -> DVector<f64> {
        let n = self.intercept.len();
        if t > k {
            out.row(t - k - 1).transpose()
        } else {
            let j = k - t;
            w0.rows(j * n, n).into_owned()
        }
    }
}

impl StructuralModel for StructuralVar {
    fn n_obs(&self) -> usize {
        self.intercept.len()
    }

    fn n_shock(&self) -> usize {
        self.shock_roles.len()
    }

    fn roles(&self) -> RoleIndex {
        self.role_index
    }

    fn shock_of_interest(&self) -> Option<usize> {
        self.shock_roles.iter().position(|r| *r == ShockRole::Interest)
    }

    fn policy_shocks(&self) -> Vec<usize> {
        (0..self.shock_roles.len())
            .filter(|&j| self.shock_roles[j] == ShockRole::Policy)
            .collect()
    }

    fn evaluate(&self, shocks: &DMatrix<f64>, w0: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_state(w0, shocks.ncols())?;
        let mut out = DMatrix::zeros(shocks.nrows(), self.intercept.len());
        for t in 0..shocks.nrows() {
            let mut w = &self.intercept + &self.impact * shocks.row(t).transpose();
            for (k, a) in self.coeffs.iter().enumerate() {
                w += a * self.lagged(&out, w0, t, k);
            }
            out.set_row(t, &w.transpose());
        }
        Ok(out)
    }

    fn recover_shocks(&self, observed: &DMatrix<f64>, w0: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_state(w0, observed.ncols())?;
        let mut eps = DMatrix::zeros(observed.nrows(), self.intercept.len());
        for t in 0..observed.nrows() {
            let mut u = observed.row(t).transpose() - &self.intercept;
            for (k, a) in self.coeffs.iter().enumerate() {
                u -= a * self.lagged(observed, w0, t, k);
            }
            eps.set_row(t, &(&self.impact_inv * u).transpose());
        }
        Ok(eps)
    }

    fn linear_in_shocks(&self) -> bool {
        true
    }
}
