//! Linear structural vector moving-average economies.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, ensure_finite_vec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariableRole {
    Driver,
    Outcome,
    Policy,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShockRole {
    Interest,
    Policy,
    Other,
}

/// Index of each role-bearing observable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoleIndex {
    pub x: usize,
    pub y: usize,
    pub r: usize,
}

impl RoleIndex {
    pub fn from_roles(roles: &[VariableRole]) -> Result<Self> {
        let find = |want: VariableRole, name: &str| -> Result<usize> {
            let hits: Vec<usize> = roles
                .iter()
                .enumerate()
                .filter(|(_, r)| **r == want)
                .map(|(i, _)| i)
                .collect();
            match hits.as_slice() {
                [i] => Ok(*i),
                _ => Err(Error::Roles(format!(
                    "expected exactly one {name} variable, found {}",
                    hits.len()
                ))),
            }
        };
        Ok(Self {
            x: find(VariableRole::Driver, "driver (X)")?,
            y: find(VariableRole::Outcome, "outcome (Y)")?,
            r: find(VariableRole::Policy, "policy (R)")?,
        })
    }
}

/// `W_t = sum_{h=0}^{min(t-1,q)} Theta_h eps_{t-h} + w_0`.
#[derive(Debug, Clone)]
pub struct SvmaModel {
    ma_coeffs: Vec<DMatrix<f64>>,
    shock_var: DVector<f64>,
    initial_condition: DVector<f64>,
    variable_roles: Vec<VariableRole>,
    shock_roles: Vec<ShockRole>,
    roles: RoleIndex,
}

impl SvmaModel {
    pub fn new(
        ma_coeffs: Vec<DMatrix<f64>>,
        shock_cov: DMatrix<f64>,
        initial_condition: DVector<f64>,
        variable_roles: Vec<VariableRole>,
        shock_roles: Vec<ShockRole>,
    ) -> Result<Self> {
        let first = ma_coeffs
            .first()
            .ok_or_else(|| Error::invalid("SVMA needs at least Theta_0"))?;
        let (n_obs, n_shock) = first.shape();
        if n_obs == 0 || n_shock == 0 {
            return Err(Error::shape("empty MA coefficient"));
        }
        for (h, th) in ma_coeffs.iter().enumerate() {
            if th.shape() != (n_obs, n_shock) {
                return Err(Error::shape(format!(
                    "Theta_{h} is {:?}, Theta_0 is {:?}",
                    th.shape(),
                    (n_obs, n_shock)
                )));
            }
            ensure_finite(th, "MA coefficients")?;
        }
        if shock_cov.shape() != (n_shock, n_shock) {
            return Err(Error::shape(format!(
                "shock covariance is {:?}, expected {n_shock}x{n_shock}",
                shock_cov.shape()
            )));
        }
        ensure_finite(&shock_cov, "shock covariance")?;
        for i in 0..n_shock {
            for j in 0..n_shock {
                if i != j && shock_cov[(i, j)] != 0.0 {
                    return Err(Error::invalid(format!(
                        "shock covariance must be diagonal; entry ({i},{j}) = {}",
                        shock_cov[(i, j)]
                    )));
                }
            }
            if shock_cov[(i, i)] <= 0.0 {
                return Err(Error::invalid(format!(
                    "shock variance {i} must be positive, got {}",
                    shock_cov[(i, i)]
                )));
            }
        }
        if initial_condition.len() != n_obs {
            return Err(Error::shape(format!(
                "initial condition has length {}, expected {n_obs}",
                initial_condition.len()
            )));
        }
        ensure_finite_vec(&initial_condition, "initial condition")?;
        if variable_roles.len() != n_obs {
            return Err(Error::Roles(format!(
                "{} variable roles for {n_obs} observables",
                variable_roles.len()
            )));
        }
        if shock_roles.len() != n_shock {
            return Err(Error::Roles(format!(
                "{} shock roles for {n_shock} shocks",
                shock_roles.len()
            )));
        }
        let roles = RoleIndex::from_roles(&variable_roles)?;
        if !shock_roles.contains(&ShockRole::Policy) {
            return Err(Error::Roles("no shock has the policy role".into()));
        }
        if shock_roles.iter().filter(|r| **r == ShockRole::Interest).count() > 1 {
            return Err(Error::Roles("more than one shock of interest".into()));
        }
        Ok(Self {
            ma_coeffs,
            shock_var: shock_cov.diagonal(),
            initial_condition,
            variable_roles,
            shock_roles,
            roles,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.ma_coeffs[0].nrows()
    }

    pub fn n_shock(&self) -> usize {
        self.ma_coeffs[0].ncols()
    }

    /// MA order q.
    pub fn order(&self) -> usize {
        self.ma_coeffs.len() - 1
    }

    pub fn ma_coeffs(&self) -> &[DMatrix<f64>] {
        &self.ma_coeffs
    }

    pub fn shock_cov(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.shock_var)
    }

    pub fn shock_variances(&self) -> &DVector<f64> {
        &self.shock_var
    }

    pub fn initial_condition(&self) -> &DVector<f64> {
        &self.initial_condition
    }

    pub fn variable_roles(&self) -> &[VariableRole] {
        &self.variable_roles
    }

    pub fn shock_roles(&self) -> &[ShockRole] {
        &self.shock_roles
    }

    pub fn roles(&self) -> RoleIndex {
        self.roles
    }

    pub fn shock_of_interest(&self) -> Option<usize> {
        self.shock_roles.iter().position(|r| *r == ShockRole::Interest)
    }

    pub fn policy_shocks(&self) -> Vec<usize> {
        (0..self.n_shock())
            .filter(|&j| self.shock_roles[j] == ShockRole::Policy)
            .collect()
    }

    /// `Theta_h`, zero past the MA order.
    pub fn theta(&self, h: usize) -> DMatrix<f64> {
        self.ma_coeffs
            .get(h)
            .cloned()
            .unwrap_or_else(|| DMatrix::zeros(self.n_obs(), self.n_shock()))
    }

    /// Entry `Theta_h[var, shock]`, zero past the MA order.
    pub fn coeff(&self, h: usize, var: usize, shock: usize) -> f64 {
        self.ma_coeffs.get(h).map_or(0.0, |th| th[(var, shock)])
    }
}

/// Realized structural shocks, `T x n_shock`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockSequence {
    pub values: DMatrix<f64>,
}

impl ShockSequence {
    pub fn new(values: DMatrix<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(t: usize, n_shock: usize) -> Self {
        Self::new(DMatrix::zeros(t, n_shock))
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }
}

/// Simulates `T x n_obs` observables from the shock history.
pub fn simulate_svma(model: &SvmaModel, shocks: &ShockSequence) -> Result<DMatrix<f64>> {
    let eps = &shocks.values;
    let t_len = eps.nrows();
    if t_len == 0 {
        return Err(Error::shape("shock sequence is empty"));
    }
    if eps.ncols() != model.n_shock() {
        return Err(Error::shape(format!(
            "shocks have {} columns, model has {} shocks",
            eps.ncols(),
            model.n_shock()
        )));
    }
    ensure_finite(eps, "shocks")?;
    let n_obs = model.n_obs();
    let mut w = DMatrix::zeros(t_len, n_obs);
    for t in 0..t_len {
        let mut row = model.initial_condition.clone();
        for h in 0..=t.min(model.order()) {
            row.gemv(1.0, &model.ma_coeffs[h], &eps.row(t - h).transpose(), 1.0);
        }
        w.set_row(t, &row.transpose());
    }
    Ok(w)
}

/// Response of every observable to a unit `shock` for horizons `0..=horizon`.
pub fn impulse_response(model: &SvmaModel, shock: usize, horizon: usize) -> Result<Vec<DVector<f64>>> {
    if shock >= model.n_shock() {
        return Err(Error::invalid(format!(
            "shock index {shock} out of range for {} shocks",
            model.n_shock()
        )));
    }
    Ok((0..=horizon)
        .map(|h| match model.ma_coeffs.get(h) {
            Some(th) => th.column(shock).into_owned(),
            None => DVector::zeros(model.n_obs()),
        })
        .collect())
}

/// MA coefficients `Psi_h B` of a VAR with lag matrices `lags` and impact `impact`.
///
/// `Psi_0 = I`, `Psi_h = sum_i A_i Psi_{h-i}`.
pub fn var_to_ma(lags: &[DMatrix<f64>], impact: &DMatrix<f64>, q: usize) -> Vec<DMatrix<f64>> {
    let n = impact.nrows();
    let mut psi: Vec<DMatrix<f64>> = vec![DMatrix::identity(n, n)];
    for h in 1..=q {
        let mut next = DMatrix::zeros(n, n);
        for (i, a) in lags.iter().enumerate() {
            if h > i {
                next += a * &psi[h - 1 - i];
            }
        }
        psi.push(next);
    }
    psi.into_iter().map(|p| p * impact).collect()
}

/// The selected policy shocks: each entry is `(offset, shock)`, meaning the
/// policy shock `shock` dated `t + offset`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectedShocks {
    entries: Vec<(usize, usize)>,
}

impl SelectedShocks {
    pub fn new(entries: Vec<(usize, usize)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("no shocks selected"));
        }
        let mut seen = entries.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != entries.len() {
            return Err(Error::invalid("duplicate selected shock"));
        }
        Ok(Self { entries })
    }

    /// One scalar policy shock in each of periods `t..=t+H`.
    pub fn period_by_period(shock: usize, horizon: usize) -> Self {
        Self {
            entries: (0..=horizon).map(|k| (k, shock)).collect(),
        }
    }

    /// Several policy shocks, all dated `t`.
    pub fn initial(shocks: &[usize]) -> Result<Self> {
        Self::new(shocks.iter().map(|&s| (0, s)).collect())
    }

    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// True for the one-scalar-shock-per-period layout `(0,r), (1,r), ..., (H,r)`.
    pub fn is_period_by_period(&self, horizon: usize) -> bool {
        let Some(&(_, r)) = self.entries.first() else {
            return false;
        };
        self.entries.len() == horizon + 1 && self.entries.iter().enumerate().all(|(k, &(off, s))| off == k && s == r)
    }
}

/// Every impulse response that enters the closed-form counterfactuals.
#[derive(Debug, Clone)]
pub struct ImpulseResponseSet {
    pub horizon: usize,
    /// Outcome response to a unit shock of interest; absent when no shock has that role.
    pub theta_yx: Option<DVector<f64>>,
    /// Policy response to a unit shock of interest.
    pub d_po: Option<DVector<f64>>,
    /// `(H+1) x n_e` policy response to the selected shocks.
    pub theta_re: DMatrix<f64>,
    /// Outcome response at horizon h to the selected shocks, h = 0..=H.
    pub theta_ye_by_h: Vec<DVector<f64>>,
    pub selected: Option<SelectedShocks>,
}

impl ImpulseResponseSet {
    pub fn new(
        theta_yx: Option<DVector<f64>>,
        d_po: Option<DVector<f64>>,
        theta_re: DMatrix<f64>,
        theta_ye_by_h: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let rows = theta_re.nrows();
        if rows == 0 {
            return Err(Error::shape("theta_re has no rows"));
        }
        let horizon = rows - 1;
        let n_e = theta_re.ncols();
        ensure_finite(&theta_re, "theta_re")?;
        if theta_ye_by_h.len() != rows {
            return Err(Error::shape(format!(
                "{} theta_ye vectors for horizon {horizon}",
                theta_ye_by_h.len()
            )));
        }
        for v in &theta_ye_by_h {
            if v.len() != n_e {
                return Err(Error::shape(format!(
                    "theta_ye vector of length {}, expected {n_e}",
                    v.len()
                )));
            }
            ensure_finite_vec(v, "theta_ye")?;
        }
        for (v, name) in [(&theta_yx, "theta_yx"), (&d_po, "d_po")] {
            if let Some(v) = v {
                if v.len() != rows {
                    return Err(Error::shape(format!("{name} has length {}, expected {rows}", v.len())));
                }
                ensure_finite_vec(v, "theta_yx / d_po")?;
            }
        }
        Ok(Self {
            horizon,
            theta_yx,
            d_po,
            theta_re,
            theta_ye_by_h,
            selected: None,
        })
    }

    pub fn n_e(&self) -> usize {
        self.theta_re.ncols()
    }

    /// `Theta_{ye,H}`: row h is `theta_ye_h'`.
    pub fn theta_ye_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.horizon + 1, self.n_e());
        for (h, v) in self.theta_ye_by_h.iter().enumerate() {
            m.set_row(h, &v.transpose());
        }
        m
    }
}

/// Assembles the IRF set of `model` for the given selection of policy shocks.
pub fn build_irf_set(model: &SvmaModel, horizon: usize, selected: &SelectedShocks) -> Result<ImpulseResponseSet> {
    for &(off, s) in selected.entries() {
        if s >= model.n_shock() {
            return Err(Error::invalid(format!("selected shock {s} does not exist")));
        }
        if model.shock_roles[s] != ShockRole::Policy {
            return Err(Error::Roles(format!(
                "selected shock {s} is {:?}, not a policy shock",
                model.shock_roles[s]
            )));
        }
        if off > horizon {
            return Err(Error::invalid(format!(
                "selected shock dated t+{off} lies beyond horizon {horizon}"
            )));
        }
    }
    let RoleIndex { y, r, .. } = model.roles;
    let n_e = selected.len();
    let mut theta_re = DMatrix::zeros(horizon + 1, n_e);
    let mut theta_ye_by_h = Vec::with_capacity(horizon + 1);
    for h in 0..=horizon {
        let mut ye = DVector::zeros(n_e);
        for (j, &(off, s)) in selected.entries().iter().enumerate() {
            if h >= off {
                theta_re[(h, j)] = model.coeff(h - off, r, s);
                ye[j] = model.coeff(h - off, y, s);
            }
        }
        theta_ye_by_h.push(ye);
    }
    let (theta_yx, d_po) = match model.shock_of_interest() {
        Some(x) => {
            let irf = impulse_response(model, x, horizon)?;
            (
                Some(DVector::from_iterator(horizon + 1, irf.iter().map(|v| v[y]))),
                Some(DVector::from_iterator(horizon + 1, irf.iter().map(|v| v[r]))),
            )
        }
        None => (None, None),
    };
    let mut set = ImpulseResponseSet::new(theta_yx, d_po, theta_re, theta_ye_by_h)?;
    set.selected = Some(selected.clone());
    Ok(set)
}
