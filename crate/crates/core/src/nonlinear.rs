//! Simulation-based counterfactuals for fully specified (possibly nonlinear) models.
//!
//! Rows of every shock matrix are periods `1..=T` of the model; row `t` of the
//! output of [`StructuralModel::evaluate`] may depend on shock rows `0..=t` only.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{inverse, pinv};
use crate::svma::{simulate_svma, RoleIndex, SelectedShocks, ShockRole, ShockSequence, SvmaModel, VariableRole};
use crate::var::quantile_sorted;

/// `W_t = g_t(eps_{1:t}; w_0)` together with its inverse.
pub trait StructuralModel: Sync {
    fn n_obs(&self) -> usize;
    fn n_shock(&self) -> usize;
    fn roles(&self) -> RoleIndex;
    fn shock_of_interest(&self) -> Option<usize>;
    fn policy_shocks(&self) -> Vec<usize>;

    /// `T x n_obs` path generated by a `T x n_shock` shock history.
    fn evaluate(&self, shocks: &DMatrix<f64>, w0: &DVector<f64>) -> Result<DMatrix<f64>>;

    /// Inverse of [`evaluate`](Self::evaluate) on observed data.
    fn recover_shocks(&self, observed: &DMatrix<f64>, w0: &DVector<f64>) -> Result<DMatrix<f64>>;

    /// Enables the closed-form least-squares path for the shock deviation.
    fn linear_in_shocks(&self) -> bool {
        false
    }

    /// One scalar policy shock per period, using the first policy shock.
    fn default_selection(&self, horizon: usize) -> Result<SelectedShocks> {
        let r = *self
            .policy_shocks()
            .first()
            .ok_or_else(|| Error::Roles("model has no policy shock".into()))?;
        Ok(SelectedShocks::period_by_period(r, horizon))
    }
}

impl StructuralModel for SvmaModel {
    fn n_obs(&self) -> usize {
        SvmaModel::n_obs(self)
    }

    fn n_shock(&self) -> usize {
        SvmaModel::n_shock(self)
    }

    fn roles(&self) -> RoleIndex {
        SvmaModel::roles(self)
    }

    fn shock_of_interest(&self) -> Option<usize> {
        SvmaModel::shock_of_interest(self)
    }

    fn policy_shocks(&self) -> Vec<usize> {
        SvmaModel::policy_shocks(self)
    }

    /// `w0` replaces the model's own initial condition.
    fn evaluate(&self, shocks: &DMatrix<f64>, w0: &DVector<f64>) -> Result<DMatrix<f64>> {
        let mut w = simulate_svma(self, &ShockSequence::new(shocks.clone()))?;
        let shift = w0 - self.initial_condition();
        for mut row in w.row_iter_mut() {
            row += shift.transpose();
        }
        Ok(w)
    }

    fn recover_shocks(&self, observed: &DMatrix<f64>, w0: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = SvmaModel::n_obs(self);
        if SvmaModel::n_shock(self) != n {
            return Err(Error::invalid(format!(
                "shocks of an SVMA with {} shocks and {n} observables cannot be recovered",
                SvmaModel::n_shock(self)
            )));
        }
        let theta0_inv = inverse(&self.theta(0), "impact matrix")?;
        let t_len = observed.nrows();
        let mut eps = DMatrix::zeros(t_len, n);
        for t in 0..t_len {
            let mut rhs = observed.row(t).transpose() - w0;
            for h in 1..=t.min(self.order()) {
                rhs -= self.theta(h) * eps.row(t - h).transpose();
            }
            eps.set_row(t, &(&theta0_inv * rhs).transpose());
        }
        Ok(eps)
    }

    fn linear_in_shocks(&self) -> bool {
        true
    }
}

/// Two-regime VAR(1): `W_t = c_s + A_s W_{t-1} + B_s eps_t`, with regime `s = 1`
/// when the lagged outcome is at or above `threshold`.
#[derive(Debug, Clone)]
pub struct ThresholdVar {
    pub intercept: [DVector<f64>; 2],
    pub lag: [DMatrix<f64>; 2],
    pub impact: [DMatrix<f64>; 2],
    pub threshold: f64,
    variable_roles: Vec<VariableRole>,
    shock_roles: Vec<ShockRole>,
    role_index: RoleIndex,
    impact_inv: [DMatrix<f64>; 2],
}

impl ThresholdVar {
    pub fn new(
        intercept: [DVector<f64>; 2],
        lag: [DMatrix<f64>; 2],
        impact: [DMatrix<f64>; 2],
        threshold: f64,
        variable_roles: Vec<VariableRole>,
        shock_roles: Vec<ShockRole>,
    ) -> Result<Self> {
        let n = variable_roles.len();
        for s in 0..2 {
            if intercept[s].len() != n || lag[s].shape() != (n, n) || impact[s].shape() != (n, n) {
                return Err(Error::shape(format!("regime {s} matrices do not match {n} variables")));
            }
        }
        if shock_roles.len() != n {
            return Err(Error::shape("threshold VAR needs one shock per variable"));
        }
        if shock_roles.iter().filter(|r| **r == ShockRole::Interest).count() > 1 {
            return Err(Error::Roles("more than one shock of interest".into()));
        }
        let role_index = RoleIndex::from_roles(&variable_roles)?;
        let impact_inv = [
            inverse(&impact[0], "regime 0 impact")?,
            inverse(&impact[1], "regime 1 impact")?,
        ];
        Ok(Self {
            intercept,
            lag,
            impact,
            threshold,
            variable_roles,
            shock_roles,
            role_index,
            impact_inv,
        })
    }

    pub fn variable_roles(&self) -> &[VariableRole] {
        &self.variable_roles
    }

    fn regime(&self, prev: &DVector<f64>) -> usize {
        usize::from(prev[self.role_index.y] >= self.threshold)
    }
}

impl StructuralModel for ThresholdVar {
    fn n_obs(&self) -> usize {
        self.variable_roles.len()
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
        let n = self.n_obs();
        if shocks.ncols() != n || w0.len() != n {
            return Err(Error::shape("shock or initial-condition width differs from the model"));
        }
        let mut out = DMatrix::zeros(shocks.nrows(), n);
        let mut prev = w0.clone();
        for t in 0..shocks.nrows() {
            let s = self.regime(&prev);
            let next = &self.intercept[s] + &self.lag[s] * &prev + &self.impact[s] * shocks.row(t).transpose();
            out.set_row(t, &next.transpose());
            prev = next;
        }
        Ok(out)
    }

    fn recover_shocks(&self, observed: &DMatrix<f64>, w0: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.n_obs();
        if observed.ncols() != n || w0.len() != n {
            return Err(Error::shape("observation width differs from the model"));
        }
        let mut eps = DMatrix::zeros(observed.nrows(), n);
        let mut prev = w0.clone();
        for t in 0..observed.nrows() {
            let s = self.regime(&prev);
            let w = observed.row(t).transpose();
            let e = &self.impact_inv[s] * (&w - &self.intercept[s] - &self.lag[s] * &prev);
            eps.set_row(t, &e.transpose());
            prev = w;
        }
        Ok(eps)
    }
}

fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

const RECOVERY_TOL: f64 = 1e-8;

/// Recovers shocks and checks that they reproduce the data.
pub fn recover_checked<M: StructuralModel + ?Sized>(
    model: &M,
    observed: &DMatrix<f64>,
    w0: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let eps = model.recover_shocks(observed, w0)?;
    let rebuilt = model.evaluate(&eps, w0)?;
    let residual = (&rebuilt - observed).amax();
    let tolerance = RECOVERY_TOL * (1.0 + observed.amax());
    if !(residual <= tolerance) {
        return Err(Error::Recovery { residual, tolerance });
    }
    Ok(eps)
}

/// Settings of the shock-deviation search.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub restarts: usize,
    /// Absolute tolerance on the sum-of-squares objective.
    pub tolerance: f64,
    /// Nelder-Mead iteration cap; `None` means `200 (n_e + 1)^2`.
    pub max_iter: Option<usize>,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            tolerance: 1e-10,
            max_iter: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DeltaSolution {
    pub delta: DVector<f64>,
    pub objective: f64,
}

/// Sum of squared gaps between a target policy path and the path produced
/// after subtracting `delta` from the selected shocks.
pub struct DeltaProblem<'a, M: StructuralModel + ?Sized> {
    model: &'a M,
    w0: &'a DVector<f64>,
    shocks: DMatrix<f64>,
    start: usize,
    entries: Vec<(usize, usize)>,
    target: DVector<f64>,
    /// Observed minus reconstructed policy path, when anchored to data.
    bias: Option<DVector<f64>>,
}

impl<'a, M: StructuralModel + ?Sized> DeltaProblem<'a, M> {
    /// `shocks` must cover rows `0..=start + H` where `H + 1 = target.len()`.
    pub fn new(
        model: &'a M,
        w0: &'a DVector<f64>,
        shocks: DMatrix<f64>,
        start: usize,
        selected: &SelectedShocks,
        target: DVector<f64>,
    ) -> Result<Self> {
        let horizon = target
            .len()
            .checked_sub(1)
            .ok_or_else(|| Error::shape("empty target path"))?;
        if shocks.nrows() != start + horizon + 1 {
            return Err(Error::shape(format!(
                "{} shock rows for start {start} and horizon {horizon}",
                shocks.nrows()
            )));
        }
        if selected
            .entries()
            .iter()
            .any(|&(k, s)| k > horizon || s >= model.n_shock())
        {
            return Err(Error::invalid("selected shock outside the horizon or shock range"));
        }
        Ok(Self {
            model,
            w0,
            shocks,
            start,
            entries: selected.entries().to_vec(),
            target,
            bias: None,
        })
    }

    /// Measures the target against observed policy values instead of the
    /// reconstructed ones, so a target equal to the data has zero residual exactly.
    pub fn anchored_to(mut self, observed_policy: &DVector<f64>) -> Result<Self> {
        if observed_policy.len() != self.target.len() {
            return Err(Error::shape("observed policy path length differs from the target"));
        }
        let w = self.path(&DVector::zeros(self.n_e()))?;
        let r = self.model.roles().r;
        self.bias = Some(DVector::from_fn(self.target.len(), |h, _| {
            observed_policy[h] - w[(self.start + h, r)]
        }));
        Ok(self)
    }

    pub fn n_e(&self) -> usize {
        self.entries.len()
    }

    /// Shock history with `delta` subtracted from the selected entries.
    pub fn shifted(&self, delta: &DVector<f64>) -> DMatrix<f64> {
        let mut e = self.shocks.clone();
        for (j, &(k, s)) in self.entries.iter().enumerate() {
            e[(self.start + k, s)] -= delta[j];
        }
        e
    }

    /// Full model path under `delta`.
    pub fn path(&self, delta: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.model.evaluate(&self.shifted(delta), self.w0)
    }

    fn residual(&self, delta: &DVector<f64>) -> Result<DVector<f64>> {
        let w = self.path(delta)?;
        let r = self.model.roles().r;
        let h1 = self.target.len();
        Ok(DVector::from_fn(h1, |h, _| {
            let gap = self.target[h] - w[(self.start + h, r)];
            match &self.bias {
                Some(b) => gap - b[h],
                None => gap,
            }
        }))
    }

    pub fn objective(&self, delta: &DVector<f64>) -> Result<f64> {
        Ok(self.residual(delta)?.norm_squared())
    }

    /// `d r / d delta` by central differences (forward unit steps for linear models).
    fn jacobian(&self, delta: &DVector<f64>, linear: bool) -> Result<DMatrix<f64>> {
        let n_e = self.n_e();
        let h1 = self.target.len();
        let mut j = DMatrix::zeros(h1, n_e);
        if linear {
            let base = self.residual(delta)?;
            for c in 0..n_e {
                let mut d = delta.clone();
                d[c] += 1.0;
                j.set_column(c, &(&base - self.residual(&d)?));
            }
            return Ok(j);
        }
        for c in 0..n_e {
            let step = 1e-6 * delta[c].abs().max(1.0);
            let (mut up, mut dn) = (delta.clone(), delta.clone());
            up[c] += step;
            dn[c] -= step;
            j.set_column(c, &((self.residual(&dn)? - self.residual(&up)?) / (2.0 * step)));
        }
        Ok(j)
    }

    /// Minimal-norm minimizer of the objective.
    pub fn solve(&self, options: &SolverOptions) -> Result<DeltaSolution> {
        let n_e = self.n_e();
        let zero = DVector::zeros(n_e);
        let f0 = self.objective(&zero)?;
        if f0 == 0.0 {
            return Ok(DeltaSolution {
                delta: zero,
                objective: 0.0,
            });
        }
        if self.model.linear_in_shocks() {
            let j = self.jacobian(&zero, true)?;
            let delta = pinv(&j)? * self.residual(&zero)?;
            let objective = self.objective(&delta)?;
            return Ok(DeltaSolution { delta, objective });
        }
        let cap = options.max_iter.unwrap_or(200 * (n_e + 1) * (n_e + 1));
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let mut best: Option<(DVector<f64>, f64, bool)> = None;
        let mut trace = Vec::new();
        for attempt in 0..=options.restarts {
            let start = match (&best, attempt) {
                (_, 0) => zero.clone(),
                (Some((b, _, _)), _) => {
                    let scale = b.norm().max(1.0);
                    b + DVector::from_fn(n_e, |_, _| scale * std_normal(&mut rng))
                }
                (None, _) => DVector::from_fn(n_e, |_, _| std_normal(&mut rng)),
            };
            let (gn, gn_f, gn_ok) = self.gauss_newton(start, options.tolerance)?;
            let (x, f, nm_ok) = if gn_f <= options.tolerance {
                (gn, gn_f, true)
            } else {
                nelder_mead(|d| self.objective(d), gn, cap, options.tolerance)?
            };
            trace.push(format!("start {attempt}: objective {f:.3e}"));
            let converged = gn_ok || nm_ok;
            let better = match &best {
                None => true,
                Some((bx, bf, _)) => {
                    if (f - bf).abs() <= options.tolerance {
                        x.norm() < bx.norm()
                    } else {
                        f < *bf
                    }
                }
            };
            if better {
                best = Some((x, f, converged));
            }
        }
        let (delta, objective, converged) = best.expect("at least one start");
        if !converged {
            return Err(Error::Convergence(trace.join("; ")));
        }
        Ok(DeltaSolution { delta, objective })
    }

    fn gauss_newton(&self, mut x: DVector<f64>, tol: f64) -> Result<(DVector<f64>, f64, bool)> {
        let mut f = self.objective(&x)?;
        for _ in 0..100 {
            if f <= tol {
                return Ok((x, f, true));
            }
            let j = self.jacobian(&x, false)?;
            let step = pinv(&j)? * self.residual(&x)?;
            let mut lambda = 1.0;
            let mut improved = false;
            while lambda > 1e-8 {
                let cand = &x + &step * lambda;
                let fc = self.objective(&cand)?;
                if fc < f {
                    let small = f - fc <= 1e-14 * f.max(1e-300) || step.norm() * lambda <= 1e-12 * (1.0 + x.norm());
                    x = cand;
                    f = fc;
                    improved = true;
                    if small {
                        return Ok((x, f, true));
                    }
                    break;
                }
                lambda *= 0.5;
            }
            if !improved {
                // Stationary for the linearization: a local minimum of the objective.
                let stationary = step.norm() <= 1e-6 * (1.0 + x.norm());
                return Ok((x, f, stationary));
            }
        }
        Ok((x, f, false))
    }
}

/// Nelder-Mead with standard coefficients. Returns `(x, f(x), converged)`.
fn nelder_mead<F>(f: F, x0: DVector<f64>, max_iter: usize, tol: f64) -> Result<(DVector<f64>, f64, bool)>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    let n = x0.len();
    let mut simplex: Vec<(DVector<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.clone(), f(&x0)?));
    for i in 0..n {
        let mut x = x0.clone();
        x[i] += 0.05 * x0[i].abs().max(1.0);
        let fx = f(&x)?;
        simplex.push((x, fx));
    }
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[n].1 - simplex[0].1 <= tol {
            let (x, fx) = simplex.swap_remove(0);
            return Ok((x, fx, true));
        }
        let centroid = simplex[..n].iter().fold(DVector::zeros(n), |acc, (x, _)| acc + x) / n as f64;
        let worst = simplex[n].clone();
        let xr = &centroid + (&centroid - &worst.0);
        let fr = f(&xr)?;
        if fr < simplex[0].1 {
            let xe = &centroid + (&xr - &centroid) * 2.0;
            let fe = f(&xe)?;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let xc = if fr < worst.1 {
                &centroid + (&xr - &centroid) * 0.5
            } else {
                &centroid + (&worst.0 - &centroid) * 0.5
            };
            let fc = f(&xc)?;
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let x = &best + (&item.0 - &best) * 0.5;
                    let fx = f(&x)?;
                    *item = (x, fx);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    Ok((x, fx, false))
}

/// Distribution future shocks are drawn from.
#[derive(Debug, Clone)]
pub enum ShockDistribution {
    /// Resample whole rows with replacement; rows are demeaned on construction.
    Empirical(DMatrix<f64>),
    /// Independent normals with the given standard deviations.
    Gaussian(DVector<f64>),
}

impl ShockDistribution {
    pub fn empirical(rows: &DMatrix<f64>) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::InsufficientSample("no shocks to resample".into()));
        }
        let mean = rows.row_mean();
        let mut centered = rows.clone();
        for mut r in centered.row_iter_mut() {
            r -= &mean;
        }
        Ok(ShockDistribution::Empirical(centered))
    }

    pub fn n_shock(&self) -> usize {
        match self {
            ShockDistribution::Empirical(m) => m.ncols(),
            ShockDistribution::Gaussian(s) => s.len(),
        }
    }

    pub fn draw(&self, rows: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        match self {
            ShockDistribution::Empirical(m) => {
                let mut out = DMatrix::zeros(rows, m.ncols());
                for i in 0..rows {
                    let pick = rng.random_range(0..m.nrows());
                    out.set_row(i, &m.row(pick));
                }
                out
            }
            ShockDistribution::Gaussian(s) => DMatrix::from_fn(rows, s.len(), |_, j| s[j] * std_normal(rng)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Historical,
    Future,
    Intervention,
}

/// Per-replication outcome paths over horizons `0..=H` (one row per replication).
///
/// For interventions `baseline` holds `Y{1, R(0)}` and `counterfactual` the
/// no-shock benchmark `Y{0, R(0)}`, so `disparity` is `phi_h` in every case.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub kind: ScenarioKind,
    pub start: usize,
    pub horizon: usize,
    pub baseline: DMatrix<f64>,
    pub counterfactual: DMatrix<f64>,
    pub disparity: DMatrix<f64>,
    pub deltas: Vec<DVector<f64>>,
    /// Full shock histories per replication, when retained.
    pub draws: Option<Vec<DMatrix<f64>>>,
    pub requested: usize,
    pub dropped: usize,
}

impl ScenarioResult {
    pub fn replications(&self) -> usize {
        self.disparity.nrows()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.disparity.row_mean().transpose()
    }

    /// Monte Carlo standard error of [`mean`](Self::mean); zero for one replication.
    pub fn mc_se(&self) -> DVector<f64> {
        let n = self.replications();
        if n < 2 {
            return DVector::zeros(self.horizon + 1);
        }
        self.disparity
            .row_variance()
            .transpose()
            .map(|v| (v * n as f64 / (n - 1) as f64 / n as f64).sqrt())
    }

    /// Equal-tailed percentile band of the per-replication disparity.
    pub fn bands(&self, level: f64) -> Result<(DVector<f64>, DVector<f64>)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::invalid(format!("band level {level} not in (0, 1)")));
        }
        let a = (1.0 - level) / 2.0;
        let mut lo = DVector::zeros(self.horizon + 1);
        let mut hi = DVector::zeros(self.horizon + 1);
        for h in 0..=self.horizon {
            let mut col: Vec<f64> = self.disparity.column(h).iter().copied().collect();
            col.sort_by(f64::total_cmp);
            lo[h] = quantile_sorted(&col, a);
            hi[h] = quantile_sorted(&col, 1.0 - a);
        }
        Ok((lo, hi))
    }
}

struct Replication {
    baseline: DVector<f64>,
    counterfactual: DVector<f64>,
    delta: DVector<f64>,
    draw: DMatrix<f64>,
}

fn outcome_rows(w: &DMatrix<f64>, y: usize, start: usize, horizon: usize) -> DVector<f64> {
    DVector::from_fn(horizon + 1, |h, _| w[(start + h, y)])
}

fn assemble(
    kind: ScenarioKind,
    start: usize,
    horizon: usize,
    reps: Vec<Replication>,
    requested: usize,
    retain: bool,
) -> ScenarioResult {
    let n = reps.len();
    let baseline = DMatrix::from_fn(n, horizon + 1, |i, h| reps[i].baseline[h]);
    let counterfactual = DMatrix::from_fn(n, horizon + 1, |i, h| reps[i].counterfactual[h]);
    let disparity = &baseline - &counterfactual;
    let deltas = reps.iter().map(|r| r.delta.clone()).collect();
    let draws = retain.then(|| reps.into_iter().map(|r| r.draw).collect());
    ScenarioResult {
        kind,
        start,
        horizon,
        baseline,
        counterfactual,
        disparity,
        deltas,
        draws,
        requested,
        dropped: requested - n,
    }
}

fn run_replications<F>(n: usize, seed: u64, one: F) -> Vec<Result<Replication>>
where
    F: Fn(&mut ChaCha8Rng, usize) -> Result<Replication> + Sync,
{
    let run = |rep: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rep as u64);
        one(&mut rng, rep)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(run).collect()
    }
}

fn check_path(path: &DVector<f64>, horizon: usize) -> Result<()> {
    if path.len() != horizon + 1 {
        return Err(Error::shape(format!(
            "counterfactual path has {} entries, expected {}",
            path.len(),
            horizon + 1
        )));
    }
    if path.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("counterfactual path"));
    }
    Ok(())
}

/// Historical scenario: the observed economy from row `start` on, re-run with
/// selected policy shocks shifted so the policy variable tracks `path`.
pub fn historical_scenario<M: StructuralModel + ?Sized>(
    model: &M,
    observed: &DMatrix<f64>,
    w0: &DVector<f64>,
    start: usize,
    path: &DVector<f64>,
    selected: &SelectedShocks,
    options: &SolverOptions,
) -> Result<ScenarioResult> {
    let horizon = path.len().saturating_sub(1);
    check_path(path, horizon)?;
    if start + horizon >= observed.nrows() {
        return Err(Error::InsufficientSample(format!(
            "scenario rows {start}..={} exceed the {} observed rows",
            start + horizon,
            observed.nrows()
        )));
    }
    let eps = recover_checked(model, observed, w0)?;
    let shocks = eps.rows(0, start + horizon + 1).into_owned();
    let roles = model.roles();
    let observed_r = outcome_rows(observed, roles.r, start, horizon);
    let problem =
        DeltaProblem::new(model, w0, shocks.clone(), start, selected, path.clone())?.anchored_to(&observed_r)?;
    let sol = problem.solve(options)?;
    let rebuilt = outcome_rows(&problem.path(&DVector::zeros(problem.n_e()))?, roles.y, start, horizon);
    let cf = outcome_rows(&problem.path(&sol.delta)?, roles.y, start, horizon);
    // Counterfactual = data minus the model's disparity, exact when delta = 0.
    let baseline = outcome_rows(observed, roles.y, start, horizon);
    let rep = Replication {
        counterfactual: &baseline - (rebuilt - cf),
        baseline,
        delta: sol.delta,
        draw: shocks,
    };
    Ok(assemble(ScenarioKind::Historical, start, horizon, vec![rep], 1, true))
}

/// Future scenario from the end of `history`: `n_sims` shock paths drawn from
/// the recovered, demeaned historical shocks.
#[allow(clippy::too_many_arguments)]
pub fn future_scenario<M: StructuralModel + ?Sized>(
    model: &M,
    history: &DMatrix<f64>,
    w0: &DVector<f64>,
    path: &DVector<f64>,
    selected: &SelectedShocks,
    n_sims: usize,
    seed: u64,
    options: &SolverOptions,
) -> Result<ScenarioResult> {
    let horizon = path.len().saturating_sub(1);
    check_path(path, horizon)?;
    if n_sims == 0 {
        return Err(Error::invalid("at least one simulation is required"));
    }
    let past = recover_checked(model, history, w0)?;
    let dist = ShockDistribution::empirical(&past)?;
    future_scenario_with(model, &past, w0, path, selected, &dist, n_sims, seed, options)
}

/// [`future_scenario`] with known past shocks and an explicit shock distribution.
#[allow(clippy::too_many_arguments)]
pub fn future_scenario_with<M: StructuralModel + ?Sized>(
    model: &M,
    past_shocks: &DMatrix<f64>,
    w0: &DVector<f64>,
    path: &DVector<f64>,
    selected: &SelectedShocks,
    dist: &ShockDistribution,
    n_sims: usize,
    seed: u64,
    options: &SolverOptions,
) -> Result<ScenarioResult> {
    let horizon = path.len().saturating_sub(1);
    check_path(path, horizon)?;
    if dist.n_shock() != model.n_shock() || past_shocks.ncols() != model.n_shock() {
        return Err(Error::shape("shock dimension differs from the model"));
    }
    let start = past_shocks.nrows();
    let y = model.roles().y;
    let results = run_replications(n_sims, seed, |rng, rep| {
        let future = dist.draw(horizon + 1, rng);
        let mut shocks = DMatrix::zeros(start + horizon + 1, model.n_shock());
        shocks.rows_mut(0, start).copy_from(past_shocks);
        shocks.rows_mut(start, horizon + 1).copy_from(&future);
        let problem = DeltaProblem::new(model, w0, shocks.clone(), start, selected, path.clone())?;
        let opts = SolverOptions {
            seed: options.seed ^ rep as u64,
            ..*options
        };
        let sol = problem.solve(&opts)?;
        let base = problem.path(&DVector::zeros(problem.n_e()))?;
        let cf = problem.path(&sol.delta)?;
        Ok(Replication {
            baseline: outcome_rows(&base, y, start, horizon),
            counterfactual: outcome_rows(&cf, y, start, horizon),
            delta: sol.delta,
            draw: shocks,
        })
    });
    let reps = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(assemble(ScenarioKind::Future, start, horizon, reps, n_sims, true))
}

/// Setup of the zeroing-out intervention at row `start`.
#[derive(Debug, Clone)]
pub struct InterventionSetup {
    pub start: usize,
    pub horizon: usize,
    pub dist: ShockDistribution,
    /// Shocks for rows `0..start` shared by every replication (state conditioning).
    pub fixed_history: Option<DMatrix<f64>>,
    pub retain_draws: bool,
}

/// Zeroing-out policy intervention: the effect of `eps_x,t = 1` when the
/// selected policy shocks hold the policy path at its no-shock value.
pub fn zeroing_out_intervention<M: StructuralModel + ?Sized>(
    model: &M,
    w0: &DVector<f64>,
    setup: &InterventionSetup,
    selected: &SelectedShocks,
    n_sims: usize,
    seed: u64,
    options: &SolverOptions,
) -> Result<ScenarioResult> {
    let x = model
        .shock_of_interest()
        .ok_or_else(|| Error::Roles("model has no shock of interest".into()))?;
    if n_sims == 0 {
        return Err(Error::invalid("at least one simulation is required"));
    }
    if setup.dist.n_shock() != model.n_shock() {
        return Err(Error::shape("shock distribution width differs from the model"));
    }
    if let Some(hist) = &setup.fixed_history {
        if hist.shape() != (setup.start, model.n_shock()) {
            return Err(Error::shape(format!(
                "fixed history is {:?}, expected ({}, {})",
                hist.shape(),
                setup.start,
                model.n_shock()
            )));
        }
    }
    let (start, horizon) = (setup.start, setup.horizon);
    let rows = start + horizon + 1;
    let roles = model.roles();
    let results = run_replications(n_sims, seed, |rng, rep| {
        let mut shocks = setup.dist.draw(rows, rng);
        if let Some(hist) = &setup.fixed_history {
            shocks.rows_mut(0, start).copy_from(hist);
        }
        let mut off = shocks.clone();
        off[(start, x)] = 0.0;
        let benchmark = model.evaluate(&off, w0)?;
        let target = DVector::from_fn(horizon + 1, |h, _| benchmark[(start + h, roles.r)]);
        let mut on = shocks.clone();
        on[(start, x)] = 1.0;
        let problem = DeltaProblem::new(model, w0, on, start, selected, target)?;
        let opts = SolverOptions {
            seed: options.seed ^ rep as u64,
            ..*options
        };
        let sol = problem.solve(&opts)?;
        let treated = problem.path(&sol.delta)?;
        Ok(Replication {
            baseline: outcome_rows(&treated, roles.y, start, horizon),
            counterfactual: outcome_rows(&benchmark, roles.y, start, horizon),
            delta: sol.delta,
            draw: shocks,
        })
    });
    let reps: Vec<Replication> = results.into_iter().filter_map(|r| r.ok()).collect();
    let dropped = n_sims - reps.len();
    if dropped * 10 > n_sims {
        return Err(Error::TooManyFailures {
            failed: dropped,
            total: n_sims,
        });
    }
    Ok(assemble(
        ScenarioKind::Intervention,
        start,
        horizon,
        reps,
        n_sims,
        setup.retain_draws,
    ))
}

/// Which replications an effect is averaged over.
#[derive(Debug, Clone)]
pub enum Conditioning {
    Unconditional,
    /// Replications whose shocks before `start` equal this history.
    State(DMatrix<f64>),
    /// Replications whose whole draw equals this one except for `eps_x,start`.
    Path(DMatrix<f64>),
}

#[derive(Debug, Clone)]
pub struct ConditionalEffect {
    pub mean: DVector<f64>,
    pub matched: usize,
}

/// Averages the disparity over the replications selected by `conditioning`.
pub fn conditional_effects(
    result: &ScenarioResult,
    shock_of_interest: usize,
    conditioning: &Conditioning,
) -> Result<ConditionalEffect> {
    let rows: Vec<usize> = match conditioning {
        Conditioning::Unconditional => (0..result.replications()).collect(),
        Conditioning::State(hist) | Conditioning::Path(hist) => {
            let draws = result
                .draws
                .as_ref()
                .ok_or_else(|| Error::invalid("conditioning needs retained shock draws"))?;
            draws
                .iter()
                .enumerate()
                .filter(|(_, d)| match conditioning {
                    Conditioning::State(_) => {
                        hist.nrows() == result.start
                            && hist.ncols() == d.ncols()
                            && d.rows(0, result.start) == hist.rows(0, result.start)
                    }
                    _ => {
                        d.shape() == hist.shape()
                            && d.iter().zip(hist.iter()).enumerate().all(|(k, (a, b))| {
                                let (i, j) = (k % d.nrows(), k / d.nrows());
                                (i == result.start && j == shock_of_interest) || a == b
                            })
                    }
                })
                .map(|(i, _)| i)
                .collect()
        }
    };
    if rows.is_empty() {
        return Err(Error::invalid("no replication matches the conditioning set"));
    }
    let mut mean = DVector::zeros(result.horizon + 1);
    for &i in &rows {
        mean += result.disparity.row(i).transpose();
    }
    Ok(ConditionalEffect {
        mean: mean / rows.len() as f64,
        matched: rows.len(),
    })
}
