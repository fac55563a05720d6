//! Scenario dispatch: data and model loading, estimation, counterfactuals and
//! inference, collected into a [`ReportBundle`].

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{CounterfactualKind, InferenceMethod, LagSpec, ModelSpec, ScenarioConfig, Task};
use super::path::build_path;
use super::report::{PlotBlock, ReportBundle, ReportRow};
use super::table::{load_table, DataTable};
use crate::analytic::{
    hypothetical_output_gap, hypothetical_trajectory_params, policy_intervention_effect, Method, PolicyPathDeviation,
};
use crate::data::{InstrumentSeries, PanelDataset, TimeStamp};
use crate::error::{Error, Result};
use crate::inference::{
    delta_method_avar, hac_lrv, hr_lrv, normal_critical_value, se_counterfactual, Contrast, IrfJointDistribution,
    LrvMethod,
};
use crate::lp::{default_lag_order, estimate_beta, estimate_phi, estimate_phi_alternative};
use crate::nonlinear::{
    future_scenario_with, historical_scenario, recover_checked, zeroing_out_intervention, InterventionSetup,
    ShockDistribution, SolverOptions, StructuralModel, ThresholdVar,
};
use crate::svar::StructuralVar;
use crate::svma::{build_irf_set, ImpulseResponseSet, RoleIndex, ShockRole, VariableRole};
use crate::var::{
    fit_var, identify_shock_iv, irf_from_var, stack_irf, wild_bootstrap, BootstrapDraws, BootstrapOptions,
    IdentifiedShockColumn, IdentifyOptions, Normalization, VarFit,
};

trait Staged<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> Staged<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at_stage(stage))
    }
}

/// Runs the task in `cfg`. Module errors come back tagged with the stage name.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ReportBundle> {
    cfg.validate().stage("configuration")?;
    let mut bundle = match cfg.task {
        Task::Simulate => run_simulate(cfg),
        Task::EstimateIrf => run_estimate_irf(cfg),
        Task::EstimateCounterfactual => run_estimate_counterfactual(cfg),
        Task::Historical => run_historical(cfg),
        Task::Future => run_future(cfg),
        Task::Intervention => run_intervention(cfg),
    }?;
    bundle.meta("task", cfg.task.as_str());
    bundle.meta("seed", cfg.seed);
    bundle.meta("horizon", cfg.horizon);
    bundle.meta("level", cfg.level);
    bundle.validate().stage("report")?;
    Ok(bundle)
}

struct Inputs {
    panel: PanelDataset,
    z: Option<InstrumentSeries>,
    zx: Option<InstrumentSeries>,
}

fn variable_roles(names: &[String], cfg: &ScenarioConfig) -> Result<Vec<VariableRole>> {
    let roles = cfg
        .roles
        .as_ref()
        .ok_or_else(|| Error::Roles("no role assignment".into()))?;
    let mut out = vec![VariableRole::Other; names.len()];
    let mut assign = |name: &str, role: VariableRole| -> Result<()> {
        let i = names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Roles(format!("{role:?} column {name:?} not among {names:?}")))?;
        if out[i] != VariableRole::Other {
            return Err(Error::Roles(format!("column {name:?} given two roles")));
        }
        out[i] = role;
        Ok(())
    };
    if let Some(d) = &roles.driver {
        assign(d, VariableRole::Driver)?;
    }
    assign(&roles.policy, VariableRole::Policy)?;
    assign(&roles.outcome, VariableRole::Outcome)?;
    if roles.driver.is_none() {
        // The role index needs a driver; the first unassigned column takes it.
        let free = out
            .iter()
            .position(|r| *r == VariableRole::Other)
            .ok_or_else(|| Error::Roles("need a third variable to act as driver".into()))?;
        out[free] = VariableRole::Driver;
    }
    Ok(out)
}

fn model_names(cfg: &ScenarioConfig) -> Option<&[String]> {
    match &cfg.model {
        ModelSpec::Estimated => None,
        ModelSpec::Svar { names, .. } | ModelSpec::ThresholdVar { names, .. } => Some(names),
    }
}

fn load_inputs(cfg: &ScenarioConfig) -> Result<Inputs> {
    let path = cfg
        .data_path
        .as_ref()
        .ok_or_else(|| Error::Config("data.path missing".into()))?;
    let table = load_table(path).stage("load data")?;
    let wanted: Vec<&str> = [&cfg.instrument, &cfg.instrument_x]
        .into_iter()
        .filter_map(|s| s.as_deref())
        .collect();
    let (panel, mut inst) = match &cfg.instrument_path {
        None => table.split(&wanted).stage("load data")?,
        Some(ip) => {
            let (panel, _) = table.split(&[]).stage("load data")?;
            let it = load_table(ip).stage("load instruments")?;
            let inst = wanted
                .iter()
                .map(|n| {
                    let j = it.column_index(n)?;
                    let vals = panel
                        .time_index
                        .iter()
                        .map(|t| it.time.iter().position(|s| s == t).and_then(|i| it.columns[j][i]))
                        .collect();
                    InstrumentSeries::new(vals)
                })
                .collect::<Result<Vec<_>>>()
                .stage("load instruments")?;
            (panel, inst)
        }
    };
    let panel = match model_names(cfg) {
        None => panel,
        Some(names) => {
            let idx = names
                .iter()
                .map(|n| {
                    panel
                        .names
                        .iter()
                        .position(|p| p == n)
                        .ok_or_else(|| Error::Roles(format!("model variable {n:?} not in the data")))
                })
                .collect::<Result<Vec<_>>>()
                .stage("assign roles")?;
            let obs = panel.observations.select_columns(&idx);
            PanelDataset::new(
                obs,
                names.to_vec(),
                vec![VariableRole::Other; names.len()],
                panel.time_index.clone(),
            )?
        }
    };
    let roles = variable_roles(&panel.names, cfg).stage("assign roles")?;
    let panel = panel.with_roles(roles).stage("assign roles")?;
    let zx = cfg
        .instrument_x
        .as_ref()
        .map(|_| inst.pop().expect("instrument_x loaded"));
    let z = cfg.instrument.as_ref().map(|_| inst.pop().expect("instrument loaded"));
    Ok(Inputs { panel, z, zx })
}

fn lag_order(cfg: &ScenarioConfig, panel: &PanelDataset) -> Result<usize> {
    match cfg.lags {
        LagSpec::Fixed(p) => Ok(p),
        LagSpec::Auto => default_lag_order(panel).stage("lag selection"),
    }
}

fn identify_options(cfg: &ScenarioConfig, var: usize) -> IdentifyOptions {
    IdentifyOptions {
        normalization: cfg.normalization.resolve(var),
        ..IdentifyOptions::default()
    }
}

/// Unit effect on the driver for the shock of interest, whatever the policy normalization.
fn interest_options(cfg: &ScenarioConfig, x: usize) -> IdentifyOptions {
    let mut o = identify_options(cfg, x);
    if let Normalization::UnitImpact { size, .. } = &mut o.normalization {
        *size = 1.0;
    }
    o
}

fn instrument<'a>(z: &'a Option<InstrumentSeries>, what: &str) -> Result<&'a InstrumentSeries> {
    z.as_ref().ok_or_else(|| Error::Config(format!("{what} missing")))
}

fn horizon_index(h: usize) -> String {
    format!("h{h:03}")
}

fn run_estimate_irf(cfg: &ScenarioConfig) -> Result<ReportBundle> {
    let inp = load_inputs(cfg)?;
    let z = instrument(&inp.z, "data.instrument")?;
    let roles = inp.panel.roles()?;
    let p = lag_order(cfg, &inp.panel)?;
    let obs = &inp.panel.observations;
    let fit = fit_var(obs, p).stage("VAR estimation")?;
    let ident = identify_options(cfg, roles.r);
    let col = identify_shock_iv(&fit, z, &ident).stage("shock identification")?;
    let h_max = cfg.horizon;
    let point = irf_from_var(&fit, &col, h_max);
    let n = inp.panel.n_vars();
    let mut bundle = ReportBundle::default();
    var_metadata(&mut bundle, &fit, &col, p);
    let mut block = PlotBlock::horizons("irf", h_max);
    if cfg.inference == InferenceMethod::None {
        for (i, name) in inp.panel.names.iter().enumerate() {
            let v = DVector::from_fn(h_max + 1, |h, _| point[h][i]);
            for h in 0..=h_max {
                bundle
                    .rows
                    .push(ReportRow::point(&format!("irf.{name}"), h, v[h], "svar_iv"));
            }
            block = block.series(name, &v);
        }
    } else {
        let opts = BootstrapOptions {
            identify: ident,
            ..BootstrapOptions::new(cfg.replications, cfg.seed)
        };
        let draws = wild_bootstrap(obs, p, &[z], &opts, |f, cols| {
            Ok(stack_irf(&irf_from_var(f, &cols[0], h_max)))
        })
        .stage("wild bootstrap")?;
        let bands = draws.bands(cfg.level).stage("wild bootstrap")?;
        let sd = draws_sd(&draws.draws);
        let zc = normal_critical_value(cfg.level)?;
        for (i, name) in inp.panel.names.iter().enumerate() {
            let pick = |v: &DVector<f64>| DVector::from_fn(h_max + 1, |h, _| v[h * n + i]);
            let v = DVector::from_fn(h_max + 1, |h, _| point[h][i]);
            for h in 0..=h_max {
                bundle.rows.push(
                    ReportRow::point(&format!("irf.{name}"), h, v[h], "wild_bootstrap").with_se(sd[h * n + i], zc),
                );
            }
            block = block.banded(name, &v, &pick(&bands.lower), &pick(&bands.upper));
        }
        bundle.meta("replications", draws.requested);
        bundle.meta("dropped_replications", draws.dropped);
        bundle.meta(
            "interval",
            "normal with bootstrap standard error; plot bands are percentile",
        );
    }
    bundle.meta("inference", cfg.inference.as_str());
    bundle.plots.push(block);
    Ok(bundle)
}

fn var_metadata(bundle: &mut ReportBundle, fit: &VarFit, col: &IdentifiedShockColumn, p: usize) {
    bundle.meta("lags", p);
    bundle.meta("effective_sample", fit.residuals.nrows());
    bundle.meta("first_stage_f", col.first_stage_f);
    bundle.meta("instrument_overlap", col.overlap);
}

fn draws_sd(draws: &[DVector<f64>]) -> DVector<f64> {
    let n = draws.len() as f64;
    let len = draws.first().map_or(0, |d| d.len());
    let mean = draws.iter().fold(DVector::zeros(len), |a, d| a + d) / n;
    let ss = draws
        .iter()
        .fold(DVector::zeros(len), |a: DVector<f64>, d| a + (d - &mean).map(|v| v * v));
    (ss / (n - 1.0)).map(f64::sqrt)
}

/// Path deviation `d = baseline - counterfactual` over horizons `0..=H`.
fn path_deviation(cfg: &ScenarioConfig, baseline: DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let spec = cfg.path.as_deref().unwrap_or("baseline");
    let cf = build_path(spec, &baseline).stage("counterfactual path")?;
    Ok((&baseline - &cf, cf))
}

/// Row of `label` in the panel: a matching time stamp, else a row index.
fn resolve_start(label: &str, panel: &PanelDataset) -> Result<usize> {
    if let Ok(t) = TimeStamp::parse(label) {
        if let Some(i) = panel.time_index.iter().position(|s| *s == t) {
            return Ok(i);
        }
    }
    match label.parse::<usize>() {
        Ok(i) if i < panel.len() => Ok(i),
        _ => Err(Error::Config(format!(
            "counterfactual.start {label:?} is neither a date nor a row of the data"
        ))),
    }
}

fn observed_policy(panel: &PanelDataset, start: usize, horizon: usize) -> Result<DVector<f64>> {
    let r = panel.roles()?.r;
    if start + horizon >= panel.len() {
        return Err(Error::InsufficientSample(format!(
            "path rows {start}..={} exceed the {} observations",
            start + horizon,
            panel.len()
        )));
    }
    Ok(DVector::from_fn(horizon + 1, |h, _| panel.observations[(start + h, r)]))
}

/// Period-by-period IRF set from VAR responses to the policy and interest shocks.
fn var_irf_set(
    irf_r: &[DVector<f64>],
    irf_x: Option<&[DVector<f64>]>,
    roles: RoleIndex,
    horizon: usize,
) -> Result<ImpulseResponseSet> {
    let m = horizon + 1;
    let theta_re = DMatrix::from_fn(m, m, |k, j| if k >= j { irf_r[k - j][roles.r] } else { 0.0 });
    let theta_ye = (0..m)
        .map(|h| DVector::from_fn(m, |j, _| if j <= h { irf_r[h - j][roles.y] } else { 0.0 }))
        .collect();
    let theta_yx = irf_x.map(|x| DVector::from_fn(m, |h, _| x[h][roles.y]));
    let d_po = irf_x.map(|x| DVector::from_fn(m, |h, _| x[h][roles.r]));
    ImpulseResponseSet::new(theta_yx, d_po, theta_re, theta_ye)
}

fn unstack(v: &DVector<f64>, n: usize, horizon: usize) -> Vec<DVector<f64>> {
    (0..=horizon).map(|h| v.rows(h * n, n).into_owned()).collect()
}

fn run_estimate_counterfactual(cfg: &ScenarioConfig) -> Result<ReportBundle> {
    let inp = load_inputs(cfg)?;
    let z = instrument(&inp.z, "data.instrument")?;
    let roles = inp.panel.roles()?;
    let p = lag_order(cfg, &inp.panel)?;
    let h_max = cfg.horizon;
    let intervention = cfg.counterfactual_kind == CounterfactualKind::Intervention;
    let baseline = match &cfg.start {
        Some(s) => observed_policy(&inp.panel, resolve_start(s, &inp.panel)?, h_max).stage("counterfactual path")?,
        None => DVector::zeros(h_max + 1),
    };
    let (d, cf_path) = path_deviation(cfg, baseline.clone())?;
    let quantity = if intervention { "phi" } else { "psi" };
    let zc = normal_critical_value(cfg.level)?;
    let mut bundle = ReportBundle::default();
    bundle.meta("lags", p);
    bundle.meta("inference", cfg.inference.as_str());
    bundle.meta(
        "counterfactual",
        if intervention { "intervention" } else { "hypothetical" },
    );
    let mut center = DVector::zeros(h_max + 1);
    let mut bands: Option<(DVector<f64>, DVector<f64>)> = None;
    match cfg.inference {
        InferenceMethod::Hac | InferenceMethod::Hr => {
            let (mut lo, mut hi) = (DVector::zeros(h_max + 1), DVector::zeros(h_max + 1));
            for h in 0..=h_max {
                let fit = match (intervention, &inp.zx) {
                    (false, _) => estimate_beta(&inp.panel, z, h, p),
                    (true, None) => estimate_phi(&inp.panel, z, h, p),
                    (true, Some(zx)) => estimate_phi_alternative(&inp.panel, z, zx, h, p),
                }
                .stage("local projection")?;
                let lrv = match cfg.inference {
                    InferenceMethod::Hac => hac_lrv(&fit.scores),
                    _ => hr_lrv(&fit),
                }
                .stage("long-run variance")?;
                let contrast = if intervention {
                    Contrast::Intervention
                } else {
                    Contrast::Hypothetical(d.rows(0, h + 1).into_owned())
                };
                let est = se_counterfactual(&fit, &lrv, &contrast, cfg.level).stage("standard errors")?;
                let row = ReportRow::from_estimate(quantity, &est);
                let key = horizon_index(h);
                bundle.meta(&format!("effective_sample.{key}"), fit.n_eff());
                match lrv.method {
                    LrvMethod::Hac { bandwidth, .. } => bundle.meta(&format!("bandwidth.{key}"), bandwidth),
                    LrvMethod::HrReordered { dropped } => bundle.meta(&format!("hr_dropped.{key}"), dropped),
                }
                center[h] = row.estimate;
                if let Some((a, b)) = row.ci {
                    lo[h] = a;
                    hi[h] = b;
                }
                bundle.rows.push(ReportRow {
                    method: format!("lp_iv_{}", cfg.inference.as_str()),
                    ..row
                });
            }
            bands = Some((lo, hi));
        }
        InferenceMethod::Delta | InferenceMethod::WildBootstrap | InferenceMethod::None => {
            let obs = &inp.panel.observations;
            let fit = fit_var(obs, p).stage("VAR estimation")?;
            let id_r = identify_options(cfg, roles.r);
            let id_x = interest_options(cfg, roles.x);
            let col_r = identify_shock_iv(&fit, z, &id_r).stage("shock identification")?;
            let col_x = match (&inp.zx, intervention) {
                (Some(zx), true) => Some(identify_shock_iv(&fit, zx, &id_x).stage("shock identification")?),
                _ => None,
            };
            var_metadata(&mut bundle, &fit, &col_r, p);
            let n = inp.panel.n_vars();
            let evaluate = |irf_r: &[DVector<f64>],
                            irf_x: Option<&[DVector<f64>]>|
             -> Result<(ImpulseResponseSet, DVector<f64>)> {
                let set = var_irf_set(irf_r, irf_x, roles, h_max)?;
                let vals = if intervention {
                    DVector::from_iterator(
                        h_max + 1,
                        (0..=h_max)
                            .map(|h| policy_intervention_effect(&set, h).map(|e| e.value))
                            .collect::<Result<Vec<_>>>()?,
                    )
                } else {
                    let dev = PolicyPathDeviation::hypothetical(d.clone())?;
                    let betas = hypothetical_trajectory_params(&set)?;
                    DVector::from_iterator(
                        h_max + 1,
                        betas
                            .iter()
                            .enumerate()
                            .map(|(h, b)| hypothetical_output_gap(h, b, &dev).map(|e| e.value))
                            .collect::<Result<Vec<_>>>()?,
                    )
                };
                Ok((set, vals))
            };
            let irf_r = irf_from_var(&fit, &col_r, h_max);
            let irf_x = col_x.as_ref().map(|c| irf_from_var(&fit, c, h_max));
            let (set, point) = evaluate(&irf_r, irf_x.as_deref()).stage("counterfactual")?;
            center = point.clone();
            if cfg.inference == InferenceMethod::None {
                for h in 0..=h_max {
                    bundle
                        .rows
                        .push(ReportRow::point(quantity, h, point[h], Method::Analytic.as_str()));
                }
            } else {
                let mut insts: Vec<&InstrumentSeries> = vec![z];
                if col_x.is_some() {
                    insts.push(inp.zx.as_ref().expect("checked above"));
                }
                let opts = BootstrapOptions {
                    identify: id_r,
                    ..BootstrapOptions::new(cfg.replications, cfg.seed)
                };
                let with_x = col_x.is_some();
                let draws = wild_bootstrap(obs, p, &insts, &opts, |f, cols| {
                    let mut v = stack_irf(&irf_from_var(f, &cols[0], h_max));
                    if with_x {
                        // Re-normalize the interest column to a unit driver effect.
                        let scale = cols[1].impact[roles.x];
                        if !(scale.abs() > 0.0) {
                            return Err(Error::invalid("interest shock has no driver impact"));
                        }
                        let cx = IdentifiedShockColumn {
                            impact: &cols[1].impact / scale,
                            ..cols[1].clone()
                        };
                        let vx = stack_irf(&irf_from_var(f, &cx, h_max));
                        v = DVector::from_iterator(v.len() + vx.len(), v.iter().chain(vx.iter()).copied());
                    }
                    Ok(v)
                })
                .stage("wild bootstrap")?;
                bundle.meta("replications", draws.requested);
                bundle.meta("dropped_replications", draws.dropped);
                let block = n * (h_max + 1);
                let sets = draws
                    .draws
                    .iter()
                    .map(|v| {
                        let r = unstack(&v.rows(0, block).into_owned(), n, h_max);
                        let x = with_x.then(|| unstack(&v.rows(block, block).into_owned(), n, h_max));
                        evaluate(&r, x.as_deref())
                    })
                    .collect::<Result<Vec<_>>>()
                    .stage("wild bootstrap")?;
                let se = if cfg.inference == InferenceMethod::WildBootstrap {
                    let vals: Vec<DVector<f64>> = sets.iter().map(|s| s.1.clone()).collect();
                    let b = BootstrapDraws {
                        draws: vals.clone(),
                        dropped: draws.dropped,
                        requested: draws.requested,
                    }
                    .bands(cfg.level)
                    .stage("wild bootstrap")?;
                    bands = Some((b.lower, b.upper));
                    draws_sd(&vals)
                } else {
                    let mut se = DVector::zeros(h_max + 1);
                    for h in 0..=h_max {
                        let stacked = |s: &ImpulseResponseSet| -> DVector<f64> {
                            let m = h_max + 1;
                            let mut v = DVector::zeros(1 + m + m * m + m);
                            v[0] = s.theta_yx.as_ref().map_or(0.0, |t| t[h]);
                            if let Some(dp) = &s.d_po {
                                v.rows_mut(1, m).copy_from(dp);
                            }
                            v.rows_mut(1 + m, m * m).copy_from_slice(s.theta_re.as_slice());
                            v.rows_mut(1 + m + m * m, m).copy_from(&s.theta_ye_by_h[h]);
                            v
                        };
                        let cov = BootstrapDraws {
                            draws: sets.iter().map(|s| stacked(&s.0)).collect(),
                            dropped: 0,
                            requested: sets.len(),
                        }
                        .covariance()
                        .stage("delta method")?;
                        let d_po = set.d_po.clone().unwrap_or_else(|| DVector::zeros(h_max + 1));
                        let theta_yx = set.theta_yx.as_ref().map_or(0.0, |t| t[h]);
                        let dist =
                            IrfJointDistribution::new(theta_yx, &d_po, &set.theta_re, &set.theta_ye_by_h[h], cov)
                                .stage("delta method")?;
                        let dv = delta_method_avar(&dist, (!intervention).then_some(&d), None).stage("delta method")?;
                        let avar = if intervention {
                            dv.avar_phi
                        } else {
                            dv.avar_psi.unwrap_or(0.0)
                        };
                        se[h] = avar.max(0.0).sqrt();
                        if h == 0 {
                            bundle.meta("delta_case", format!("{:?}", dv.case));
                        }
                    }
                    se
                };
                let method = cfg.inference.as_str();
                for h in 0..=h_max {
                    bundle
                        .rows
                        .push(ReportRow::point(quantity, h, point[h], method).with_se(se[h], zc));
                }
                if bands.is_none() {
                    bands = Some((
                        DVector::from_fn(h_max + 1, |h, _| point[h] - zc * se[h]),
                        DVector::from_fn(h_max + 1, |h, _| point[h] + zc * se[h]),
                    ));
                }
            }
        }
    }
    let mut block = PlotBlock::horizons(quantity, h_max);
    block = match &bands {
        Some((lo, hi)) => block.banded(quantity, &center, lo, hi),
        None => block.series(quantity, &center),
    };
    if !intervention {
        block = block
            .series("policy_baseline", &baseline)
            .series("policy_counterfactual", &cf_path);
    }
    bundle.plots.push(block);
    Ok(bundle)
}

/// A simulation-ready structural model and its lag length.
enum Built {
    Var(StructuralVar),
    Threshold(ThresholdVar),
}

impl Built {
    fn model(&self) -> &dyn StructuralModel {
        match self {
            Built::Var(m) => m,
            Built::Threshold(m) => m,
        }
    }

    fn lags(&self) -> usize {
        match self {
            Built::Var(m) => m.lags(),
            Built::Threshold(_) => 1,
        }
    }

    /// `W_{row-1}, ..., W_{row-p}` stacked.
    fn state(&self, obs: &DMatrix<f64>, row: usize) -> Result<DVector<f64>> {
        let (p, n) = (self.lags(), obs.ncols());
        if row < p || row > obs.nrows() {
            return Err(Error::InsufficientSample(format!("no {p} lags before row {row}")));
        }
        Ok(DVector::from_fn(n * p, |i, _| obs[(row - 1 - i / n, i % n)]))
    }
}

fn shock_roles(names: &Option<Vec<String>>, vars: &[VariableRole]) -> Result<Vec<ShockRole>> {
    match names {
        Some(list) => list
            .iter()
            .map(|s| match s.as_str() {
                "interest" => Ok(ShockRole::Interest),
                "policy" => Ok(ShockRole::Policy),
                "other" => Ok(ShockRole::Other),
                o => Err(Error::Config(format!("model.shocks: unknown role {o:?}"))),
            })
            .collect(),
        None => Ok(vars
            .iter()
            .map(|v| match v {
                VariableRole::Driver => ShockRole::Interest,
                VariableRole::Policy => ShockRole::Policy,
                _ => ShockRole::Other,
            })
            .collect()),
    }
}

fn build_specified(cfg: &ScenarioConfig) -> Result<(Built, Vec<String>)> {
    let names = model_names(cfg)
        .ok_or_else(|| Error::Config("no specified model".into()))?
        .to_vec();
    let vars = variable_roles(&names, cfg).stage("assign roles")?;
    let built = match &cfg.model {
        ModelSpec::Svar {
            intercept,
            lags,
            impact,
            shocks,
            ..
        } => Built::Var(StructuralVar::new(
            intercept.clone(),
            lags.clone(),
            impact.clone(),
            vars.clone(),
            shock_roles(shocks, &vars)?,
        )?),
        ModelSpec::ThresholdVar {
            intercept,
            lag,
            impact,
            threshold,
            shocks,
            ..
        } => Built::Threshold(ThresholdVar::new(
            intercept.clone(),
            lag.clone(),
            impact.clone(),
            *threshold,
            vars.clone(),
            shock_roles(shocks, &vars)?,
        )?),
        ModelSpec::Estimated => unreachable!("model_names returned Some"),
    };
    Ok((built, names))
}

/// Fitted or specified model for the scenario tasks, with the data it applies to.
fn scenario_model(cfg: &ScenarioConfig, inp: &Inputs, bundle: &mut ReportBundle) -> Result<Built> {
    if !matches!(cfg.model, ModelSpec::Estimated) {
        return Ok(build_specified(cfg).stage("model specification")?.0);
    }
    let roles = inp.panel.roles()?;
    let p = lag_order(cfg, &inp.panel)?;
    let fit = fit_var(&inp.panel.observations, p).stage("VAR estimation")?;
    let z = instrument(&inp.z, "data.instrument")?;
    let col_r = identify_shock_iv(&fit, z, &identify_options(cfg, roles.r)).stage("shock identification")?;
    let col_x = match &inp.zx {
        Some(zx) => Some(identify_shock_iv(&fit, zx, &interest_options(cfg, roles.x)).stage("shock identification")?),
        None => None,
    };
    var_metadata(bundle, &fit, &col_r, p);
    let m = StructuralVar::from_identified(&fit, &col_r, col_x.as_ref(), inp.panel.roles.clone())
        .stage("model specification")?;
    Ok(Built::Var(m))
}

fn solver(cfg: &ScenarioConfig) -> SolverOptions {
    SolverOptions {
        seed: cfg.seed,
        ..SolverOptions::default()
    }
}

fn run_historical(cfg: &ScenarioConfig) -> Result<ReportBundle> {
    let inp = load_inputs(cfg)?;
    let mut bundle = ReportBundle::default();
    let built = scenario_model(cfg, &inp, &mut bundle)?;
    let model = built.model();
    let h_max = cfg.horizon;
    let start = resolve_start(cfg.start.as_deref().unwrap_or("0"), &inp.panel).stage("counterfactual path")?;
    let p = built.lags();
    if start < p {
        return Err(Error::InsufficientSample(format!(
            "start row {start} leaves fewer than {p} lags"
        )))
        .stage("counterfactual path");
    }
    let observed_r = observed_policy(&inp.panel, start, h_max).stage("counterfactual path")?;
    let (_, path) = path_deviation(cfg, observed_r.clone())?;
    let obs = &inp.panel.observations;
    let w0 = built.state(obs, p)?;
    let sample = obs.rows(p, obs.nrows() - p).into_owned();
    let selected = model.default_selection(h_max).stage("shock selection")?;
    let res = historical_scenario(model, &sample, &w0, start - p, &path, &selected, &solver(cfg))
        .stage("historical scenario")?;
    let disparity = res.disparity.row(0).transpose();
    for h in 0..=h_max {
        bundle
            .rows
            .push(ReportRow::point("disparity", h, disparity[h], "historical"));
    }
    bundle.meta("start", &inp.panel.time_index[start]);
    let time = (0..=h_max)
        .map(|h| inp.panel.time_index[start + h].to_string())
        .collect();
    bundle.plots.push(
        PlotBlock::new("historical", time)
            .series("outcome_observed", &res.baseline.row(0).transpose())
            .series("outcome_counterfactual", &res.counterfactual.row(0).transpose())
            .series("policy_observed", &observed_r)
            .series("policy_counterfactual", &path)
            .series("disparity", &disparity),
    );
    Ok(bundle)
}

fn mc_rows(bundle: &mut ReportBundle, quantity: &str, mean: &DVector<f64>, se: &DVector<f64>, zc: f64) {
    for h in 0..mean.len() {
        bundle
            .rows
            .push(ReportRow::point(quantity, h, mean[h], Method::Simulated.as_str()).with_se(se[h], zc));
    }
}

fn run_future(cfg: &ScenarioConfig) -> Result<ReportBundle> {
    let inp = load_inputs(cfg)?;
    let mut bundle = ReportBundle::default();
    let built = scenario_model(cfg, &inp, &mut bundle)?;
    let model = built.model();
    let h_max = cfg.horizon;
    let p = built.lags();
    let obs = &inp.panel.observations;
    let w0 = built.state(obs, p)?;
    let sample = obs.rows(p, obs.nrows() - p).into_owned();
    let past = recover_checked(model, &sample, &w0).stage("shock recovery")?;
    let dist = ShockDistribution::empirical(&past).stage("shock recovery")?;
    // Policy path with all future shocks at zero.
    let mut shocks = DMatrix::zeros(past.nrows() + h_max + 1, model.n_shock());
    shocks.rows_mut(0, past.nrows()).copy_from(&past);
    let forecast = model.evaluate(&shocks, &w0).stage("future scenario")?;
    let r = model.roles().r;
    let base = DVector::from_fn(h_max + 1, |h, _| forecast[(past.nrows() + h, r)]);
    let (_, path) = path_deviation(cfg, base.clone())?;
    let selected = model.default_selection(h_max).stage("shock selection")?;
    let res = future_scenario_with(
        model,
        &past,
        &w0,
        &path,
        &selected,
        &dist,
        cfg.replications,
        cfg.seed,
        &solver(cfg),
    )
    .stage("future scenario")?;
    let zc = normal_critical_value(cfg.level)?;
    let (mean, se) = (res.mean(), res.mc_se());
    mc_rows(&mut bundle, "disparity", &mean, &se, zc);
    let (lo, hi) = res.bands(cfg.level)?;
    let last = *inp.panel.time_index.last().expect("non-empty panel");
    let time = (0..=h_max).map(|h| last.advance(h as i64 + 1).to_string()).collect();
    bundle.plots.push(
        PlotBlock::new("future", time)
            .banded("disparity", &mean, &lo, &hi)
            .series("policy_forecast", &base)
            .series("policy_counterfactual", &path),
    );
    bundle.meta("replications", res.requested);
    bundle.meta("dropped_replications", res.dropped);
    bundle.meta("plot_bands", "percentile of replications");
    Ok(bundle)
}

fn run_intervention(cfg: &ScenarioConfig) -> Result<ReportBundle> {
    let mut bundle = ReportBundle::default();
    let (built, w0, dist) = if matches!(cfg.model, ModelSpec::Estimated) {
        let inp = load_inputs(cfg)?;
        let built = scenario_model(cfg, &inp, &mut bundle)?;
        let p = built.lags();
        let obs = &inp.panel.observations;
        let w0 = built.state(obs, p)?;
        let sample = obs.rows(p, obs.nrows() - p).into_owned();
        let past = recover_checked(built.model(), &sample, &w0).stage("shock recovery")?;
        let dist = ShockDistribution::empirical(&past).stage("shock recovery")?;
        let end = built.state(obs, obs.nrows())?;
        (built, end, dist)
    } else {
        let (built, names) = build_specified(cfg).stage("model specification")?;
        let w0 = DVector::zeros(names.len() * built.lags());
        let dist = ShockDistribution::Gaussian(DVector::from_element(built.model().n_shock(), 1.0));
        (built, w0, dist)
    };
    let model = built.model();
    let h_max = cfg.horizon;
    let setup = InterventionSetup {
        start: cfg.intervention_start,
        horizon: h_max,
        dist,
        fixed_history: None,
        retain_draws: false,
    };
    let selected = model.default_selection(h_max).stage("shock selection")?;
    let res = zeroing_out_intervention(model, &w0, &setup, &selected, cfg.replications, cfg.seed, &solver(cfg))
        .stage("intervention")?;
    let zc = normal_critical_value(cfg.level)?;
    let (mean, se) = (res.mean(), res.mc_se());
    mc_rows(&mut bundle, "phi", &mean, &se, zc);
    if let Built::Var(v) = &built {
        let svma = v.to_svma(h_max).stage("analytic benchmark")?;
        let set = build_irf_set(&svma, h_max, &selected).stage("analytic benchmark")?;
        for h in 0..=h_max {
            let e = policy_intervention_effect(&set, h).stage("analytic benchmark")?;
            bundle.rows.push(ReportRow::from_estimate("phi_analytic", &e));
        }
    }
    let (lo, hi) = res.bands(cfg.level)?;
    bundle
        .plots
        .push(PlotBlock::horizons("intervention", h_max).banded("phi", &mean, &lo, &hi));
    bundle.meta("replications", res.requested);
    bundle.meta("dropped_replications", res.dropped);
    bundle.meta("intervention_start", cfg.intervention_start);
    bundle.meta("plot_bands", "percentile of replications");
    Ok(bundle)
}

/// Synthetic data from the specified model: the observables after a burn-in,
/// then instruments `z` (policy shock plus noise) and, when the model has a
/// shock of interest, `zx`.
pub fn simulate_data(cfg: &ScenarioConfig) -> Result<DataTable> {
    let (built, names) = build_specified(cfg).stage("model specification")?;
    let model = built.model();
    let t_len = cfg.burn_in + cfg.periods;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let shocks = DMatrix::from_fn(t_len, model.n_shock(), |_, _| normal());
    let w0 = DVector::zeros(names.len() * built.lags());
    let w = model.evaluate(&shocks, &w0).stage("simulation")?;
    let keep =
        |m: &DMatrix<f64>, j: usize| -> Vec<Option<f64>> { (cfg.burn_in..t_len).map(|t| Some(m[(t, j)])).collect() };
    let mut columns: Vec<Vec<Option<f64>>> = (0..names.len()).map(|j| keep(&w, j)).collect();
    let mut col_names = names.clone();
    let mut noisy = |s: usize, name: &str| {
        let v = (cfg.burn_in..t_len)
            .map(|t| Some(shocks[(t, s)] + cfg.instrument_noise * normal()))
            .collect();
        columns.push(v);
        col_names.push(name.to_string());
    };
    let r = *model
        .policy_shocks()
        .first()
        .ok_or_else(|| Error::Roles("model has no policy shock".into()))
        .stage("simulation")?;
    noisy(r, "z");
    if let Some(x) = model.shock_of_interest() {
        noisy(x, "zx");
    }
    Ok(DataTable {
        time_header: "period".into(),
        time: (0..cfg.periods as i64).map(TimeStamp::Period).collect(),
        names: col_names,
        columns,
    })
}

fn run_simulate(cfg: &ScenarioConfig) -> Result<ReportBundle> {
    let table = simulate_data(cfg)?;
    let mut bundle = ReportBundle::default();
    let mut block = PlotBlock::new("data", table.time.iter().map(ToString::to_string).collect());
    for (n, c) in table.names.iter().zip(&table.columns) {
        block = block.series(
            n,
            &DVector::from_iterator(c.len(), c.iter().map(|v| v.unwrap_or(f64::NAN))),
        );
    }
    bundle.plots.push(block);
    bundle.meta("periods", cfg.periods);
    bundle.meta("burn_in", cfg.burn_in);
    bundle.meta("instrument_noise", cfg.instrument_noise);
    Ok(bundle)
}
