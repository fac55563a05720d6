//! Scenario configuration: a flat file of dotted `key = value` lines.
//!
//! Values follow TOML syntax (strings quoted, numbers bare). Matrices are
//! strings with rows separated by `;`, entries by `,`, and lag matrices by `|`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use toml::Value;

use crate::error::{Error, Result};
use crate::var::Normalization;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Simulate,
    EstimateIrf,
    EstimateCounterfactual,
    Historical,
    Future,
    Intervention,
}

impl Task {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "simulate" => Task::Simulate,
            "estimate_irf" => Task::EstimateIrf,
            "estimate_counterfactual" => Task::EstimateCounterfactual,
            "historical" => Task::Historical,
            "future" => Task::Future,
            "intervention" => Task::Intervention,
            _ => return Err(Error::Config(format!("unknown task {s:?}"))),
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Simulate => "simulate",
            Task::EstimateIrf => "estimate_irf",
            Task::EstimateCounterfactual => "estimate_counterfactual",
            Task::Historical => "historical",
            Task::Future => "future",
            Task::Intervention => "intervention",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagSpec {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InferenceMethod {
    Hac,
    Hr,
    Delta,
    WildBootstrap,
    None,
}

impl InferenceMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            InferenceMethod::Hac => "hac",
            InferenceMethod::Hr => "hr",
            InferenceMethod::Delta => "delta",
            InferenceMethod::WildBootstrap => "wild_bootstrap",
            InferenceMethod::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CounterfactualKind {
    Hypothetical,
    Intervention,
}

/// Where the structural model comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    /// VAR with instrument-identified shocks, fitted to the data.
    Estimated,
    Svar {
        names: Vec<String>,
        intercept: DVector<f64>,
        lags: Vec<DMatrix<f64>>,
        impact: DMatrix<f64>,
        shocks: Option<Vec<String>>,
    },
    ThresholdVar {
        names: Vec<String>,
        intercept: [DVector<f64>; 2],
        lag: [DMatrix<f64>; 2],
        impact: [DMatrix<f64>; 2],
        threshold: f64,
        shocks: Option<Vec<String>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Roles {
    pub driver: Option<String>,
    pub policy: String,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub task: Task,
    pub seed: u64,
    pub horizon: usize,
    pub level: f64,
    pub replications: usize,
    pub data_path: Option<PathBuf>,
    /// Separate file holding instrument columns, joined on the time column.
    pub instrument_path: Option<PathBuf>,
    pub instrument: Option<String>,
    pub instrument_x: Option<String>,
    pub roles: Option<Roles>,
    pub lags: LagSpec,
    pub model: ModelSpec,
    pub normalization: NormalizationSpec,
    pub counterfactual_kind: CounterfactualKind,
    /// Row index or time stamp where the counterfactual path starts.
    pub start: Option<String>,
    pub path: Option<String>,
    pub inference: InferenceMethod,
    pub periods: usize,
    pub burn_in: usize,
    pub instrument_noise: f64,
    pub intervention_start: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormalizationSpec {
    UnitShock,
    /// Unit impact of the identified shock on its own (policy or driver) variable, scaled.
    UnitImpact(f64),
}

impl NormalizationSpec {
    pub fn resolve(self, var: usize) -> Normalization {
        match self {
            NormalizationSpec::UnitShock => Normalization::UnitShock,
            NormalizationSpec::UnitImpact(size) => Normalization::UnitImpact { var, size },
        }
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

struct Keys {
    map: BTreeMap<String, Value>,
}

impl Keys {
    fn take(&mut self, key: &str) -> Option<Value> {
        self.map.remove(key)
    }

    fn string(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(Error::Config(format!("{key}: expected a string, got {v}"))),
        }
    }

    fn float(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(x)),
            Some(Value::Integer(i)) => Ok(Some(i as f64)),
            Some(v) => Err(Error::Config(format!("{key}: expected a number, got {v}"))),
        }
    }

    fn uint(&mut self, key: &str) -> Result<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if i >= 0 => Ok(Some(i as usize)),
            Some(v) => Err(Error::Config(format!(
                "{key}: expected a non-negative integer, got {v}"
            ))),
        }
    }

    /// Strings or integers, rendered as text.
    fn label(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(Value::Integer(i)) => Ok(Some(i.to_string())),
            Some(v) => Err(Error::Config(format!("{key}: expected a string or integer, got {v}"))),
        }
    }

    fn numbers(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => parse_numbers(&s)
                .map(Some)
                .map_err(|e| Error::Config(format!("{key}: {e}"))),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    Value::Float(x) => Ok(*x),
                    Value::Integer(i) => Ok(*i as f64),
                    _ => Err(Error::Config(format!("{key}: non-numeric array entry"))),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(v) => Err(Error::Config(format!("{key}: expected numbers, got {v}"))),
        }
    }

    fn matrices(&mut self, key: &str) -> Result<Option<Vec<DMatrix<f64>>>> {
        match self.string(key)? {
            None => Ok(None),
            Some(s) => s
                .split('|')
                .map(|m| parse_matrix(m).map_err(|e| Error::Config(format!("{key}: {e}"))))
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    fn names(&mut self, key: &str) -> Result<Option<Vec<String>>> {
        Ok(self
            .string(key)?
            .map(|s| s.split(',').map(|n| n.trim().to_string()).collect()))
    }
}

fn parse_numbers(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| format!("{:?} is not a number", x.trim()))
        })
        .collect()
}

/// `"a, b; c, d"` to a 2x2 matrix.
pub fn parse_matrix(s: &str) -> std::result::Result<DMatrix<f64>, String> {
    let rows = s
        .split(';')
        .map(parse_numbers)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let n = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err("matrix rows must be non-empty and of equal length".into());
    }
    Ok(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

impl ScenarioConfig {
    /// Parses configuration text; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            Error::Parse {
                line,
                message: e.message().to_string(),
            }
        })?;
        let mut map = BTreeMap::new();
        flatten("", &table, &mut map);
        let mut k = Keys { map };
        let task = Task::parse(
            &k.string("task")?
                .ok_or_else(|| Error::Config("missing key task".into()))?,
        )?;
        let resolve = |p: String| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };
        let lags = match k.take("lags") {
            None => LagSpec::Auto,
            Some(Value::String(s)) if s == "auto" => LagSpec::Auto,
            Some(Value::Integer(i)) if i >= 1 => LagSpec::Fixed(i as usize),
            Some(v) => {
                return Err(Error::Config(format!(
                    "lags: expected \"auto\" or a positive integer, got {v}"
                )))
            }
        };
        let roles = match (
            k.string("roles.driver")?,
            k.string("roles.policy")?,
            k.string("roles.outcome")?,
        ) {
            (d, Some(policy), Some(outcome)) => Some(Roles {
                driver: d,
                policy,
                outcome,
            }),
            (None, None, None) => None,
            _ => {
                return Err(Error::Config(
                    "roles.policy and roles.outcome must both be given".into(),
                ))
            }
        };
        let normalization = match k.string("identification.normalization")?.as_deref() {
            None | Some("unit_impact") => NormalizationSpec::UnitImpact(k.float("identification.size")?.unwrap_or(1.0)),
            Some("unit_shock") => NormalizationSpec::UnitShock,
            Some(o) => {
                return Err(Error::Config(format!(
                    "identification.normalization: unknown value {o:?}"
                )))
            }
        };
        let counterfactual_kind = match k.string("counterfactual.kind")?.as_deref() {
            None | Some("hypothetical") => CounterfactualKind::Hypothetical,
            Some("intervention") => CounterfactualKind::Intervention,
            Some(o) => return Err(Error::Config(format!("counterfactual.kind: unknown value {o:?}"))),
        };
        let inference = match k.string("inference.method")?.as_deref() {
            None | Some("none") => InferenceMethod::None,
            Some("hac") => InferenceMethod::Hac,
            Some("hr") => InferenceMethod::Hr,
            Some("delta") => InferenceMethod::Delta,
            Some("wild_bootstrap") => InferenceMethod::WildBootstrap,
            Some(o) => return Err(Error::Config(format!("inference.method: unknown value {o:?}"))),
        };
        let model = Self::parse_model(&mut k)?;
        let cfg = ScenarioConfig {
            task,
            seed: k.uint("seed")?.unwrap_or(0) as u64,
            horizon: k
                .uint("horizon")?
                .ok_or_else(|| Error::Config("missing key horizon".into()))?,
            level: k.float("level")?.unwrap_or(0.9),
            replications: k.uint("replications")?.unwrap_or(500),
            data_path: k.string("data.path")?.map(resolve),
            instrument_path: k.string("data.instrument_path")?.map(resolve),
            instrument: k.string("data.instrument")?,
            instrument_x: k.string("data.instrument_x")?,
            roles,
            lags,
            model,
            normalization,
            counterfactual_kind,
            start: k.label("counterfactual.start")?,
            path: k.string("counterfactual.path")?,
            inference,
            periods: k.uint("simulate.periods")?.unwrap_or(500),
            burn_in: k.uint("simulate.burn_in")?.unwrap_or(100),
            instrument_noise: k.float("simulate.instrument_noise")?.unwrap_or(1.0),
            intervention_start: k.uint("intervention.start")?.unwrap_or(50),
        };
        if let Some(key) = k.map.keys().next() {
            return Err(Error::Config(format!("unknown key {key}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| super::table::io_err(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn parse_model(k: &mut Keys) -> Result<ModelSpec> {
        let kind = k.string("model.kind")?;
        let names = || Error::Config("model.names is required for a specified model".into());
        let need =
            |v: Option<Vec<DMatrix<f64>>>, key: &str| v.ok_or_else(|| Error::Config(format!("missing key {key}")));
        match kind.as_deref() {
            None | Some("estimated") => Ok(ModelSpec::Estimated),
            Some("svar") => {
                let names = k.names("model.names")?.ok_or_else(names)?;
                let n = names.len();
                let lags = need(k.matrices("model.lag")?, "model.lag")?;
                let impact = need(k.matrices("model.impact")?, "model.impact")?.remove(0);
                let intercept = k.numbers("model.intercept")?.unwrap_or_else(|| vec![0.0; n]);
                Ok(ModelSpec::Svar {
                    names,
                    intercept: DVector::from_vec(intercept),
                    lags,
                    impact,
                    shocks: k.names("model.shocks")?,
                })
            }
            Some("threshold_var") => {
                let names = k.names("model.names")?.ok_or_else(names)?;
                let n = names.len();
                let lag = need(k.matrices("model.lag")?, "model.lag")?.remove(0);
                let impact = need(k.matrices("model.impact")?, "model.impact")?.remove(0);
                let lag_high = k
                    .matrices("model.lag_high")?
                    .map_or_else(|| lag.clone(), |mut m| m.remove(0));
                let impact_high = k
                    .matrices("model.impact_high")?
                    .map_or_else(|| impact.clone(), |mut m| m.remove(0));
                let c = DVector::from_vec(k.numbers("model.intercept")?.unwrap_or_else(|| vec![0.0; n]));
                let c_high = k
                    .numbers("model.intercept_high")?
                    .map_or_else(|| c.clone(), DVector::from_vec);
                Ok(ModelSpec::ThresholdVar {
                    names,
                    intercept: [c, c_high],
                    lag: [lag, lag_high],
                    impact: [impact, impact_high],
                    threshold: k.float("model.threshold")?.unwrap_or(0.0),
                    shocks: k.names("model.shocks")?,
                })
            }
            Some(o) => Err(Error::Config(format!("model.kind: unknown value {o:?}"))),
        }
    }

    /// Task-required fields and value ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("level {} not in (0, 1)", self.level)));
        }
        let specified = !matches!(self.model, ModelSpec::Estimated);
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("task {} needs {what}", self.task.as_str())))
            }
        };
        match self.task {
            Task::Simulate => {
                need(specified, "a specified model (model.kind = svar or threshold_var)")?;
                need(self.periods > 0, "simulate.periods > 0")?;
            }
            Task::EstimateIrf | Task::EstimateCounterfactual => {
                need(self.data_path.is_some(), "data.path")?;
                need(self.instrument.is_some(), "data.instrument")?;
                need(self.roles.is_some(), "roles.policy and roles.outcome")?;
            }
            Task::Historical | Task::Future | Task::Intervention => {
                need(self.roles.is_some(), "roles.policy and roles.outcome")?;
                if !specified {
                    need(self.instrument.is_some(), "data.instrument for an estimated model")?;
                }
                if self.task != Task::Intervention || !specified {
                    need(self.data_path.is_some(), "data.path")?;
                }
            }
        }
        match self.task {
            Task::Historical => need(self.start.is_some(), "counterfactual.start")?,
            Task::Intervention if !specified => need(self.instrument_x.is_some(), "data.instrument_x")?,
            Task::EstimateCounterfactual if self.counterfactual_kind == CounterfactualKind::Intervention => {
                need(self.roles.as_ref().is_some_and(|r| r.driver.is_some()), "roles.driver")?;
                if matches!(
                    self.inference,
                    InferenceMethod::Delta | InferenceMethod::WildBootstrap | InferenceMethod::None
                ) {
                    need(self.instrument_x.is_some(), "data.instrument_x for the VAR route")?;
                }
            }
            _ => {}
        }
        let resampled = matches!(self.task, Task::Intervention | Task::EstimateIrf)
            || matches!(self.inference, InferenceMethod::WildBootstrap | InferenceMethod::Delta);
        if resampled {
            need(self.replications >= 2, "replications >= 2")?;
        } else if self.task == Task::Future {
            need(self.replications >= 1, "replications >= 1")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
task = "estimate_counterfactual"
horizon = 8
seed = 7
data.path = "data.csv"
data.instrument = "z"
roles.policy = "r"
roles.outcome = "y"
counterfactual.path = "hold:0:3,baseline"
inference.method = "hac"
"#;

    #[test]
    fn parses_flat_keys() {
        let c = ScenarioConfig::parse(BASE, Path::new("/tmp/x")).unwrap();
        assert_eq!(c.task, Task::EstimateCounterfactual);
        assert_eq!(c.horizon, 8);
        assert_eq!(c.data_path, Some(PathBuf::from("/tmp/x/data.csv")));
        assert_eq!(c.lags, LagSpec::Auto);
        assert_eq!(c.level, 0.9);
        assert_eq!(c.inference, InferenceMethod::Hac);
    }

    #[test]
    fn rejects_bad_configs() {
        let unknown = format!("{BASE}\nfoo.bar = 1\n");
        assert!(matches!(
            ScenarioConfig::parse(&unknown, Path::new(".")),
            Err(Error::Config(_))
        ));
        let level = format!("{BASE}\nlevel = 1.5\n");
        assert!(ScenarioConfig::parse(&level, Path::new(".")).is_err());
        let no_h = BASE.replace("horizon = 8", "");
        assert!(ScenarioConfig::parse(&no_h, Path::new(".")).is_err());
        let syntax = ScenarioConfig::parse("task = \n", Path::new(".")).unwrap_err();
        assert!(matches!(syntax, Error::Parse { line: 1, .. }), "{syntax}");
    }

    #[test]
    fn specified_models() {
        let text = r#"
task = "simulate"
horizon = 4
model.kind = "svar"
model.names = "x, r, y"
model.lag = "0.5,0,0; 0.2,0.6,0.1; 0.1,-0.3,0.5"
model.impact = "1,0,0; 0.3,1,0; 0.4,-0.6,1"
roles.driver = "x"
roles.policy = "r"
roles.outcome = "y"
"#;
        let c = ScenarioConfig::parse(text, Path::new(".")).unwrap();
        match c.model {
            ModelSpec::Svar {
                lags,
                impact,
                intercept,
                ..
            } => {
                assert_eq!(lags.len(), 1);
                assert_eq!(impact[(2, 1)], -0.6);
                assert_eq!(intercept.len(), 3);
            }
            _ => panic!("expected svar"),
        }
        assert!(parse_matrix("1,2;3").is_err());
    }
}
