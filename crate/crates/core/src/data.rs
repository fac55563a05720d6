//! Observed panels and instrument series.

use std::fmt;
use std::ops::Range;

use chrono::{Datelike, NaiveDate};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::ensure_finite;
use crate::svma::{RoleIndex, VariableRole};

/// One entry of the time index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TimeStamp {
    /// `YYYY-MM-DD`.
    Day(NaiveDate),
    /// `YYYY-MM`; stored as the first of the month.
    Month(NaiveDate),
    /// Plain integer period.
    Period(i64),
}

impl TimeStamp {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(p) = s.parse::<i64>() {
            return Ok(TimeStamp::Period(p));
        }
        if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            return Ok(TimeStamp::Day(d));
        }
        if let Ok(d) = NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d") {
            if s.len() <= 7 {
                return Ok(TimeStamp::Month(d));
            }
        }
        Err(Error::invalid(format!(
            "time stamp {s:?} is neither YYYY-MM-DD, YYYY-MM nor an integer"
        )))
    }

    /// Same kind of stamp, `steps` periods later (months advance by calendar month).
    pub fn advance(self, steps: i64) -> Self {
        match self {
            TimeStamp::Period(p) => TimeStamp::Period(p + steps),
            TimeStamp::Month(d) => {
                let total = d.year() as i64 * 12 + d.month0() as i64 + steps;
                let (y, m) = (total.div_euclid(12) as i32, total.rem_euclid(12) as u32 + 1);
                TimeStamp::Month(NaiveDate::from_ymd_opt(y, m, 1).expect("valid month"))
            }
            TimeStamp::Day(d) => TimeStamp::Day(d + chrono::Duration::days(steps)),
        }
    }

    fn kind(&self) -> u8 {
        match self {
            TimeStamp::Day(_) => 0,
            TimeStamp::Month(_) => 1,
            TimeStamp::Period(_) => 2,
        }
    }
}

impl fmt::Display for TimeStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeStamp::Day(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            TimeStamp::Month(d) => write!(f, "{}", d.format("%Y-%m")),
            TimeStamp::Period(p) => write!(f, "{p}"),
        }
    }
}

/// `T x n_obs` observations with names, roles and a strictly increasing time index.
///
/// Roles may all be [`VariableRole::Other`]; estimators that need X, Y and R
/// check for them through [`PanelDataset::roles`].
#[derive(Debug, Clone)]
pub struct PanelDataset {
    pub observations: DMatrix<f64>,
    pub names: Vec<String>,
    pub roles: Vec<VariableRole>,
    pub time_index: Vec<TimeStamp>,
    role_index: Option<RoleIndex>,
}

impl PanelDataset {
    pub fn new(
        observations: DMatrix<f64>,
        names: Vec<String>,
        roles: Vec<VariableRole>,
        time_index: Vec<TimeStamp>,
    ) -> Result<Self> {
        let (t, n) = observations.shape();
        if t == 0 {
            return Err(Error::InsufficientSample("panel has no observations".into()));
        }
        if names.len() != n || roles.len() != n {
            return Err(Error::shape(format!(
                "{n} columns but {} names and {} roles",
                names.len(),
                roles.len()
            )));
        }
        if time_index.len() != t {
            return Err(Error::shape(format!("{t} rows but {} time stamps", time_index.len())));
        }
        check_time_index(&time_index)?;
        ensure_finite(&observations, "panel observations")?;
        let role_index = if roles.iter().all(|r| *r == VariableRole::Other) {
            None
        } else {
            Some(RoleIndex::from_roles(&roles)?)
        };
        Ok(Self {
            observations,
            names,
            roles,
            time_index,
            role_index,
        })
    }

    /// Panel with integer periods `0..T` and generic names.
    pub fn from_matrix(observations: DMatrix<f64>, roles: Vec<VariableRole>) -> Result<Self> {
        let names = (0..observations.ncols()).map(|i| format!("w{i}")).collect();
        let time = (0..observations.nrows() as i64).map(TimeStamp::Period).collect();
        Self::new(observations, names, roles, time)
    }

    pub fn len(&self) -> usize {
        self.observations.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.nrows() == 0
    }

    pub fn n_vars(&self) -> usize {
        self.observations.ncols()
    }

    /// Positions of X, Y and R; an error when roles were never assigned.
    pub fn roles(&self) -> Result<RoleIndex> {
        self.role_index
            .ok_or_else(|| Error::Roles("panel has no driver/outcome/policy assignment".into()))
    }

    pub fn with_roles(mut self, roles: Vec<VariableRole>) -> Result<Self> {
        if roles.len() != self.n_vars() {
            return Err(Error::shape(format!(
                "{} roles for {} columns",
                roles.len(),
                self.n_vars()
            )));
        }
        self.role_index = Some(RoleIndex::from_roles(&roles)?);
        self.roles = roles;
        Ok(self)
    }

    pub fn column(&self, i: usize) -> DVector<f64> {
        self.observations.column(i).into_owned()
    }
}

pub(crate) fn check_time_index(index: &[TimeStamp]) -> Result<()> {
    for (i, w) in index.windows(2).enumerate() {
        if w[0].kind() != w[1].kind() {
            return Err(Error::Parse {
                line: i + 3,
                message: "mixed time stamp formats".into(),
            });
        }
        if w[1] <= w[0] {
            return Err(Error::Parse {
                line: i + 3,
                message: format!("time index not strictly increasing: {} then {}", w[0], w[1]),
            });
        }
    }
    Ok(())
}

/// Scalar instrument observed on one contiguous span; `NaN` elsewhere.
#[derive(Debug, Clone)]
pub struct InstrumentSeries {
    values: Vec<f64>,
    valid_span: Range<usize>,
}

impl InstrumentSeries {
    pub fn new(values: Vec<Option<f64>>) -> Result<Self> {
        let first = values.iter().position(Option::is_some);
        let last = values.iter().rposition(Option::is_some);
        let (Some(a), Some(b)) = (first, last) else {
            return Err(Error::InsufficientSample("instrument is never observed".into()));
        };
        if let Some(gap) = (a..=b).find(|&i| values[i].is_none()) {
            return Err(Error::invalid(format!(
                "instrument must be observed on a contiguous span; gap at row {gap}"
            )));
        }
        let mut out = Vec::with_capacity(values.len());
        for v in &values {
            match v {
                Some(x) if !x.is_finite() => return Err(Error::NonFinite("instrument")),
                Some(x) => out.push(*x),
                None => out.push(f64::NAN),
            }
        }
        Ok(Self {
            values: out,
            valid_span: a..b + 1,
        })
    }

    pub fn observed(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Some(v)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn valid_span(&self) -> Range<usize> {
        self.valid_span.clone()
    }

    /// Value at `t`, `None` outside the valid span.
    pub fn get(&self, t: usize) -> Option<f64> {
        self.valid_span.contains(&t).then(|| self.values[t])
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * c).collect(),
            valid_span: self.valid_span.clone(),
        }
    }
}

/// Design matrix with rows `(1, W_{t-1}', ..., W_{t-p}')` for each `t` in `dates`.
///
/// Column names are `const` and `<name>.L<k>`. Every date must satisfy `t >= p`.
pub fn lagged_design(
    obs: &DMatrix<f64>,
    dates: &[usize],
    p: usize,
    names: &[String],
    intercept: bool,
) -> (DMatrix<f64>, Vec<String>) {
    let n = obs.ncols();
    let offset = usize::from(intercept);
    let mut x = DMatrix::zeros(dates.len(), offset + n * p);
    for (row, &t) in dates.iter().enumerate() {
        debug_assert!(t >= p);
        if intercept {
            x[(row, 0)] = 1.0;
        }
        for k in 1..=p {
            for j in 0..n {
                x[(row, offset + (k - 1) * n + j)] = obs[(t - k, j)];
            }
        }
    }
    let mut col_names = Vec::with_capacity(x.ncols());
    if intercept {
        col_names.push("const".to_string());
    }
    for k in 1..=p {
        for j in 0..n {
            let base = names.get(j).cloned().unwrap_or_else(|| format!("w{j}"));
            col_names.push(format!("{base}.L{k}"));
        }
    }
    (x, col_names)
}
