//! Report bundles and their CSV / text rendering.
//!
//! CSV layout written by [`emit_csv`]:
//!
//! - `estimates.csv`: `quantity,horizon,estimate,se,ci_lo,ci_hi,method`
//! - `metadata.csv`: `key,value`, sorted by key
//! - `plot_<block>.csv`: `time,<series>...`, where a band around series `s`
//!   is the pair of columns `s.lo` and `s.hi`

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use super::table::{fmt_num, io_err};
use crate::analytic::CounterfactualEstimate;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub quantity: String,
    pub horizon: usize,
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub method: String,
}

impl ReportRow {
    pub fn point(quantity: &str, horizon: usize, estimate: f64, method: &str) -> Self {
        Self {
            quantity: quantity.into(),
            horizon,
            estimate,
            se: None,
            ci: None,
            method: method.into(),
        }
    }

    pub fn from_estimate(quantity: &str, est: &CounterfactualEstimate) -> Self {
        Self {
            quantity: quantity.into(),
            horizon: est.horizon,
            estimate: est.value,
            se: est.se,
            ci: est.ci,
            method: est.method.as_str().into(),
        }
    }

    /// Adds `estimate +- z se`.
    pub fn with_se(mut self, se: f64, z: f64) -> Self {
        self.se = Some(se);
        self.ci = Some((self.estimate - z * se, self.estimate + z * se));
        self
    }
}

/// Named columns sharing a time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotBlock {
    pub name: String,
    pub time: Vec<String>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl PlotBlock {
    pub fn new(name: &str, time: Vec<String>) -> Self {
        Self {
            name: name.into(),
            time,
            columns: Vec::new(),
        }
    }

    pub fn horizons(name: &str, horizon: usize) -> Self {
        Self::new(name, (0..=horizon).map(|h| h.to_string()).collect())
    }

    pub fn series(mut self, name: &str, values: &DVector<f64>) -> Self {
        debug_assert_eq!(values.len(), self.time.len());
        self.columns.push((name.into(), values.iter().copied().collect()));
        self
    }

    /// Center series followed by `<name>.lo` and `<name>.hi`.
    pub fn banded(self, name: &str, center: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> Self {
        self.series(name, center)
            .series(&format!("{name}.lo"), lo)
            .series(&format!("{name}.hi"), hi)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportBundle {
    pub rows: Vec<ReportRow>,
    pub metadata: BTreeMap<String, String>,
    pub plots: Vec<PlotBlock>,
}

impl ReportBundle {
    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.insert(key.into(), value.to_string());
    }

    /// Interval and band invariants.
    pub fn validate(&self) -> Result<()> {
        for r in &self.rows {
            if let Some((lo, hi)) = r.ci {
                if !(lo <= r.estimate && r.estimate <= hi) {
                    return Err(Error::invalid(format!(
                        "{} at horizon {}: interval [{lo}, {hi}] excludes {}",
                        r.quantity, r.horizon, r.estimate
                    )));
                }
            }
        }
        for b in &self.plots {
            let names: Vec<&str> = b.columns.iter().map(|c| c.0.as_str()).collect();
            for (n, v) in &b.columns {
                if v.len() != b.time.len() {
                    return Err(Error::shape(format!("plot column {n} has {} points", v.len())));
                }
                if let Some(center) = n.strip_suffix(".lo").or_else(|| n.strip_suffix(".hi")) {
                    let pair = if n.ends_with(".lo") {
                        format!("{center}.hi")
                    } else {
                        format!("{center}.lo")
                    };
                    if !names.contains(&center) || !names.contains(&pair.as_str()) {
                        return Err(Error::invalid(format!("band column {n} lacks its center or partner")));
                    }
                }
            }
        }
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(content.as_bytes()).map_err(|e| io_err(path, e))
}

pub fn estimates_csv(bundle: &ReportBundle) -> String {
    let mut s = String::from("quantity,horizon,estimate,se,ci_lo,ci_hi,method\n");
    for r in &bundle.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.quantity,
            r.horizon,
            fmt_num(r.estimate),
            opt(r.se),
            opt(r.ci.map(|c| c.0)),
            opt(r.ci.map(|c| c.1)),
            r.method
        );
    }
    s
}

pub fn metadata_csv(bundle: &ReportBundle) -> String {
    let mut s = String::from("key,value\n");
    for (k, v) in &bundle.metadata {
        let _ = writeln!(s, "{k},{v}");
    }
    s
}

pub fn plot_csv(block: &PlotBlock) -> String {
    let mut s = String::from("time");
    for (n, _) in &block.columns {
        let _ = write!(s, ",{n}");
    }
    s.push('\n');
    for (i, t) in block.time.iter().enumerate() {
        s.push_str(t);
        for (_, v) in &block.columns {
            let _ = write!(s, ",{}", fmt_num(v[i]));
        }
        s.push('\n');
    }
    s
}

/// Writes the CSV files into `dir` and returns their paths.
pub fn emit_csv(bundle: &ReportBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    bundle.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut files = vec![
        (dir.join("estimates.csv"), estimates_csv(bundle)),
        (dir.join("metadata.csv"), metadata_csv(bundle)),
    ];
    for b in &bundle.plots {
        files.push((dir.join(format!("plot_{}.csv", b.name)), plot_csv(b)));
    }
    for (p, c) in &files {
        write_file(p, c)?;
    }
    Ok(files.into_iter().map(|f| f.0).collect())
}

/// Aligned plain-text table of the estimate rows, then the metadata.
pub fn human_table(bundle: &ReportBundle) -> String {
    let header = ["quantity", "h", "estimate", "se", "ci_lo", "ci_hi", "method"];
    let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
    let cells: Vec<[String; 7]> = bundle
        .rows
        .iter()
        .map(|r| {
            [
                r.quantity.clone(),
                r.horizon.to_string(),
                f(Some(r.estimate)),
                f(r.se),
                f(r.ci.map(|c| c.0)),
                f(r.ci.map(|c| c.1)),
                r.method.clone(),
            ]
        })
        .collect();
    let mut width = header.map(str::len);
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut s = String::new();
    let line = |s: &mut String, row: &[&str]| {
        let parts: Vec<String> = row
            .iter()
            .zip(width)
            .enumerate()
            .map(|(i, (c, w))| {
                if i == 0 || i == 6 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        let _ = writeln!(s, "{}", parts.join("  ").trim_end());
    };
    line(&mut s, &header);
    for row in &cells {
        line(&mut s, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    if !bundle.metadata.is_empty() {
        s.push('\n');
        let kw = bundle.metadata.keys().map(String::len).max().unwrap_or(0);
        for (k, v) in &bundle.metadata {
            let _ = writeln!(s, "{k:<kw$}  {v}");
        }
    }
    s
}

/// Reads an `estimates.csv` back.
pub fn read_estimates(path: &Path) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    let parse = |s: &str, line: usize| -> Result<Option<f64>> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse().map(Some).map_err(|_| Error::Parse {
            line,
            message: format!("{s:?} is not a number"),
        })
    };
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if rec.len() != 7 {
            return Err(Error::Parse {
                line,
                message: "expected 7 fields".into(),
            });
        }
        let lo = parse(&rec[4], line)?;
        let hi = parse(&rec[5], line)?;
        rows.push(ReportRow {
            quantity: rec[0].to_string(),
            horizon: rec[1].parse().map_err(|_| Error::Parse {
                line,
                message: "bad horizon".into(),
            })?,
            estimate: parse(&rec[2], line)?.ok_or_else(|| Error::Parse {
                line,
                message: "missing estimate".into(),
            })?,
            se: parse(&rec[3], line)?,
            ci: lo.zip(hi),
            method: rec[6].to_string(),
        });
    }
    Ok(rows)
}
