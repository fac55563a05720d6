//! Delimited time-series files: a header row, a time column, then numeric columns.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::{check_time_index, InstrumentSeries, PanelDataset, TimeStamp};
use crate::error::{Error, Result};
use crate::svma::VariableRole;

/// 17 significant digits, enough to round-trip every `f64`.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Raw table; empty cells are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    pub time_header: String,
    pub time: Vec<TimeStamp>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<Option<f64>>>,
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn read_table<R: Read>(reader: R) -> Result<DataTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h.map_err(csv_err)?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header row".into(),
            })
        }
    };
    if header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "header needs a time column and at least one variable".into(),
        });
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    for (i, n) in names.iter().enumerate() {
        if n.is_empty() {
            return Err(Error::Parse {
                line: 1,
                message: format!("column {} has an empty name", i + 2),
            });
        }
        if names[..i].contains(n) {
            return Err(Error::Parse {
                line: 1,
                message: format!("duplicated column name {n:?}"),
            });
        }
    }
    let mut time = Vec::new();
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
    for rec in records {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != names.len() + 1 {
            return Err(Error::Parse {
                line,
                message: format!("{} fields, header has {}", rec.len(), names.len() + 1),
            });
        }
        let stamp = TimeStamp::parse(&rec[0]).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        time.push(stamp);
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let v = if cell.is_empty() {
                None
            } else {
                let x: f64 = cell.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("column {:?}: {cell:?} is not a number", names[j]),
                })?;
                if !x.is_finite() {
                    return Err(Error::Parse {
                        line,
                        message: format!("column {:?}: non-finite value", names[j]),
                    });
                }
                Some(x)
            };
            columns[j].push(v);
        }
    }
    if time.is_empty() {
        return Err(Error::Parse {
            line: 2,
            message: "no data rows".into(),
        });
    }
    check_time_index(&time)?;
    Ok(DataTable {
        time_header: header[0].to_string(),
        time,
        names,
        columns,
    })
}

pub fn load_table(path: impl AsRef<Path>) -> Result<DataTable> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    read_table(f)
}

impl DataTable {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Config(format!("no column named {name:?}; have {:?}", self.names)))
    }

    /// Panel of every column not listed in `instruments`, plus the instruments.
    ///
    /// Only instrument columns may contain empty cells.
    pub fn split(&self, instruments: &[&str]) -> Result<(PanelDataset, Vec<InstrumentSeries>)> {
        let inst_idx = instruments
            .iter()
            .map(|n| self.column_index(n))
            .collect::<Result<Vec<_>>>()?;
        let var_idx: Vec<usize> = (0..self.names.len()).filter(|j| !inst_idx.contains(j)).collect();
        if var_idx.is_empty() {
            return Err(Error::Config(
                "no variable columns left after removing instruments".into(),
            ));
        }
        let t = self.time.len();
        let mut obs = nalgebra::DMatrix::zeros(t, var_idx.len());
        for (c, &j) in var_idx.iter().enumerate() {
            for (i, v) in self.columns[j].iter().enumerate() {
                obs[(i, c)] = v.ok_or_else(|| Error::Parse {
                    line: i + 2,
                    message: format!("missing value in variable column {:?}", self.names[j]),
                })?;
            }
        }
        let names = var_idx.iter().map(|&j| self.names[j].clone()).collect();
        let panel = PanelDataset::new(obs, names, vec![VariableRole::Other; var_idx.len()], self.time.clone())?;
        let inst = inst_idx
            .iter()
            .map(|&j| InstrumentSeries::new(self.columns[j].clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok((panel, inst))
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let mut header = vec![self.time_header.clone()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (i, t) in self.time.iter().enumerate() {
            let mut rec = vec![t.to_string()];
            rec.extend(self.columns.iter().map(|c| c[i].map(fmt_num).unwrap_or_default()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<table>".into(),
            source: e,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| io_err(path, e))?;
        self.write(f)
    }

    /// Table of a panel followed by named instrument columns.
    pub fn from_panel(panel: &PanelDataset, instruments: &[(&str, &InstrumentSeries)]) -> Self {
        let mut names = panel.names.clone();
        let mut columns: Vec<Vec<Option<f64>>> = (0..panel.n_vars())
            .map(|j| panel.observations.column(j).iter().map(|&v| Some(v)).collect())
            .collect();
        for (name, z) in instruments {
            names.push(name.to_string());
            columns.push((0..panel.len()).map(|t| z.get(t)).collect());
        }
        let time_header = match panel.time_index.first() {
            Some(TimeStamp::Period(_)) => "period",
            _ => "date",
        };
        Self {
            time_header: time_header.into(),
            time: panel.time_index.clone(),
            names,
            columns,
        }
    }
}

/// Every column as a panel variable with no role assignment.
pub fn load_panel(path: impl AsRef<Path>) -> Result<PanelDataset> {
    Ok(load_table(path)?.split(&[])?.0)
}

pub fn save_panel(path: impl AsRef<Path>, panel: &PanelDataset) -> Result<()> {
    DataTable::from_panel(panel, &[]).save(path)
}

/// Linear interpolation of `(position, value)` knots at `at`; flat beyond the ends.
///
/// Useful for turning quarterly forecasts into a monthly path (knots at 0, 3, 6, ...).
pub fn linear_interpolate(knots: &[(f64, f64)], at: &[f64]) -> Result<Vec<f64>> {
    if knots.is_empty() {
        return Err(Error::invalid("interpolation needs at least one knot"));
    }
    if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::invalid("interpolation knots must be strictly increasing"));
    }
    Ok(at
        .iter()
        .map(|&x| {
            let i = knots.partition_point(|k| k.0 <= x);
            if i == 0 {
                knots[0].1
            } else if i == knots.len() {
                knots[i - 1].1
            } else {
                let (a, b) = (knots[i - 1], knots[i]);
                a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
            }
        })
        .collect())
}
