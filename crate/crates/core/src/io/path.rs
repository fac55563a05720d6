//! Counterfactual policy path mini-language.
//!
//! Comma-separated operations applied left to right to a copy of the baseline
//! path, with a cursor that starts at horizon 0:
//!
//! - `hold:v:k` sets the next `k` entries to `v`
//! - `explicit:v0,v1,...` sets the next entries to the listed values; bare
//!   numbers after it continue the list
//! - `baseline` keeps the baseline for the rest; `baseline:k` for the next `k`
//! - `offset:a` adds `a` to every entry; `offset:a@i`, `offset:a@i..j` (end
//!   exclusive) and `offset:a@i..` restrict it to absolute horizons
//!
//! Entries never reached by the cursor follow the baseline.

use nalgebra::DVector;

use crate::error::{Error, Result};

fn num(s: &str, token: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("path token {token:?}: {s:?} is not a number")))
}

fn count(s: &str, token: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("path token {token:?}: {s:?} is not a count")))
}

/// Applies `spec` to `baseline`; the result has the baseline's length.
pub fn build_path(spec: &str, baseline: &DVector<f64>) -> Result<DVector<f64>> {
    let len = baseline.len();
    let mut out = baseline.clone();
    let mut cursor = 0usize;
    let mut explicit = false;
    let set = |out: &mut DVector<f64>, cursor: &mut usize, v: f64, token: &str| -> Result<()> {
        if *cursor >= len {
            return Err(Error::Config(format!(
                "path token {token:?} runs past horizon {}",
                len.saturating_sub(1)
            )));
        }
        out[*cursor] = v;
        *cursor += 1;
        Ok(())
    };
    for raw in spec.split(',') {
        let token = raw.trim();
        if token.is_empty() {
            return Err(Error::Config("empty token in path".into()));
        }
        let mut parts = token.splitn(2, ':');
        let op = parts.next().unwrap_or_default();
        let arg = parts.next();
        match (op, arg) {
            ("hold", Some(a)) => {
                explicit = false;
                let (v, k) = a
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("path token {token:?}: expected hold:value:count")))?;
                let (v, k) = (num(v, token)?, count(k, token)?);
                for _ in 0..k {
                    set(&mut out, &mut cursor, v, token)?;
                }
            }
            ("explicit", Some(a)) => {
                explicit = true;
                set(&mut out, &mut cursor, num(a, token)?, token)?;
            }
            ("baseline", None) => {
                explicit = false;
                cursor = len;
            }
            ("baseline", Some(k)) => {
                explicit = false;
                let k = count(k, token)?;
                if cursor + k > len {
                    return Err(Error::Config(format!("path token {token:?} runs past the horizon")));
                }
                cursor += k;
            }
            ("offset", Some(a)) => {
                explicit = false;
                let (v, range) = match a.split_once('@') {
                    None => (num(a, token)?, 0..len),
                    Some((v, r)) => {
                        let range = match r.split_once("..") {
                            None => {
                                let i = count(r, token)?;
                                i..i + 1
                            }
                            Some((i, "")) => count(i, token)?..len,
                            Some((i, j)) => count(i, token)?..count(j, token)?,
                        };
                        (num(v, token)?, range)
                    }
                };
                if range.start >= range.end || range.end > len {
                    return Err(Error::Config(format!(
                        "path token {token:?}: range outside horizons 0..{len}"
                    )));
                }
                for i in range {
                    out[i] += v;
                }
            }
            (value, None) if explicit => set(&mut out, &mut cursor, num(value, token)?, token)?,
            _ => return Err(Error::Config(format!("unrecognized path token {token:?}"))),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> DVector<f64> {
        DVector::from_vec(vec![5.0, 5.1, 5.2, 5.3, 5.4])
    }

    #[test]
    fn hold_then_baseline() {
        let p = build_path("hold:5.25:3,baseline", &base()).unwrap();
        assert_eq!(p.as_slice(), &[5.25, 5.25, 5.25, 5.3, 5.4]);
    }

    #[test]
    fn explicit_and_offsets() {
        let p = build_path("explicit:1,2,3", &base()).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 2.0, 3.0, 5.3, 5.4]);
        let p = build_path("offset:+0.25@0", &base()).unwrap();
        assert_eq!(p.as_slice(), &[5.25, 5.1, 5.2, 5.3, 5.4]);
        let p = build_path("offset:-1@1..3", &DVector::zeros(5)).unwrap();
        assert_eq!(p.as_slice(), &[0.0, -1.0, -1.0, 0.0, 0.0]);
        let p = build_path("baseline:2,hold:0:1,offset:1@3..", &DVector::zeros(5)).unwrap();
        assert_eq!(p.as_slice(), &[0.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn identity_and_errors() {
        assert_eq!(build_path("baseline", &base()).unwrap(), base());
        assert!(build_path("hold:1:6", &base()).is_err());
        assert!(build_path("offset:1@4..9", &base()).is_err());
        assert!(build_path("2.0", &base()).is_err());
        assert!(build_path("hold:x:1", &base()).is_err());
    }
}
