//! Browser bindings: counterfactuals of a three-variable SVAR `(x, r, y)`
//! entered as matrices in the config syntax (`a,b,c; d,e,f; g,h,i`, lags split by `|`).
//!
//! Every export returns a JSON string or throws a string error.

use nalgebra::{DMatrix, DVector};
use wasm_bindgen::prelude::*;

use structcf::analytic::{
    hypothetical_output_gap, hypothetical_trajectory_params, policy_intervention_effect, PolicyPathDeviation,
};
use structcf::io::config::parse_matrix;
use structcf::io::path::build_path;
use structcf::svar::StructuralVar;
use structcf::svma::{build_irf_set, ImpulseResponseSet, SelectedShocks, ShockRole, SvmaModel, VariableRole};

const X: usize = 0;
const R: usize = 1;
const Y: usize = 2;
const MAX_HORIZON: usize = 60;

fn err(e: impl ToString) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn json_array(v: impl IntoIterator<Item = f64>) -> String {
    let items: Vec<String> = v
        .into_iter()
        .map(|x| if x.is_finite() { format!("{x}") } else { "null".into() })
        .collect();
    format!("[{}]", items.join(","))
}

fn model(lags: &str, impact: &str, horizon: usize) -> Result<(SvmaModel, ImpulseResponseSet), JsValue> {
    if horizon > MAX_HORIZON {
        return Err(err(format!("horizon is capped at {MAX_HORIZON}")));
    }
    let coeffs = lags
        .split('|')
        .map(|m| parse_matrix(m).map_err(err))
        .collect::<Result<Vec<DMatrix<f64>>, _>>()?;
    let impact = parse_matrix(impact).map_err(err)?;
    let svar = StructuralVar::new(
        DVector::zeros(3),
        coeffs,
        impact,
        vec![VariableRole::Driver, VariableRole::Policy, VariableRole::Outcome],
        vec![ShockRole::Interest, ShockRole::Policy, ShockRole::Other],
    )
    .map_err(err)?;
    let svma = svar.to_svma(horizon).map_err(err)?;
    let set = build_irf_set(&svma, horizon, &SelectedShocks::period_by_period(1, horizon)).map_err(err)?;
    Ok((svma, set))
}

/// Zeroing-out effect `phi_h` of a unit shock to `x` with its total/direct/indirect split.
#[wasm_bindgen]
pub fn intervention(lags: &str, impact: &str, horizon: usize) -> Result<String, JsValue> {
    let (_, set) = model(lags, impact, horizon)?;
    let mut cols: [Vec<f64>; 4] = Default::default();
    for h in 0..=horizon {
        let e = policy_intervention_effect(&set, h).map_err(err)?;
        let d = e.decomposition.ok_or_else(|| err("no decomposition"))?;
        cols[0].push(e.value);
        cols[1].push(d.total);
        cols[2].push(d.direct);
        cols[3].push(d.indirect);
    }
    let [phi, total, direct, indirect] = cols;
    Ok(format!(
        "{{\"phi\":{},\"total\":{},\"direct\":{},\"indirect\":{}}}",
        json_array(phi),
        json_array(total),
        json_array(direct),
        json_array(indirect)
    ))
}

/// Outcome path after a unit `x` shock when `r` follows `path` instead of its own response.
#[wasm_bindgen]
pub fn hypothetical(lags: &str, impact: &str, horizon: usize, path: &str) -> Result<String, JsValue> {
    let (svma, set) = model(lags, impact, horizon)?;
    let base_r = DVector::from_fn(horizon + 1, |h, _| svma.coeff(h, R, X));
    let base_y = DVector::from_fn(horizon + 1, |h, _| svma.coeff(h, Y, X));
    let target = build_path(path, &base_r).map_err(err)?;
    let dev = PolicyPathDeviation::from_paths(&base_r, &target).map_err(err)?;
    let betas = hypothetical_trajectory_params(&set).map_err(err)?;
    let mut psi = Vec::with_capacity(horizon + 1);
    for (h, beta) in betas.iter().enumerate() {
        psi.push(hypothetical_output_gap(h, beta, &dev).map_err(err)?.value);
    }
    let cf_y = base_y.iter().zip(&psi).map(|(y, p)| y - p);
    Ok(format!(
        "{{\"baseline_r\":{},\"path_r\":{},\"baseline_y\":{},\"counterfactual_y\":{},\"psi\":{}}}",
        json_array(base_r.iter().copied()),
        json_array(target.iter().copied()),
        json_array(base_y.iter().copied()),
        json_array(cf_y),
        json_array(psi)
    ))
}

/// Expands a path specification against an explicit comma-separated baseline.
#[wasm_bindgen]
pub fn expand_path(spec: &str, baseline: &str) -> Result<String, JsValue> {
    let base = baseline
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| err(format!("{s:?} is not a number")))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let out = build_path(spec, &DVector::from_vec(base)).map_err(err)?;
    Ok(format!("{{\"path\":{}}}", json_array(out.iter().copied())))
}

#[cfg(test)]
mod tests {
    use super::*;

    const LAG: &str = "0.5,0,0; 0.2,0.6,0.1; 0.1,-0.3,0.5";
    const IMPACT: &str = "1,0,0; 0.3,1,0; 0.4,-0.6,1";

    #[test]
    fn intervention_json() {
        let s = intervention(LAG, IMPACT, 3).unwrap();
        assert!(s.starts_with("{\"phi\":[0.58"));
    }

    #[test]
    fn null_path_leaves_outcome_unchanged() {
        let s = hypothetical(LAG, IMPACT, 4, "baseline").unwrap();
        let psi = &s[s.find("\"psi\":").unwrap()..];
        assert_eq!(psi, "\"psi\":[0,0,0,0,0]}");
    }

    #[test]
    fn path_preview() {
        assert_eq!(expand_path("hold:1:2", "0, 0, 0").unwrap(), "{\"path\":[1,1,0]}");
    }
}
