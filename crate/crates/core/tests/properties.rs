use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use structcf::analytic::{hypothetical_output_gap, hypothetical_trajectory_params, PolicyPathDeviation};
use structcf::data::{InstrumentSeries, PanelDataset};
use structcf::io::path::build_path;
use structcf::io::{linear_interpolate, load_table, DataTable};
use structcf::svma::{build_irf_set, SelectedShocks, ShockRole, SvmaModel, VariableRole};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, -1e-6..1e-6f64, Just(0.0), Just(-0.0)]
}

fn svma(vals: &[f64], q: usize) -> SvmaModel {
    let mut coeffs: Vec<DMatrix<f64>> = (0..=q)
        .map(|k| DMatrix::from_row_slice(3, 3, &vals[9 * k..9 * k + 9]))
        .collect();
    coeffs[0][(1, 1)] = 1.0 + coeffs[0][(1, 1)].abs();
    SvmaModel::new(
        coeffs,
        DMatrix::identity(3, 3),
        DVector::zeros(3),
        vec![VariableRole::Driver, VariableRole::Policy, VariableRole::Outcome],
        vec![ShockRole::Interest, ShockRole::Policy, ShockRole::Other],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn panel_csv_round_trip_is_bit_exact(
        rows in 1usize..20,
        vals in prop::collection::vec(finite(), 60),
        z in prop::collection::vec(prop::option::of(finite()), 20),
    ) {
        let obs = DMatrix::from_fn(rows, 3, |i, j| vals[i * 3 + j]);
        let panel = PanelDataset::from_matrix(obs.clone(), vec![VariableRole::Other; 3]).unwrap();
        let inst = InstrumentSeries::new(z[..rows].to_vec());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.csv");
        let with: Vec<(&str, &InstrumentSeries)> = inst.iter().map(|z| ("z", z)).collect();
        DataTable::from_panel(&panel, &with).save(&path).unwrap();
        let table = load_table(&path).unwrap();
        let split: Vec<&str> = if inst.is_ok() { vec!["z"] } else { vec![] };
        let (back, zs) = table.split(&split).unwrap();
        for (a, b) in back.observations.iter().zip(obs.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        if let Ok(inst) = &inst {
            for t in 0..rows {
                prop_assert_eq!(zs[0].get(t).map(f64::to_bits), inst.get(t).map(f64::to_bits));
            }
        }
    }

    #[test]
    fn baseline_path_is_identity(base in prop::collection::vec(finite(), 1..15), k in 0usize..15) {
        let base = DVector::from_vec(base);
        let k = k.min(base.len());
        prop_assert_eq!(build_path("baseline", &base).unwrap(), base.clone());
        let spec = if k == 0 { "baseline".to_string() } else { format!("baseline:{k},baseline") };
        prop_assert_eq!(build_path(&spec, &base).unwrap(), base);
    }

    #[test]
    fn hold_then_baseline_splices(base in prop::collection::vec(finite(), 1..15), v in finite(), k in 0usize..15) {
        let base = DVector::from_vec(base);
        let k = k.min(base.len());
        let p = build_path(&format!("hold:{v}:{k},baseline"), &base).unwrap();
        for i in 0..base.len() {
            prop_assert_eq!(p[i], if i < k { v } else { base[i] });
        }
    }

    #[test]
    fn interpolation_hits_knots(xs in prop::collection::btree_set(-100i32..100, 1..8), ys in prop::collection::vec(-10.0..10.0f64, 8)) {
        let knots: Vec<(f64, f64)> = xs.iter().zip(&ys).map(|(&x, &y)| (x as f64, y)).collect();
        let at: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let out = linear_interpolate(&knots, &at).unwrap();
        for (o, k) in out.iter().zip(&knots) {
            prop_assert!((o - k.1).abs() <= 1e-12);
        }
    }

    #[test]
    fn output_gap_is_linear_in_the_deviation(
        vals in prop::collection::vec(-1.0..1.0f64, 27),
        d1 in prop::collection::vec(-2.0..2.0f64, 5),
        d2 in prop::collection::vec(-2.0..2.0f64, 5),
        a in -3.0..3.0f64,
    ) {
        let model = svma(&vals, 2);
        let set = build_irf_set(&model, 4, &SelectedShocks::period_by_period(1, 4)).unwrap();
        let betas = hypothetical_trajectory_params(&set).unwrap();
        let (d1, d2) = (DVector::from_vec(d1), DVector::from_vec(d2));
        for (h, beta) in betas.iter().enumerate() {
            let psi = |d: &DVector<f64>| {
                hypothetical_output_gap(h, beta, &PolicyPathDeviation::hypothetical(d.clone()).unwrap()).unwrap().value
            };
            let lhs = psi(&(&d1 * a + &d2));
            let rhs = a * psi(&d1) + psi(&d2);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }
    }
}
