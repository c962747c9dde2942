use std::f64::consts::PI;

use proptest::prelude::*;
use ucmcf::config::{FlowName, RunConfig};
use ucmcf::diagnostics::TimeSeries;
use ucmcf::flow::{step, FlowKind, FlowState, StepOptions};
use ucmcf::grid_curve::{make_curve, InitDescriptor};
use ucmcf::linalg::CyclicTridiagonal;
use ucmcf::renorm::normalize_state;
use ucmcf::tension::{green_bracket, solve_normalized_tension, solve_original_tension, unit_curvature_energy};
use ucmcf::GridCurve;

fn curve(desc: &str, n: usize) -> GridCurve {
    make_curve(&desc.parse::<InitDescriptor>().unwrap(), n, 2).unwrap()
}

fn perturbed() -> impl Strategy<Value = String> {
    (0.0f64..0.25, 2u32..8, 0.0f64..6.3).prop_map(|(a, j, ph)| format!("perturbed:{a},{j},{ph}"))
}

fn ellipse() -> impl Strategy<Value = String> {
    (1.0f64..4.0, 0.5f64..1.5).prop_map(|(a, b)| format!("ellipse:{a},{b}"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cyclic_solve_inverts_apply(
        n in 3usize..40,
        seed in proptest::collection::vec(-1.0f64..1.0, 120),
    ) {
        let lower: Vec<f64> = (0..n).map(|i| seed[i]).collect();
        let upper: Vec<f64> = (0..n).map(|i| seed[40 + i]).collect();
        let diag: Vec<f64> = (0..n).map(|i| 2.5 + seed[80 + i].abs()).collect();
        let m = CyclicTridiagonal::new(lower, diag, upper).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = m.solve(&b).unwrap();
        let back = m.apply(&x);
        for (p, q) in back.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn catalog_curves_have_equal_chords(d in perturbed(), n in 16usize..300) {
        let c = curve(&d, n);
        prop_assert!(c.drift() < 1e-9, "drift {}", c.drift());
        let circ = c.length() / (2.0 * (n as f64) * (PI / n as f64).sin() / (2.0 * PI));
        prop_assert!((circ - 1.0).abs() < 1e-9);
    }

    #[test]
    fn normalized_tension_is_positive_and_bracketed(d in perturbed(), n in 32usize..200) {
        let c = curve(&d, n);
        let s = solve_normalized_tension(&c).unwrap();
        let (lo, hi) = green_bracket(unit_curvature_energy(&c));
        prop_assert!(s.values.iter().all(|&v| v > 0.0 && v >= lo && v <= hi));
    }

    #[test]
    fn original_tension_has_unit_mean(d in ellipse(), n in 32usize..200) {
        let s = solve_original_tension(&curve(&d, n)).unwrap();
        prop_assert!((s.mean - 1.0).abs() < 1e-10);
        prop_assert!(s.values.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn original_step_decreases_mass_at_unit_rate(d in ellipse()) {
        let st = FlowState::new(curve(&d, 128), FlowKind::Original);
        let dt = 1e-4;
        let (next, _) = step(&st, dt, &StepOptions::default()).unwrap();
        let slope = (next.curve.l2_mass() - st.curve.l2_mass()) / dt;
        prop_assert!((slope + 1.0).abs() < 1e-4, "slope {slope}");
        prop_assert!(next.curve.length() < st.curve.length());
    }

    #[test]
    fn normalized_step_keeps_length_and_grows_mass(d in perturbed()) {
        let st = FlowState::new(curve(&d, 128), FlowKind::Normalized);
        let (next, _) = step(&st, 1e-3, &StepOptions::default()).unwrap();
        prop_assert!((next.curve.length() - st.curve.length()).abs() < 1e-12);
        prop_assert!(next.curve.l2_mass() >= st.curve.l2_mass() * (1.0 - 1e-12));
        prop_assert!(next.curve.drift() < 1e-9);
    }

    #[test]
    fn normalization_is_scale_free(d in ellipse(), k in 0.1f64..10.0) {
        let c = curve(&d, 64);
        let a = normalize_state(&FlowState::new(c.clone(), FlowKind::Original)).unwrap();
        let b = normalize_state(&FlowState::new(c.scaled(k), FlowKind::Original)).unwrap();
        prop_assert!(a.curve.sup_distance(&b.curve) < 1e-12);
        prop_assert!((b.time - a.time + k.ln()).abs() < 1e-12);
        prop_assert!((a.curve.length() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn config_hash_ignores_output_dir(dt in 1e-5f64..1e-2, seed in 0u64..1000) {
        let mut a = RunConfig::new(FlowName::Original, "circle", 0.1);
        a.dt = dt;
        a.seed = seed;
        let mut b = a.clone();
        b.output_dir = Some("elsewhere".into());
        prop_assert_eq!(a.hash(), b.hash());
        b.dt *= 2.0;
        prop_assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn series_csv_roundtrip(d in ellipse(), steps in 1usize..20) {
        let mut cfg = RunConfig::new(FlowName::Original, &d, steps as f64 * 1e-3);
        cfg.n = 64;
        cfg.dt = 1e-3;
        let s = ucmcf::runner::run(&cfg).unwrap().series;
        let text = s.to_csv();
        let back = TimeSeries::from_csv(FlowKind::Original, &text).unwrap();
        prop_assert_eq!(back.to_csv(), text);
    }
}
