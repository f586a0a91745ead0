use std::f64::consts::PI;

use couette_ks::interaction::nonlinear_rhs;
use couette_ks::io::{gaussian_field, random_modes_field};
use couette_ks::propagator::{apply_propagator, evaluate_lab_points, remap, SimState};
use couette_ks::spectral::GridSpec;
use couette_ks::symbol::{FlowParams, QuadratureConfig};
use couette_ks::timestepper::{run, Outcome, RunOptions, StepConfig};
use proptest::prelude::*;

fn state(mass: f64, seed: u64, a: f64, alpha: f64) -> SimState<f64> {
    let grid = GridSpec::cubic(16, 2.0 * PI).unwrap();
    let f = random_modes_field(grid, mass, 6, seed);
    SimState::from_field(&f, FlowParams::new(a, alpha).unwrap(), 0.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn propagation_is_a_semigroup(seed in 0u64..1000, alpha in 1.1..2.0f64, t1 in 0.0..0.05f64, t2 in 0.0..0.05f64) {
        let q = QuadratureConfig::default();
        let s = state(1.0, seed, 3.0, alpha);
        let direct = apply_propagator(&s, t1 + t2, &q).unwrap();
        let split = apply_propagator(&apply_propagator(&s, t1, &q).unwrap(), t1 + t2, &q).unwrap();
        for (a, b) in direct.n_hat().coeffs().iter().zip(split.n_hat().coeffs()) {
            prop_assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn nonlinear_term_carries_no_mass(seed in 0u64..1000, a in 0.0..20.0f64, t in 0.0..1.0f64) {
        let s = state(5.0, seed, a, 1.5);
        let rhs = nonlinear_rhs(s.n_hat(), s.frame(), t);
        prop_assert!(rhs.zero_mode().norm() <= 1e-14);
    }

    #[test]
    fn runs_conserve_mass(seed in 0u64..1000, a in 0.0..20.0f64) {
        let grid = GridSpec::cubic(16, 2.0 * PI).unwrap();
        let init = random_modes_field(grid, 4.0, 6, seed);
        let cfg = StepConfig::new(0.01, 0.5, 1e-9, 10.0, 4.0).unwrap();
        let res = run(&init, FlowParams::new(a, 1.5).unwrap(), &cfg, 0.2, 0.05, &RunOptions::default()).unwrap();
        prop_assert!(res.status.is_ok());
        let m0 = res.series.rows()[0].mass;
        for r in res.series.rows() {
            prop_assert!((r.mass - m0).abs() <= 1e-10 * m0);
        }
    }
}

#[test]
fn remap_keeps_the_laboratory_field() {
    let q = QuadratureConfig::default();
    let s = state(1.0, 3, 4.0, 1.5);
    let grid = *s.grid();
    let period = s.frame().remap_period(&grid).unwrap();
    let at = apply_propagator(&s, period, &q).unwrap();
    let r = remap(&at).unwrap();
    assert_eq!(r.state.frame().t_ref(), period);
    let pts: Vec<[f64; 3]> = (0..20).map(|i| {
        let u = i as f64;
        [0.37 * u, 1.3 + 0.29 * u, 5.0 - 0.21 * u]
    }).collect();
    let before = evaluate_lab_points(&at, &pts);
    let after = evaluate_lab_points(&r.state, &pts);
    let scale = before.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (x, y) in before.iter().zip(&after) {
        assert!((x - y).abs() <= 1e-12 * scale + 2.0 * r.loss.sqrt(), "{x} vs {y}");
    }
}

#[test]
fn shear_damps_a_supercritical_gaussian() {
    let grid = GridSpec::cubic(32, 8.0 * PI).unwrap();
    let init = gaussian_field(grid, 300.0, 1.5, [4.0 * PI; 3]);
    let cfg = StepConfig::new(0.05, 0.5, 1e-7, 10.0, 4.0).unwrap();
    let opts = RunOptions::default();
    let still = run(&init, FlowParams::new(0.0, 1.5).unwrap(), &cfg, 1.0, 0.05, &opts).unwrap();
    assert_eq!(still.status.outcome, Outcome::BlowupDetected);
    let sheared = run(&init, FlowParams::new(100.0, 1.5).unwrap(), &cfg, 1.0, 0.05, &opts).unwrap();
    assert!(sheared.status.is_ok(), "{:?}", sheared.status);
    let l4 = sheared.series.column(couette_ks::diagnostics::Column::L4);
    assert!(l4.last().unwrap().1 < l4[0].1);
}
