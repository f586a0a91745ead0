use couette_ks::estimates::{
    fit_exponent, inequality_ratio, sample_inequality, shear_power_integral, Inequality, Sample,
};
use proptest::prelude::*;

fn sample() -> impl Strategy<Value = Sample> {
    (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64, any::<bool>(), any::<bool>()).prop_map(
        |(x, e, a, t, sx, se)| Sample {
            xi: if sx { 1.0 } else { -1.0 } * 10f64.powf(x),
            eta: if se { 1.0 } else { -1.0 } * 10f64.powf(e),
            a: 10f64.powf(a),
            t: 10f64.powf(t),
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn quadratic_integral_is_exact(s in sample()) {
        let y = s.a * s.t * s.xi;
        let exact = s.t * (s.eta * s.eta + s.eta * y + y * y / 3.0);
        let v = shear_power_integral(s.xi, s.eta, s.a, s.t, 2.0);
        prop_assert!((v - exact).abs() <= 1e-9 * exact.abs().max(1e-300) + 1e-12 * s.t * (s.eta * s.eta + y * y));
    }

    #[test]
    fn quadratic_forms_stay_within_two(s in sample()) {
        for which in [Inequality::FormFirst, Inequality::FormSecond] {
            let r = inequality_ratio(which, 0.0, s).unwrap();
            prop_assert!(r > 0.0 && r <= 2.0 * (1.0 + 1e-12), "{which}: {r}");
        }
    }

    #[test]
    fn power_fit_recovers_exponent(k in -4.0..4.0f64, c in 0.01..100.0f64) {
        let pts: Vec<(f64, f64)> = (0..8).map(|i| {
            let x = 10f64.powf(i as f64 / 3.0);
            (x, c * x.powf(k))
        }).collect();
        let fit = fit_exponent(&pts).unwrap();
        prop_assert!((fit.slope - k).abs() < 1e-10);
        prop_assert!(fit.r2 > 1.0 - 1e-10);
    }
}

#[test]
fn quadratic_lower_constant_is_the_smallest_eigenvalue() {
    // ∫₀ᵗ(η+Asξ)²ds = t(η² + ηy + y²/3) with y = Atξ; the infimum over
    // η² + y² = 1 is the smaller eigenvalue of [[1, 1/2], [1/2, 1/3]].
    let exact = (4.0 - 13f64.sqrt()) / 6.0;
    let c = sample_inequality(Inequality::ShearLower, 2.0, 20_000, 5).unwrap();
    assert!(c.worst_ratio >= exact * (1.0 - 1e-9));
    assert!(c.worst_ratio <= exact * 1.02, "{} vs {exact}", c.worst_ratio);
}

#[test]
fn sampling_is_seeded() {
    let a = sample_inequality(Inequality::ShearUpper, -0.5, 10_000, 9).unwrap();
    let b = sample_inequality(Inequality::ShearUpper, -0.5, 10_000, 9).unwrap();
    assert_eq!(a, b);
    assert!(a.worst_ratio.is_finite() && a.worst_ratio > 0.0);
    assert!(sample_inequality(Inequality::ShearUpper, -0.5, 100, 9).is_err());
}
