//! The shear-transported fractional symbol and the Green's-function amplitude.
//!
//! For a wavenumber `(ξ, η, ζ)` carried by a Couette flow of amplitude `A`,
//! the quadratic form seen at time `s` is
//!
//! ```text
//! θ(s) = ξ² + (η + σ·A·s·ξ)² + ζ²,        σ = ±1
//! ```
//!
//! and the amplitude of the linear solution operator is `exp(-ℍ)` with
//! `ℍ(t0, t1) = ∫_{t0}^{t1} θ(s)^{α/2} ds`.
//!
//! # Sign convention
//!
//! `σ = +1` parameterises modes by their wavenumber at the *end* of the
//! interval (laboratory frequency at time `t`, traced backwards). `σ = -1`
//! parameterises them by the wavenumber at the *start*: a mode that is
//! `(ξ, η0, ζ)` at time 0 sits at `(ξ, η0 - A·t·ξ, ζ)` at time `t`, because
//! `∂ₜn̂ - Aξ ∂_η n̂ = …` transports η with speed `-Aξ`. The two are the
//! reflection `s ↦ t - s` of one another:
//!
//! ```text
//! ℍ₊((ξ, η, ζ); 0, t) = ℍ₋((ξ, η + A·t·ξ, ζ); 0, t)
//! ```
//!
//! The shear-frame solver stores coefficients by their initial wavenumber
//! and therefore always uses `σ = -1`.

use thiserror::Error;

use crate::quadrature::{adaptive, PanelRule, QuadratureError};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SymbolError {
    #[error("invalid flow parameters: {0}")]
    InvalidFlow(String),
    #[error("invalid quadrature configuration: {0}")]
    InvalidQuadrature(String),
    #[error("closed form requires alpha = 2, got {alpha}")]
    WrongAlpha { alpha: f64 },
    #[error("time interval must satisfy t0 <= t1 (got t0 = {t0}, t1 = {t1})")]
    InvalidInterval { t0: f64, t1: f64 },
    #[error("quadrature not converged: {0}")]
    QuadratureNotConverged(#[from] QuadratureError),
}

/// Shear amplitude `A` and fractional order `α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams<T> {
    shear: T,
    alpha: T,
}

impl<T: Real> FlowParams<T> {
    pub fn new(shear: T, alpha: T) -> Result<Self, SymbolError> {
        if !(shear.is_finite() && shear >= T::zero()) {
            return Err(SymbolError::InvalidFlow(format!("shear amplitude A must be finite and >= 0, got {shear}")));
        }
        if !(alpha > T::one() && alpha <= lit(2.0)) {
            return Err(SymbolError::InvalidFlow(format!("alpha must lie in (1,2], got {alpha}")));
        }
        Ok(Self { shear, alpha })
    }

    pub fn shear(&self) -> T {
        self.shear
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn is_classical(&self) -> bool {
        self.alpha == lit(2.0)
    }
}

/// A point `(ξ, η, ζ)` of frequency space.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FreqPoint<T> {
    pub xi: T,
    pub eta: T,
    pub zeta: T,
}

impl<T: Real> FreqPoint<T> {
    pub fn new(xi: T, eta: T, zeta: T) -> Self {
        Self { xi, eta, zeta }
    }

    pub fn norm_sqr(&self) -> T {
        self.xi * self.xi + self.eta * self.eta + self.zeta * self.zeta
    }

    pub fn is_finite(&self) -> bool {
        self.xi.is_finite() && self.eta.is_finite() && self.zeta.is_finite()
    }
}

/// Orientation of the characteristic shift `η ± A s ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShearSign {
    Plus,
    Minus,
}

impl ShearSign {
    #[inline]
    pub fn value<T: Real>(self) -> T {
        match self {
            ShearSign::Plus => T::one(),
            ShearSign::Minus => -T::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig<T> {
    rel_tol: T,
    max_subdivisions: usize,
}

impl<T: Real> QuadratureConfig<T> {
    pub fn new(rel_tol: T, max_subdivisions: usize) -> Result<Self, SymbolError> {
        if !(rel_tol > T::zero() && rel_tol <= lit(1e-4)) {
            return Err(SymbolError::InvalidQuadrature(format!("rel_tol must lie in (0, 1e-4], got {rel_tol}")));
        }
        if max_subdivisions < 1 {
            return Err(SymbolError::InvalidQuadrature("max_subdivisions must be >= 1".into()));
        }
        Ok(Self { rel_tol, max_subdivisions })
    }

    pub fn rel_tol(&self) -> T {
        self.rel_tol
    }

    pub fn max_subdivisions(&self) -> usize {
        self.max_subdivisions
    }
}

impl<T: Real> Default for QuadratureConfig<T> {
    /// `rel_tol = 1e-10` (or the precision floor of `T` if coarser), 200 bisections.
    fn default() -> Self {
        Self {
            rel_tol: lit::<T>(1e-10).max(T::tolerance_floor()),
            max_subdivisions: 200,
        }
    }
}

/// `θ = ξ² + (η + σ·A·s·ξ)² + ζ²`.
#[inline]
pub fn theta<T: Real>(p: FreqPoint<T>, s: T, flow: &FlowParams<T>, sign: ShearSign) -> T {
    let shifted = p.eta + sign.value::<T>() * flow.shear * s * p.xi;
    p.xi * p.xi + shifted * shifted + p.zeta * p.zeta
}

fn check_interval<T: Real>(t0: T, t1: T) -> Result<(), SymbolError> {
    if t0 <= t1 && t0.is_finite() && t1.is_finite() {
        Ok(())
    } else {
        Err(SymbolError::InvalidInterval {
            t0: t0.to_f64().unwrap_or(f64::NAN),
            t1: t1.to_f64().unwrap_or(f64::NAN),
        })
    }
}

/// `ℍ(p; t0, t1) = ∫_{t0}^{t1} θ(s)^{α/2} ds`.
///
/// Takes the exact constant-integrand path when `A·ξ = 0` and the closed form
/// when `α = 2`; everything else goes through [`integrate_symbol`].
pub fn accumulated_symbol<T: Real>(
    p: FreqPoint<T>,
    t0: T,
    t1: T,
    flow: &FlowParams<T>,
    sign: ShearSign,
    q: &QuadratureConfig<T>,
) -> Result<T, SymbolError> {
    check_interval(t0, t1)?;
    if t0 == t1 {
        return Ok(T::zero());
    }
    if flow.shear * p.xi == T::zero() {
        let theta0 = p.norm_sqr();
        return Ok(pow_half_alpha(theta0, flow.alpha) * (t1 - t0));
    }
    if flow.is_classical() {
        return accumulated_symbol_alpha2(p, t0, t1, flow, sign);
    }
    integrate_symbol(p, t0, t1, flow, sign, q)
}

#[inline]
fn pow_half_alpha<T: Real>(theta: T, alpha: T) -> T {
    if alpha == lit(2.0) {
        theta
    } else if theta == T::zero() {
        T::zero()
    } else {
        theta.powf(alpha * lit(0.5))
    }
}

/// Exact `ℍ` for `α = 2`.
///
/// Uses `∫ u² ds = (t1 - t0)(u0² + u0·u1 + u1²)/3` for the linear shift
/// `u(s) = η + σAsξ`, which is the cubic-difference formula
/// `[u1³ - u0³] / (3σAξ)` with the division carried out symbolically, so
/// it stays accurate as `Aξ → 0` and reduces to `(ξ²+η²+ζ²)(t1-t0)` there.
pub fn accumulated_symbol_alpha2<T: Real>(
    p: FreqPoint<T>,
    t0: T,
    t1: T,
    flow: &FlowParams<T>,
    sign: ShearSign,
) -> Result<T, SymbolError> {
    if !flow.is_classical() {
        return Err(SymbolError::WrongAlpha {
            alpha: flow.alpha.to_f64().unwrap_or(f64::NAN),
        });
    }
    check_interval(t0, t1)?;
    let slope = sign.value::<T>() * flow.shear * p.xi;
    let u0 = p.eta + slope * t0;
    let u1 = p.eta + slope * t1;
    let half = u0 + u1 * lit(0.5);
    let quad = half * half + u1 * u1 * lit(0.75);
    let dt = t1 - t0;
    Ok((p.xi * p.xi + p.zeta * p.zeta) * dt + quad * dt / lit(3.0))
}

/// `ℍ` by adaptive Gauss–Legendre quadrature, with no closed-form shortcuts.
///
/// With `u = η + σAsξ` and `c² = ξ² + ζ²` the integrand is
/// `(c² + u²)^{α/2}`, whose only near-singularities are the branch points
/// `u = ±ic`. When the `u`-range is short compared to its distance from
/// them the integral is done in `s` directly. Otherwise it is done after
/// the substitution `u = c·sinh w`, which turns the integrand into the
/// entire function `(c·cosh w)^{α+1}` and removes the kink at the
/// minimiser `s* = -η/(σAξ)`.
pub fn integrate_symbol<T: Real>(
    p: FreqPoint<T>,
    t0: T,
    t1: T,
    flow: &FlowParams<T>,
    sign: ShearSign,
    q: &QuadratureConfig<T>,
) -> Result<T, SymbolError> {
    integrate_symbol_with(&PanelRule::new(), p, t0, t1, flow, sign, q)
}

pub(crate) fn integrate_symbol_with<T: Real>(
    rule: &PanelRule<T>,
    p: FreqPoint<T>,
    t0: T,
    t1: T,
    flow: &FlowParams<T>,
    sign: ShearSign,
    q: &QuadratureConfig<T>,
) -> Result<T, SymbolError> {
    check_interval(t0, t1)?;
    if t0 == t1 {
        return Ok(T::zero());
    }
    let alpha = flow.alpha;
    let half_alpha = alpha * lit(0.5);
    let slope = sign.value::<T>() * flow.shear * p.xi;
    let c2 = p.xi * p.xi + p.zeta * p.zeta;
    let u0 = p.eta + slope * t0;
    let u1 = p.eta + slope * t1;
    let (ulo, uhi) = if u0 <= u1 { (u0, u1) } else { (u1, u0) };
    let gap = if ulo > T::zero() {
        ulo
    } else if uhi < T::zero() {
        -uhi
    } else {
        T::zero()
    };
    let reach = (c2 + gap * gap).sqrt();

    if slope == T::zero() || c2 == T::zero() || uhi - ulo <= reach {
        let eta = p.eta;
        let integrand = |s: T| {
            let u = eta + slope * s;
            let th = c2 + u * u;
            if th == T::zero() {
                T::zero()
            } else {
                th.powf(half_alpha)
            }
        };
        let mut breaks = Vec::new();
        if slope != T::zero() {
            breaks.push(-eta / slope);
        }
        let (val, _) = adaptive(rule, integrand, t0, t1, &breaks, q.rel_tol, q.max_subdivisions)?;
        return Ok(val);
    }

    let c = c2.sqrt();
    let wlo = (ulo / c).asinh();
    let whi = (uhi / c).asinh();
    let exponent = alpha + T::one();
    let integrand = |w: T| (c * w.cosh()).powf(exponent);
    let (val, _) = adaptive(rule, integrand, wlo, whi, &[T::zero()], q.rel_tol, q.max_subdivisions)?;
    Ok(val / slope.abs())
}

/// Green's-function amplitude `Ĝ₂ = exp(-ℍ(p; 0, t))`.
pub fn green_hat<T: Real>(
    p: FreqPoint<T>,
    t: T,
    flow: &FlowParams<T>,
    sign: ShearSign,
    q: &QuadratureConfig<T>,
) -> Result<T, SymbolError> {
    Ok((-accumulated_symbol(p, T::zero(), t, flow, sign, q)?).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flow(a: f64, alpha: f64) -> FlowParams<f64> {
        FlowParams::new(a, alpha).unwrap()
    }

    fn pt(xi: f64, eta: f64, zeta: f64) -> FreqPoint<f64> {
        FreqPoint::new(xi, eta, zeta)
    }

    #[test]
    fn flow_params_reject_out_of_range() {
        assert!(FlowParams::new(-1.0, 1.5).is_err());
        assert!(FlowParams::new(1.0, 1.0).is_err());
        assert!(FlowParams::new(1.0, 2.5).is_err());
        assert!(FlowParams::new(f64::NAN, 1.5).is_err());
        assert!(FlowParams::new(0.0, 2.0).is_ok());
    }

    #[test]
    fn quadrature_config_domain() {
        assert!(QuadratureConfig::new(1e-3, 10).is_err());
        assert!(QuadratureConfig::new(0.0, 10).is_err());
        assert!(QuadratureConfig::new(1e-8, 0).is_err());
        assert!(QuadratureConfig::new(1e-4, 1).is_ok());
    }

    #[test]
    fn theta_examples() {
        let f = flow(1.0, 1.5);
        assert_eq!(theta(pt(0.0, 0.0, 0.0), 3.7, &f, ShearSign::Plus), 0.0);
        assert_eq!(theta(pt(1.0, 0.0, 0.0), 1.0, &f, ShearSign::Plus), 2.0);
        assert_eq!(theta(pt(1.0, -2.0, 0.0), 2.0, &f, ShearSign::Plus), 1.0);
    }

    #[test]
    fn accumulated_symbol_examples() {
        let q = QuadratureConfig::default();
        let v = accumulated_symbol(pt(0.0, 2.0, 0.0), 0.0, 3.0, &flow(1.0, 1.1), ShearSign::Plus, &q).unwrap();
        // α = 1.1 rather than the nominal α = 1 so the parameters are admissible;
        // the ξ = 0 path gives (η²)^{α/2}·3.
        assert!((v - 2f64.powf(1.1) * 3.0).abs() < 1e-12);
        let v = accumulated_symbol(pt(1.0, 0.0, 0.0), 0.0, 1.0, &flow(1.0, 2.0), ShearSign::Plus, &q).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn alpha_one_integral_matches_antiderivative() {
        // ∫₀¹ √(1+s²) ds via (s√(1+s²) + asinh s)/2; α = 1 is outside the
        // admissible flow range, so drive the quadrature with a raw config.
        let antiderivative = |s: f64| (s * (1.0 + s * s).sqrt() + s.asinh()) / 2.0;
        let oracle = antiderivative(1.0) - antiderivative(0.0);
        assert!((oracle - 1.147_793_574_696_319).abs() < 1e-12);
        let f = FlowParams { shear: 1.0, alpha: 1.0 };
        let q = QuadratureConfig::default();
        let v = integrate_symbol(pt(1.0, 0.0, 0.0), 0.0, 1.0, &f, ShearSign::Plus, &q).unwrap();
        assert!((v - oracle).abs() / oracle < 1e-10, "{v}");
    }

    #[test]
    fn closed_form_examples() {
        let f = flow(1.0, 2.0);
        let v = accumulated_symbol_alpha2(pt(1.0, 0.0, 0.0), 0.0, 1.0, &f, ShearSign::Plus).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-15);
        let f0 = flow(0.0, 2.0);
        let v = accumulated_symbol_alpha2(pt(0.7, 3.0, 4.0), 0.0, 2.0, &f0, ShearSign::Plus).unwrap();
        assert!((v - (0.49 + 25.0) * 2.0).abs() < 1e-12);
        let v = accumulated_symbol_alpha2(pt(0.0, 3.0, 4.0), 0.0, 2.0, &f, ShearSign::Minus).unwrap();
        assert_eq!(v, 50.0);
        assert!(matches!(
            accumulated_symbol_alpha2(pt(1.0, 0.0, 0.0), 0.0, 1.0, &flow(1.0, 1.5), ShearSign::Plus),
            Err(SymbolError::WrongAlpha { .. })
        ));
    }

    #[test]
    fn green_hat_examples() {
        let q = QuadratureConfig::default();
        assert_eq!(green_hat(pt(3.0, -1.0, 2.0), 0.0, &flow(5.0, 1.5), ShearSign::Plus, &q).unwrap(), 1.0);
        let g = green_hat(pt(1.0, 0.0, 0.0), 1.0, &flow(0.0, 1.5), ShearSign::Plus, &q).unwrap();
        assert!((g - (-1f64).exp()).abs() < 1e-15);
        let g = green_hat(pt(1.0, 0.0, 0.0), 1.0, &flow(1.0, 2.0), ShearSign::Plus, &q).unwrap();
        assert!((g - 0.263_597_138_115_727_7).abs() < 1e-12);
        assert_eq!(green_hat(pt(0.0, 0.0, 0.0), 5.0, &flow(5.0, 1.5), ShearSign::Plus, &q).unwrap(), 1.0);
    }

    #[test]
    fn rejects_reversed_interval() {
        let q = QuadratureConfig::default();
        assert!(matches!(
            accumulated_symbol(pt(1.0, 1.0, 1.0), 1.0, 0.5, &flow(1.0, 1.5), ShearSign::Plus, &q),
            Err(SymbolError::InvalidInterval { .. })
        ));
    }

    #[test]
    fn exhausted_subdivisions_surface_as_error() {
        let q = QuadratureConfig::new(1e-12, 1).unwrap();
        let r = integrate_symbol(pt(1.0, 37.0, 0.0), 0.0, 9.0, &flow(80.0, 1.3), ShearSign::Minus, &q);
        assert!(matches!(r, Err(SymbolError::QuadratureNotConverged(_))));
    }

    #[test]
    fn reflection_between_sign_conventions() {
        let q = QuadratureConfig::default();
        let f = flow(7.0, 1.4);
        let (xi, eta, zeta, t) = (0.8, -2.5, 0.3, 1.7);
        let plus = accumulated_symbol(pt(xi, eta, zeta), 0.0, t, &f, ShearSign::Plus, &q).unwrap();
        let minus = accumulated_symbol(pt(xi, eta + 7.0 * t * xi, zeta), 0.0, t, &f, ShearSign::Minus, &q).unwrap();
        assert!((plus - minus).abs() / plus < 1e-9);
    }

    #[test]
    fn f32_symbol_is_close_to_f64() {
        let q32 = QuadratureConfig::<f32>::default();
        let f32flow = FlowParams::new(3.0f32, 1.5).unwrap();
        let v32 = accumulated_symbol(FreqPoint::new(0.5f32, 1.0, -0.2), 0.0, 2.0, &f32flow, ShearSign::Minus, &q32).unwrap();
        let v64 = accumulated_symbol(pt(0.5, 1.0, -0.2), 0.0, 2.0, &flow(3.0, 1.5), ShearSign::Minus, &QuadratureConfig::default()).unwrap();
        assert!(((v32 as f64) - v64).abs() / v64 < 1e-5);
    }

    fn sample_point() -> impl Strategy<Value = (f64, f64, f64, f64, f64)> {
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64, 0.0..100.0f64, 1.05..2.0f64)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn additivity((xi, eta, zeta, a, alpha) in sample_point(), t1 in 0.0..3.0f64, t2 in 0.0..3.0f64) {
            let q = QuadratureConfig::default();
            let f = flow(a, alpha);
            let p = pt(xi, eta, zeta);
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let whole = integrate_symbol(p, 0.0, hi, &f, ShearSign::Plus, &q).unwrap();
            let parts = integrate_symbol(p, 0.0, lo, &f, ShearSign::Plus, &q).unwrap()
                + integrate_symbol(p, lo, hi, &f, ShearSign::Plus, &q).unwrap();
            prop_assert!((whole - parts).abs() <= 2.0 * q.rel_tol() * whole.max(1e-300) + 1e-300);
        }

        #[test]
        fn monotone_in_time((xi, eta, zeta, a, alpha) in sample_point(), t1 in 0.0..3.0f64, dt in 0.0..3.0f64) {
            let q = QuadratureConfig::default();
            let f = flow(a, alpha);
            let p = pt(xi, eta, zeta);
            let h1 = accumulated_symbol(p, 0.0, t1, &f, ShearSign::Minus, &q).unwrap();
            let h2 = accumulated_symbol(p, 0.0, t1 + dt, &f, ShearSign::Minus, &q).unwrap();
            prop_assert!(h2 >= h1 * (1.0 - 1e-12));
            let g1 = green_hat(p, t1, &f, ShearSign::Minus, &q).unwrap();
            let g2 = green_hat(p, t1 + dt, &f, ShearSign::Minus, &q).unwrap();
            prop_assert!(g2 <= g1 * (1.0 + 1e-12));
            prop_assert!(g2 > 0.0 || h2 > 700.0);
            prop_assert!(g1 <= 1.0);
        }

        #[test]
        fn shear_shift_characteristic((xi, eta, zeta, a, alpha) in sample_point(), t0 in 0.0..2.0f64, len in 0.0..2.0f64, tau in -2.0..2.0f64) {
            let q = QuadratureConfig::default();
            let f = flow(a, alpha);
            for sign in [ShearSign::Plus, ShearSign::Minus] {
                let shifted = pt(xi, eta + sign.value::<f64>() * a * tau * xi, zeta);
                let lhs = integrate_symbol(shifted, t0, t0 + len, &f, sign, &q).unwrap();
                let rhs = integrate_symbol(pt(xi, eta, zeta), t0 + tau, t0 + tau + len, &f, sign, &q).unwrap();
                prop_assert!((lhs - rhs).abs() <= 4.0 * q.rel_tol() * lhs.max(rhs).max(1e-300) + 1e-300,
                    "lhs {} rhs {}", lhs, rhs);
            }
        }

        #[test]
        fn unsheared_scaling((xi, eta, zeta, _a, alpha) in sample_point(), t in 0.0..10.0f64) {
            let q = QuadratureConfig::default();
            let f = flow(0.0, alpha);
            let p = pt(xi, eta, zeta);
            let h = integrate_symbol(p, 0.0, t, &f, ShearSign::Plus, &q).unwrap();
            let exact = t * p.norm_sqr().powf(alpha / 2.0);
            prop_assert!((h - exact).abs() <= q.rel_tol() * exact.max(1e-300) + 1e-300);
        }
    }
}
