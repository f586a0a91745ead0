//! Numerical checks of the frequency-space estimates behind the decay theory.
//!
//! Three families live here: sampled pointwise inequalities with empirical
//! constants, weighted `L¹`/`L²` norms of `Ĝ₂` over `ℝ³` and their scaling
//! exponents, and `L¹` norms of kernel derivatives synthesised on a grid.
//! Everything is `f64`.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::{gamma, gamma_ur};
use thiserror::Error;

use crate::diagnostics::{fit_power_law, DecayFit, DiagnosticsError};
use crate::quadrature::gauss_legendre_f64;
use crate::spectral::{Fft3, GridSpec, SpectralError, SpectralField};
use crate::symbol::{accumulated_symbol, green_hat, FlowParams, FreqPoint, QuadratureConfig, ShearSign, SymbolError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Symbol(#[from] SymbolError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Fit(#[from] DiagnosticsError),
    #[error("truncated quadrature did not converge (tail bound {tail:e}, value {value:e})")]
    QuadratureNotConverged { tail: f64, value: f64 },
    #[error("kernel grid too small: {0}")]
    GridTooSmall(String),
}

// ---------------------------------------------------------------------------
// Sampled inequalities

/// The four pointwise inequalities, all in the variables `(ξ, η, A, t)`.
///
/// * `ShearLower(γ)`: `∫₀ᵗ|η+Asξ|^γ ds ≥ C (|η|^γ + (At)^γ|ξ|^γ) t`
/// * `ShearUpper(β)`: `∫₀ᵗ|η+Asξ|^β ds ≤ C (|η| + At|ξ|)^β t`, `β ∈ (-1,0)`
/// * `FormFirst`: `ξ² + (1+At)⁻²η² ≤ C (ξ² + (η+Atξ)²)`
/// * `FormSecond`: `ξ² + (η+Atξ)² ≤ C ((1+At)²ξ² + η²)`
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Inequality {
    ShearLower,
    ShearUpper,
    FormFirst,
    FormSecond,
}

/// Which extreme of the sampled ratios is the empirical constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Infimum,
    Supremum,
}

impl Inequality {
    pub const ALL: [Inequality; 4] = [
        Inequality::ShearLower,
        Inequality::ShearUpper,
        Inequality::FormFirst,
        Inequality::FormSecond,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Inequality::ShearLower => "shear_lower",
            Inequality::ShearUpper => "shear_upper",
            Inequality::FormFirst => "form_first",
            Inequality::FormSecond => "form_second",
        }
    }

    pub fn extremum(self) -> Extremum {
        match self {
            Inequality::ShearLower => Extremum::Infimum,
            _ => Extremum::Supremum,
        }
    }

    fn check_exponent(self, e: f64) -> Result<(), EstimateError> {
        let ok = match self {
            Inequality::ShearLower => e >= 0.0 && e.is_finite(),
            Inequality::ShearUpper => e > -1.0 && e < 0.0,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(EstimateError::InvalidParameter(format!(
                "exponent {e} out of range for {}",
                self.name()
            )))
        }
    }
}

impl fmt::Display for Inequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Inequality {
    type Err = EstimateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Inequality::ALL
            .into_iter()
            .find(|i| i.name() == s)
            .ok_or_else(|| EstimateError::InvalidParameter(format!("unknown inequality '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub xi: f64,
    pub eta: f64,
    pub a: f64,
    pub t: f64,
}

/// Sampling domain. `EtaZero` pins `η = 0` and skips the adversarial set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleDomain {
    #[default]
    Full,
    EtaZero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalConstant {
    pub inequality: Inequality,
    pub exponent: f64,
    pub extremum: Extremum,
    /// Number of ratios that entered the extremum.
    pub sample_count: usize,
    pub worst_ratio: f64,
    pub witness: Sample,
    pub seed: u64,
}

/// `∫₀ᵗ |η + Asξ|^γ ds` in closed form, for `γ > -1`.
pub fn shear_power_integral(xi: f64, eta: f64, a: f64, t: f64, gamma: f64) -> f64 {
    let u0 = eta;
    let slope = a * xi;
    let pow = |u: f64| if gamma == 0.0 { 1.0 } else { u.abs().powf(gamma) };
    if slope == 0.0 || t == 0.0 {
        return pow(u0) * t;
    }
    let u1 = eta + slope * t;
    let g1 = gamma + 1.0;
    if u0 * u1 <= 0.0 {
        return (u0.abs().powf(g1) + u1.abs().powf(g1)) / (g1 * slope.abs());
    }
    // u(s) = u0 (1 + r s/t) with r > -1.
    let r = slope * t / u0;
    pow(u0) * t * (g1 * r.ln_1p()).exp_m1() / (g1 * r)
}

/// LHS/RHS of the inequality at one sample; `None` when both sides vanish.
pub fn inequality_ratio(which: Inequality, exponent: f64, s: Sample) -> Option<f64> {
    let at = s.a * s.t;
    let (num, den) = match which {
        Inequality::ShearLower => {
            let g = exponent;
            let p = |u: f64| if g == 0.0 { 1.0 } else { u.abs().powf(g) };
            (
                shear_power_integral(s.xi, s.eta, s.a, s.t, g),
                (p(s.eta) + p(at) * p(s.xi)) * s.t,
            )
        }
        Inequality::ShearUpper => (
            shear_power_integral(s.xi, s.eta, s.a, s.t, exponent),
            (s.eta.abs() + at * s.xi.abs()).powf(exponent) * s.t,
        ),
        Inequality::FormFirst => {
            let sh = s.eta + at * s.xi;
            (
                s.xi * s.xi + s.eta * s.eta / ((1.0 + at) * (1.0 + at)),
                s.xi * s.xi + sh * sh,
            )
        }
        Inequality::FormSecond => {
            let sh = s.eta + at * s.xi;
            (
                s.xi * s.xi + sh * sh,
                (1.0 + at) * (1.0 + at) * s.xi * s.xi + s.eta * s.eta,
            )
        }
    };
    let r = num / den;
    if r.is_finite() {
        Some(r)
    } else {
        None
    }
}

fn log_uniform(rng: &mut ChaCha8Rng) -> f64 {
    10f64.powf(rng.gen_range(-3.0..3.0))
}

fn signed(rng: &mut ChaCha8Rng) -> f64 {
    let v = log_uniform(rng);
    if rng.gen::<bool>() {
        v
    } else {
        -v
    }
}

/// Seeded base samples: `|ξ|, |η|, A, t` log-uniform on `[1e-3, 1e3]`,
/// with random signs on `ξ` and `η`.
pub fn draw_samples(count: usize, seed: u64, domain: SampleDomain) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let xi = signed(&mut rng);
            let eta = signed(&mut rng);
            let a = log_uniform(&mut rng);
            let t = log_uniform(&mut rng);
            Sample {
                xi,
                eta: if domain == SampleDomain::EtaZero { 0.0 } else { eta },
                a,
                t,
            }
        })
        .collect()
}

/// Deterministic variants on the cancellation manifolds: `η = -Atξ`,
/// `ξ = 0`, and `At = 1 ± 1e-6`.
pub fn adversarial_samples(base: &[Sample]) -> Vec<Sample> {
    let m = (base.len() / 10).clamp(1, 10_000).min(base.len());
    let mut out = Vec::with_capacity(4 * m);
    for s in &base[..m] {
        out.push(Sample {
            eta: -s.a * s.t * s.xi,
            ..*s
        });
        out.push(Sample { xi: 0.0, ..*s });
        out.push(Sample {
            t: (1.0 + 1e-6) / s.a,
            ..*s
        });
        out.push(Sample {
            t: (1.0 - 1e-6) / s.a,
            ..*s
        });
    }
    out
}

pub fn sample_inequality(
    which: Inequality,
    exponent: f64,
    sample_count: usize,
    seed: u64,
) -> Result<EmpiricalConstant, EstimateError> {
    sample_inequality_on(which, exponent, sample_count, seed, SampleDomain::Full)
}

pub fn sample_inequality_on(
    which: Inequality,
    exponent: f64,
    sample_count: usize,
    seed: u64,
    domain: SampleDomain,
) -> Result<EmpiricalConstant, EstimateError> {
    which.check_exponent(exponent)?;
    if sample_count < 10_000 {
        return Err(EstimateError::InvalidParameter(format!(
            "sample_count {sample_count} below 10000"
        )));
    }
    let mut samples = draw_samples(sample_count, seed, domain);
    if domain == SampleDomain::Full {
        let extra = adversarial_samples(&samples);
        samples.extend(extra);
    }
    let ext = which.extremum();
    let mut best: Option<(f64, Sample)> = None;
    let mut used = 0;
    for s in samples {
        let Some(r) = inequality_ratio(which, exponent, s) else {
            continue;
        };
        used += 1;
        let better = match (best, ext) {
            (None, _) => true,
            (Some((b, _)), Extremum::Infimum) => r < b,
            (Some((b, _)), Extremum::Supremum) => r > b,
        };
        if better {
            best = Some((r, s));
        }
    }
    let (worst_ratio, witness) = best.expect("at least one finite ratio among >= 1e4 samples");
    Ok(EmpiricalConstant {
        inequality: which,
        exponent,
        extremum: ext,
        sample_count: used,
        worst_ratio,
        witness,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Weighted spectral norms
//
// With X = t^{1/α}Ξ and a = At, ℍ(Ξ;0,t) = h(X; a) where h is the symbol on
// [0,1] with shear a. Substituting x = x'/(1+a), b = a/(1+a),
//
//   h = ∫₀¹ (x'²/(1+a)² + (y + bτx')² + z²)^{α/2} dτ,
//
// which keeps the integrand O(1)-wide in every variable for all a. Then
//
//   ∫|ξ|^{k1}|η|^{k2}|ζ|^{k3} Ĝ₂ dΞ = t^{-(3+k)/α} (1+a)^{-1-k1} ∫ x'^{k1}|y|^{k2}|z|^{k3} e^{-h}.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L1,
    L2,
}

impl NormKind {
    pub fn p(self) -> f64 {
        match self {
            NormKind::L1 => 1.0,
            NormKind::L2 => 2.0,
        }
    }
}

/// Truncation policy: the union-bound tail must stay below `tail_rel`
/// times the computed value, and the radii start where the envelope
/// exponent reaches `start_exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub tail_rel: f64,
    pub start_exponent: f64,
    pub max_enlargements: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Self {
            tail_rel: 1e-8,
            start_exponent: 40.0,
            max_enlargements: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedNorm {
    pub value: f64,
    /// Upper bound on the neglected part, in the same units as `value`.
    pub tail: f64,
    pub radius: [f64; 3],
}

/// `inf_r ∫₀¹|r+τ|^α dτ / (|r|^α + 1)`, scanned densely and shaved by 1%.
pub fn shear_mixing_constant(alpha: f64) -> f64 {
    let n = 20_000;
    let mut best = f64::INFINITY;
    for i in 0..=n {
        let r = -3.0 + 5.0 * i as f64 / n as f64;
        let v = shear_power_integral(1.0, r, 1.0, 1.0, alpha) / (r.abs().powf(alpha) + 1.0);
        best = best.min(v);
    }
    0.99 * best
}

/// `∫_R^∞ x^k e^{-κx^α} dx`.
fn tail_1d(k: f64, kappa: f64, alpha: f64, r: f64) -> f64 {
    let s = (k + 1.0) / alpha;
    kappa.powf(-s) / alpha * gamma(s) * gamma_ur(s, kappa * r.powf(alpha))
}

fn full_1d(k: f64, kappa: f64, alpha: f64) -> f64 {
    let s = (k + 1.0) / alpha;
    kappa.powf(-s) / alpha * gamma(s)
}

fn panel_nodes(radius: f64, rule: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut breaks = vec![0.0];
    let mut b = 1.0 / 64.0;
    while b < radius {
        breaks.push(b);
        b *= 2.0;
    }
    breaks.push(radius);
    let mut out = Vec::with_capacity(rule.len() * breaks.len());
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for &(x, wt) in rule {
            out.push((mid + half * x, half * wt));
        }
    }
    out
}

/// `e^{-h}` tabulated on tensor Gauss–Legendre nodes for one `(α, a)`,
/// reusable for every weight and both norms.
#[derive(Debug, Clone)]
pub struct ScaledSymbolTable {
    alpha: f64,
    a: f64,
    x: Vec<(f64, f64)>,
    y: Vec<(f64, f64)>,
    z: Vec<(f64, f64)>,
    decay: Vec<f64>,
    kappa: [f64; 3],
    radius: [f64; 3],
}

impl ScaledSymbolTable {
    pub fn build(alpha: f64, a: f64, level: f64, q: &QuadratureConfig<f64>) -> Result<Self, EstimateError> {
        let flow = FlowParams::new(a, alpha)?;
        if !(level > 0.0 && level.is_finite()) {
            return Err(EstimateError::InvalidParameter(format!("envelope level {level}")));
        }
        let b = a / (1.0 + a);
        let c = shear_mixing_constant(alpha);
        let kappa = [
            ((1.0 + a).powf(-alpha) + c * b.powf(alpha)) / 3.0,
            c / 3.0,
            1.0 / 3.0,
        ];
        let radius = kappa.map(|k| (level / k).powf(1.0 / alpha));
        let rule = gauss_legendre_f64(10);
        let x = panel_nodes(radius[0], &rule);
        let zs = panel_nodes(radius[2], &rule);
        let ypos = panel_nodes(radius[1], &rule);
        let mut y: Vec<(f64, f64)> = ypos.iter().rev().map(|&(v, w)| (-v, w)).collect();
        y.extend_from_slice(&ypos);
        let scale = 1.0 / (1.0 + a);
        let mut decay = Vec::with_capacity(x.len() * y.len() * zs.len());
        for &(xv, _) in &x {
            for &(yv, _) in &y {
                for &(zv, _) in &zs {
                    let h = accumulated_symbol(
                        FreqPoint::new(xv * scale, yv, zv),
                        0.0,
                        1.0,
                        &flow,
                        ShearSign::Plus,
                        q,
                    )?;
                    decay.push((-h).exp());
                }
            }
        }
        Ok(Self {
            alpha,
            a,
            x,
            y,
            z: zs,
            decay,
            kappa,
            radius,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn shear_time(&self) -> f64 {
        self.a
    }

    pub fn radius(&self) -> [f64; 3] {
        self.radius
    }

    /// Scaled integral `∫ w e^{-p·h}` over `ℝ³` (with `w^p`) and its tail bound.
    pub fn integral(&self, k: [u32; 3], norm: NormKind) -> (f64, f64) {
        let p = norm.p();
        let kf = k.map(|v| p * v as f64);
        let mut sum = 0.0;
        let mut idx = 0;
        for &(xv, wx) in &self.x {
            let fx = wx * xv.powf(kf[0]);
            for &(yv, wy) in &self.y {
                let fxy = fx * wy * yv.abs().powf(kf[1]);
                let mut inner = 0.0;
                for &(zv, wz) in &self.z {
                    let d = self.decay[idx];
                    idx += 1;
                    let g = if norm == NormKind::L2 { d * d } else { d };
                    inner += wz * zv.powf(kf[2]) * g;
                }
                sum += fxy * inner;
            }
        }
        // x' >= 0 and z >= 0 were integrated; the rest follows by symmetry.
        let value = 4.0 * sum;
        let kap = self.kappa.map(|c| p * c);
        let al = self.alpha;
        let full = [
            2.0 * full_1d(kf[0], kap[0], al),
            2.0 * full_1d(kf[1], kap[1], al),
            2.0 * full_1d(kf[2], kap[2], al),
        ];
        let tails = [
            2.0 * tail_1d(kf[0], kap[0], al, self.radius[0]),
            2.0 * tail_1d(kf[1], kap[1], al, self.radius[1]),
            2.0 * tail_1d(kf[2], kap[2], al, self.radius[2]),
        ];
        let tail = tails[0] * full[1] * full[2] + full[0] * tails[1] * full[2] + full[0] * full[1] * tails[2];
        (value, tail)
    }

    /// Weighted norm at `t` for the table's `a`, i.e. `A = a/t`.
    pub fn norm(&self, k: [u32; 3], t: f64, norm: NormKind) -> WeightedNorm {
        let (raw, tail) = self.integral(k, norm);
        let kk = (k[0] + k[1] + k[2]) as f64;
        let k1 = k[0] as f64;
        let al = self.alpha;
        let one_a = 1.0 + self.a;
        match norm {
            NormKind::L1 => {
                let pre = t.powf(-(3.0 + kk) / al) * one_a.powf(-1.0 - k1);
                WeightedNorm {
                    value: pre * raw,
                    tail: pre * tail,
                    radius: self.radius,
                }
            }
            NormKind::L2 => {
                let pre = t.powf(-(3.0 + 2.0 * kk) / al) * one_a.powf(-1.0 - 2.0 * k1);
                let value = (pre * raw).sqrt();
                WeightedNorm {
                    value,
                    tail: (pre * (raw + tail)).sqrt() - value,
                    radius: self.radius,
                }
            }
        }
    }
}

/// Table whose tail bound meets the truncation policy for every requested
/// `(k, norm)`; the envelope level grows by half each time it does not.
pub fn converged_table(
    alpha: f64,
    a: f64,
    requests: &[([u32; 3], NormKind)],
    trunc: &Truncation,
    q: &QuadratureConfig<f64>,
) -> Result<ScaledSymbolTable, EstimateError> {
    let mut level = trunc.start_exponent;
    let mut last = (0.0, 0.0);
    for _ in 0..=trunc.max_enlargements {
        let table = ScaledSymbolTable::build(alpha, a, level, q)?;
        let mut ok = true;
        for &(k, norm) in requests {
            let (v, tail) = table.integral(k, norm);
            if !(v > 0.0) || !(tail <= trunc.tail_rel * v) {
                ok = false;
                last = (tail, v);
            }
        }
        if ok {
            return Ok(table);
        }
        level *= 1.5;
    }
    Err(EstimateError::QuadratureNotConverged {
        tail: last.0,
        value: last.1,
    })
}

/// `‖|ξ|^{k1}|η|^{k2}|ζ|^{k3} Ĝ₂(·, t)‖_{L^p(ℝ³)}` for `p ∈ {1, 2}`.
pub fn weighted_spectral_norm(
    k: [u32; 3],
    t: f64,
    flow: &FlowParams<f64>,
    norm: NormKind,
    trunc: &Truncation,
    q: &QuadratureConfig<f64>,
) -> Result<WeightedNorm, EstimateError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(EstimateError::InvalidParameter(format!("t must be positive, got {t}")));
    }
    let table = converged_table(flow.alpha(), flow.shear() * t, &[(k, norm)], trunc, q)?;
    Ok(table.norm(k, t, norm))
}

// ---------------------------------------------------------------------------
// Kernel derivative norms

/// Physical box `box_factor` times the anisotropic kernel widths
/// `t^{1/α}(1+At)`, `t^{1/α}`, `t^{1/α}`, axis by axis.
pub fn kernel_grid(
    t: f64,
    flow: &FlowParams<f64>,
    n: [usize; 3],
    box_factor: [f64; 3],
) -> Result<GridSpec<f64>, EstimateError> {
    let w = kernel_widths(t, flow);
    Ok(GridSpec::new(n, [0, 1, 2].map(|a| w[a] * box_factor[a]))?)
}

fn kernel_widths(t: f64, flow: &FlowParams<f64>) -> [f64; 3] {
    let base = t.powf(1.0 / flow.alpha());
    [base * (1.0 + flow.shear() * t), base, base]
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelNorm {
    pub deriv: [u32; 3],
    pub value: f64,
    /// Share of the `L¹` sum carried by the outermost layer of cells, the
    /// one farthest from the origin on some axis.
    pub shell_fraction: f64,
    /// Largest `Ĝ₂` on the outermost layer of modes.
    pub band_edge: f64,
    /// `‖f‖_{L¹} / ‖(1-Δ_Ξ) f̂‖_{L²}`, the Fourier side evaluated through
    /// Parseval as `(2π)^{-3/2} ‖(1+|x|²) f‖_{L²}`.
    pub sobolev_ratio: f64,
    /// Cauchy–Schwarz bound for `sobolev_ratio` on this grid.
    pub sobolev_bound: f64,
}

/// Shell and band-edge tolerances for kernel synthesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelTolerance {
    pub shell: f64,
    pub band_edge: f64,
    pub min_box_factor: f64,
}

impl Default for KernelTolerance {
    fn default() -> Self {
        Self {
            shell: 1e-4,
            band_edge: 1e-6,
            min_box_factor: 12.0,
        }
    }
}

/// `L¹` norms of `∂^d G₂(·, t)` for several multi-indices sharing one
/// synthesis of `Ĝ₂` on `grid`.
pub fn kernel_l1_norms(
    derivs: &[[u32; 3]],
    t: f64,
    flow: &FlowParams<f64>,
    grid: &GridSpec<f64>,
    tol: &KernelTolerance,
    q: &QuadratureConfig<f64>,
) -> Result<Vec<KernelNorm>, EstimateError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(EstimateError::InvalidParameter(format!("t must be positive, got {t}")));
    }
    for d in derivs {
        let order = d[0] + d[1] + d[2];
        if !(1..=2).contains(&order) {
            return Err(EstimateError::InvalidParameter(format!(
                "derivative order {order} outside 1..=2"
            )));
        }
    }
    let widths = kernel_widths(t, flow);
    let box_len = grid.box_len();
    for axis in 0..3 {
        if box_len[axis] < tol.min_box_factor * widths[axis] * (1.0 - 1e-12) {
            return Err(EstimateError::GridTooSmall(format!(
                "axis {axis}: extent {:.4e} below {}x width {:.4e}",
                box_len[axis], tol.min_box_factor, widths[axis]
            )));
        }
    }
    let ghat = synthesize_green_hat(grid, t, flow, q)?;
    let n = grid.n();
    let band_edge = grid_edge_max(grid, &ghat);
    if band_edge > tol.band_edge {
        return Err(EstimateError::GridTooSmall(format!(
            "spectral band truncates the symbol: edge value {band_edge:.3e}"
        )));
    }
    let fft = Fft3::new(*grid);
    let dv = grid.cell_volume();
    let signed_pos: Vec<[f64; 3]> = (0..grid.len())
        .map(|idx| {
            let p = grid.position(idx);
            [0, 1, 2].map(|a| if p[a] >= 0.5 * box_len[a] { p[a] - box_len[a] } else { p[a] })
        })
        .collect();
    let weight_sum: f64 = signed_pos
        .iter()
        .map(|p| {
            let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
            dv / ((1.0 + r2) * (1.0 + r2))
        })
        .sum();
    let two_pi_32 = (2.0 * PI).powf(1.5);
    let sobolev_bound = two_pi_32 * weight_sum.sqrt();

    let mut out = Vec::with_capacity(derivs.len());
    for &d in derivs {
        let order = d[0] + d[1] + d[2];
        let odd = order % 2 == 1;
        let ipow = if order == 1 {
            Complex::new(0.0, 1.0)
        } else {
            Complex::new(-1.0, 0.0)
        };
        let mut coeffs = vec![Complex::new(0.0, 0.0); grid.len()];
        for (idx, c) in coeffs.iter_mut().enumerate() {
            let m = grid.mode_of(idx);
            if odd && grid.is_nyquist(m) {
                continue;
            }
            let w = grid.wavenumber(m);
            let mono = w.xi.powi(d[0] as i32) * w.eta.powi(d[1] as i32) * w.zeta.powi(d[2] as i32);
            *c = ipow * (mono * ghat[idx]);
        }
        let field = SpectralField::new(*grid, coeffs)?;
        let values = fft.inverse_complex(&field);
        let mut l1 = 0.0;
        let mut shell = 0.0;
        let mut weighted_sq = 0.0;
        for (idx, v) in values.iter().enumerate() {
            let f = v.re.abs();
            l1 += f;
            let [ix, iy, iz] = grid.unflat(idx);
            if ix == n[0] / 2 || iy == n[1] / 2 || iz == n[2] / 2 {
                shell += f;
            }
            let p = signed_pos[idx];
            let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
            let g = (1.0 + r2) * f;
            weighted_sq += g * g;
        }
        let value = l1 * dv;
        let shell_fraction = shell / l1;
        if !(shell_fraction < tol.shell) {
            return Err(EstimateError::GridTooSmall(format!(
                "outer shell carries {shell_fraction:.3e} of the L1 norm of derivative {d:?}"
            )));
        }
        let fourier_h2 = (weighted_sq * dv).sqrt() / two_pi_32;
        out.push(KernelNorm {
            deriv: d,
            value,
            shell_fraction,
            band_edge,
            sobolev_ratio: value / fourier_h2,
            sobolev_bound,
        });
    }
    Ok(out)
}

/// `‖∂^d G₂(·, t)‖_{L¹(ℝ³)}` approximated on `grid`.
pub fn kernel_l1_norm(
    deriv: [u32; 3],
    t: f64,
    flow: &FlowParams<f64>,
    grid: &GridSpec<f64>,
    tol: &KernelTolerance,
    q: &QuadratureConfig<f64>,
) -> Result<KernelNorm, EstimateError> {
    Ok(kernel_l1_norms(&[deriv], t, flow, grid, tol, q)?.remove(0))
}

/// `Ĝ₂(Ξ, t)` on every mode; filled once per `±Ξ` pair and `ζ` mirror.
fn synthesize_green_hat(
    grid: &GridSpec<f64>,
    t: f64,
    flow: &FlowParams<f64>,
    q: &QuadratureConfig<f64>,
) -> Result<Vec<f64>, EstimateError> {
    let mut out = vec![f64::NAN; grid.len()];
    for idx in 0..grid.len() {
        if !out[idx].is_nan() {
            continue;
        }
        let m = grid.mode_of(idx);
        let g = green_hat(grid.wavenumber(m), t, flow, ShearSign::Plus, q)?;
        let mirrors = [
            m,
            crate::spectral::Mode::new(-m.kx, -m.ky, -m.kz),
            crate::spectral::Mode::new(m.kx, m.ky, -m.kz),
            crate::spectral::Mode::new(-m.kx, -m.ky, m.kz),
        ];
        for mm in mirrors {
            if let Some(j) = grid.index_of(mm) {
                out[j] = g;
            }
        }
    }
    Ok(out)
}

fn grid_edge_max(grid: &GridSpec<f64>, ghat: &[f64]) -> f64 {
    let n = grid.n();
    let mut best = 0.0f64;
    for (idx, g) in ghat.iter().enumerate() {
        let m = grid.mode_of(idx);
        let k = [m.kx, m.ky, m.kz];
        let edge = (0..3).any(|a| k[a].unsigned_abs() as usize + 1 >= n[a] / 2);
        if edge {
            best = best.max(*g);
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Fits and the suite

/// Log–log least squares on `(parameter, value)` pairs.
pub fn fit_exponent(samples: &[(f64, f64)]) -> Result<DecayFit, EstimateError> {
    Ok(fit_power_law(samples)?)
}

fn log_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CheckFamily {
    Inequalities,
    WeightedNorms,
    KernelNorms,
}

impl CheckFamily {
    pub fn name(self) -> &'static str {
        match self {
            CheckFamily::Inequalities => "inequalities",
            CheckFamily::WeightedNorms => "weighted_norms",
            CheckFamily::KernelNorms => "kernel_norms",
        }
    }
}

impl FromStr for CheckFamily {
    type Err = EstimateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [CheckFamily::Inequalities, CheckFamily::WeightedNorms, CheckFamily::KernelNorms]
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| EstimateError::InvalidParameter(format!("unknown check family '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub checks: Vec<CheckFamily>,
    pub alphas: Vec<f64>,
    pub seed: u64,
    pub samples: usize,
    pub lower_exponents: Vec<f64>,
    pub upper_exponents: Vec<f64>,
    pub weights: Vec<[u32; 3]>,
    pub weighted_range: (f64, f64),
    pub weighted_points: usize,
    pub exponent_tol: f64,
    /// Grid for the unsheared runs.
    pub kernel_n: [usize; 3],
    pub kernel_box: [f64; 3],
    /// Grid for the shear sweep. Under shear `Ĝ₂` has a ridge along
    /// `η ≈ -Atξ/2` that is wider in `η`, and the kernel tilts in `x`.
    pub kernel_shear_n: [usize; 3],
    pub kernel_shear_box: [f64; 3],
    pub kernel_points: usize,
    pub kernel_t_range: (f64, f64),
    pub kernel_shear_range: (f64, f64),
    pub kernel_first: Vec<[u32; 3]>,
    pub kernel_second: Vec<[u32; 3]>,
    pub kernel_shear_tol: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            checks: vec![
                CheckFamily::Inequalities,
                CheckFamily::WeightedNorms,
                CheckFamily::KernelNorms,
            ],
            alphas: vec![1.25, 1.5, 2.0],
            seed: 20240601,
            samples: 100_000,
            lower_exponents: vec![0.5, 1.0, 1.5, 2.0],
            upper_exponents: vec![-0.25, -0.5, -0.75],
            weights: vec![[0, 0, 0], [1, 0, 0], [0, 1, 0]],
            weighted_range: (1e2, 1e4),
            weighted_points: 5,
            exponent_tol: 0.05,
            kernel_n: [128, 128, 128],
            kernel_box: [32.0, 32.0, 32.0],
            kernel_shear_n: [512, 256, 128],
            kernel_shear_box: [32.0, 40.0, 32.0],
            kernel_points: 5,
            kernel_t_range: (1e-3, 1e-1),
            kernel_shear_range: (10.0, 1e3),
            kernel_first: vec![[1, 0, 0], [0, 1, 0], [0, 0, 1]],
            kernel_second: vec![[2, 0, 0], [0, 1, 1]],
            kernel_shear_tol: 0.1,
        }
    }
}

/// How a measured number is judged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    Within { expected: f64, tol: f64 },
    RelativeWithin { expected: f64, rel: f64 },
    FinitePositive,
    AtMost { bound: f64 },
}

impl Criterion {
    fn judge(&self, v: f64) -> bool {
        match *self {
            Criterion::Within { expected, tol } => (v - expected).abs() <= tol,
            Criterion::RelativeWithin { expected, rel } => (v - expected).abs() <= rel * expected.abs(),
            Criterion::FinitePositive => v.is_finite() && v > 0.0,
            Criterion::AtMost { bound } => v.is_finite() && v <= bound,
        }
    }

    fn expected(&self) -> f64 {
        match *self {
            Criterion::Within { expected, .. } | Criterion::RelativeWithin { expected, .. } => expected,
            Criterion::AtMost { bound } => bound,
            Criterion::FinitePositive => f64::NAN,
        }
    }

    fn tolerance(&self) -> f64 {
        match *self {
            Criterion::Within { tol, .. } => tol,
            Criterion::RelativeWithin { rel, .. } => rel,
            _ => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    pub family: CheckFamily,
    pub name: String,
    pub params: String,
    pub measured: f64,
    pub criterion: Criterion,
    pub fit: Option<DecayFit>,
    pub detail: String,
    pub pass: bool,
}

impl CheckRecord {
    fn new(family: CheckFamily, name: &str, params: String, measured: f64, criterion: Criterion) -> Self {
        Self {
            family,
            name: name.to_string(),
            params,
            measured,
            criterion,
            fit: None,
            detail: String::new(),
            pass: criterion.judge(measured),
        }
    }

    fn failed(family: CheckFamily, name: &str, params: String, criterion: Criterion, err: &EstimateError) -> Self {
        Self {
            family,
            name: name.to_string(),
            params,
            measured: f64::NAN,
            criterion,
            fit: None,
            detail: err.to_string(),
            pass: false,
        }
    }

    fn from_fit(
        family: CheckFamily,
        name: &str,
        params: String,
        fit: Result<DecayFit, EstimateError>,
        expected: f64,
        tol: f64,
    ) -> Self {
        let crit = Criterion::Within { expected, tol };
        match fit {
            Ok(f) => {
                let mut r = Self::new(family, name, params, f.slope, crit);
                r.fit = Some(f);
                r
            }
            Err(e) => Self::failed(family, name, params, crit, &e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimateReport {
    pub records: Vec<CheckRecord>,
}

impl EstimateReport {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.records.iter().filter(|r| !r.pass)
    }

    pub fn exponent_fits(&self) -> usize {
        self.records.iter().filter(|r| r.fit.is_some()).count()
    }

    pub const CSV_HEADER: &'static str =
        "family,name,params,measured,expected,tolerance,window_lo,window_hi,r2,pass,detail";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let (lo, hi, r2) = match r.fit {
                Some(f) => (f.window.0, f.window.1, f.r2),
                None => (f64::NAN, f64::NAN, f64::NAN),
            };
            let _ = writeln!(
                s,
                "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{},{}",
                r.family.name(),
                r.name,
                csv_field(&r.params),
                r.measured,
                r.criterion.expected(),
                r.criterion.tolerance(),
                lo,
                hi,
                r2,
                if r.pass { "pass" } else { "fail" },
                csv_field(&r.detail)
            );
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<15} {:<22} {:<34} {:>12} {:>12} {:>9} {:>8}  verdict",
            "family", "check", "parameters", "measured", "expected", "tol", "r2"
        );
        for r in &self.records {
            let r2 = r.fit.map(|f| format!("{:.5}", f.r2)).unwrap_or_else(|| "-".into());
            let fmt_num = |v: f64| if v.is_nan() { "-".to_string() } else { format!("{v:.6}") };
            let _ = writeln!(
                s,
                "{:<15} {:<22} {:<34} {:>12} {:>12} {:>9} {:>8}  {}",
                r.family.name(),
                r.name,
                r.params,
                fmt_num(r.measured),
                fmt_num(r.criterion.expected()),
                fmt_num(r.criterion.tolerance()),
                r2,
                if r.pass { "pass" } else { "FAIL" }
            );
            if !r.detail.is_empty() {
                let _ = writeln!(s, "    {}", r.detail);
            }
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn run_estimate_suite(cfg: &SuiteConfig) -> EstimateReport {
    let mut report = EstimateReport::default();
    let q = QuadratureConfig::default();
    for fam in &cfg.checks {
        match fam {
            CheckFamily::Inequalities => inequality_checks(cfg, &mut report),
            CheckFamily::WeightedNorms => weighted_checks(cfg, &q, &mut report),
            CheckFamily::KernelNorms => kernel_checks(cfg, &q, &mut report),
        }
    }
    report
}

fn witness_text(c: &EmpiricalConstant) -> String {
    let w = c.witness;
    format!(
        "witness xi={:e} eta={:e} A={:e} t={:e}; seed {}; {} ratios",
        w.xi, w.eta, w.a, w.t, c.seed, c.sample_count
    )
}

fn inequality_checks(cfg: &SuiteConfig, report: &mut EstimateReport) {
    let fam = CheckFamily::Inequalities;
    let mut runs: Vec<(Inequality, f64)> = Vec::new();
    runs.extend(cfg.lower_exponents.iter().map(|&g| (Inequality::ShearLower, g)));
    runs.extend(cfg.upper_exponents.iter().map(|&b| (Inequality::ShearUpper, b)));
    runs.push((Inequality::FormFirst, 0.0));
    runs.push((Inequality::FormSecond, 0.0));
    for (which, e) in runs {
        let params = match which {
            Inequality::ShearLower | Inequality::ShearUpper => format!("exponent={e}"),
            _ => String::from("-"),
        };
        match sample_inequality(which, e, cfg.samples, cfg.seed) {
            Ok(c) => {
                let mut r = CheckRecord::new(fam, which.name(), params, c.worst_ratio, Criterion::FinitePositive);
                r.detail = witness_text(&c);
                report.records.push(r);
            }
            Err(err) => report
                .records
                .push(CheckRecord::failed(fam, which.name(), params, Criterion::FinitePositive, &err)),
        }
    }
    let spots = [
        (Inequality::ShearLower, 1.0, 0.5, "shear_lower_eta0"),
        (Inequality::ShearUpper, -0.5, 2.0, "shear_upper_eta0"),
    ];
    for (which, e, expected, name) in spots {
        let params = format!("exponent={e} eta=0");
        let crit = Criterion::Within { expected, tol: 1e-6 };
        match sample_inequality_on(which, e, cfg.samples, cfg.seed, SampleDomain::EtaZero) {
            Ok(c) => {
                let mut r = CheckRecord::new(fam, name, params, c.worst_ratio, crit);
                r.detail = witness_text(&c);
                report.records.push(r);
            }
            Err(err) => report.records.push(CheckRecord::failed(fam, name, params, crit, &err)),
        }
    }
}

fn weighted_checks(cfg: &SuiteConfig, q: &QuadratureConfig<f64>, report: &mut EstimateReport) {
    let fam = CheckFamily::WeightedNorms;
    let trunc = Truncation::default();
    let grid = log_points(cfg.weighted_range.0, cfg.weighted_range.1, cfg.weighted_points);
    let requests: Vec<([u32; 3], NormKind)> = cfg
        .weights
        .iter()
        .flat_map(|&k| [(k, NormKind::L1), (k, NormKind::L2)])
        .collect();
    for &alpha in &cfg.alphas {
        // With A = 1 the t-sweep has a = t; with t = 1 the A-sweep has a = A.
        // Both sweeps therefore share one table per grid point.
        let tables: Vec<Result<ScaledSymbolTable, EstimateError>> = grid
            .iter()
            .map(|&a| converged_table(alpha, a, &requests, &trunc, q))
            .collect();
        for &(k, norm) in &requests {
            let kk = (k[0] + k[1] + k[2]) as f64;
            let k1 = k[0] as f64;
            let (t_expect, a_expect) = match norm {
                NormKind::L1 => (-(3.0 + kk) / alpha - (k1 + 1.0), -(k1 + 1.0)),
                NormKind::L2 => (-(3.0 + 2.0 * kk) / (2.0 * alpha) - (k1 + 0.5), -(k1 + 0.5)),
            };
            let label = match norm {
                NormKind::L1 => "weighted_l1",
                NormKind::L2 => "weighted_l2",
            };
            for sweep in ["t", "A"] {
                let params = format!("alpha={alpha} k=({},{},{}) sweep={sweep}", k[0], k[1], k[2]);
                let pts: Result<Vec<(f64, f64)>, EstimateError> = grid
                    .iter()
                    .zip(&tables)
                    .map(|(&x, tab)| {
                        let tab = tab.as_ref().map_err(Clone::clone)?;
                        let t = if sweep == "t" { x } else { 1.0 };
                        Ok((x, tab.norm(k, t, norm).value))
                    })
                    .collect();
                let expected = if sweep == "t" { t_expect } else { a_expect };
                let fit = pts.and_then(|p| fit_exponent(&p));
                let name = format!("{label}_{}_slope", sweep.to_lowercase());
                report
                    .records
                    .push(CheckRecord::from_fit(fam, &name, params, fit, expected, cfg.exponent_tol));
            }
        }
    }
    if cfg.alphas.contains(&2.0) {
        let flow = FlowParams::new(0.0, 2.0).expect("valid flow");
        let params = String::from("alpha=2 A=0 t=1 k=(0,0,0)");
        let crit = Criterion::RelativeWithin {
            expected: PI.powf(1.5),
            rel: 1e-8,
        };
        match weighted_spectral_norm([0, 0, 0], 1.0, &flow, NormKind::L1, &trunc, q) {
            Ok(v) => report
                .records
                .push(CheckRecord::new(fam, "weighted_l1_gaussian", params, v.value, crit)),
            Err(e) => report
                .records
                .push(CheckRecord::failed(fam, "weighted_l1_gaussian", params, crit, &e)),
        }
    }
}

fn kernel_series(
    derivs: &[[u32; 3]],
    alpha: f64,
    params: &[(f64, f64)],
    (n, factor): ([usize; 3], [f64; 3]),
    q: &QuadratureConfig<f64>,
) -> Result<Vec<Vec<KernelNorm>>, EstimateError> {
    let tol = KernelTolerance::default();
    params
        .iter()
        .map(|&(a, t)| {
            let flow = FlowParams::new(a, alpha)?;
            let grid = kernel_grid(t, &flow, n, factor)?;
            kernel_l1_norms(derivs, t, &flow, &grid, &tol, q)
        })
        .collect()
}

fn push_kernel_fits(
    report: &mut EstimateReport,
    name: &str,
    alpha: f64,
    derivs: &[[u32; 3]],
    xs: &[f64],
    series: &Result<Vec<Vec<KernelNorm>>, EstimateError>,
    expected: &dyn Fn([u32; 3]) -> f64,
    tol: f64,
) {
    let fam = CheckFamily::KernelNorms;
    for (j, &d) in derivs.iter().enumerate() {
        let params = format!("alpha={alpha} d=({},{},{})", d[0], d[1], d[2]);
        let fit = match series {
            Ok(s) => {
                let pts: Vec<(f64, f64)> = xs.iter().zip(s).map(|(&x, v)| (x, v[j].value)).collect();
                fit_exponent(&pts)
            }
            Err(e) => Err(e.clone()),
        };
        let mut rec = CheckRecord::from_fit(fam, name, params, fit, expected(d), tol);
        if let Ok(s) = series {
            let worst = s.iter().map(|v| v[j].sobolev_ratio / v[j].sobolev_bound).fold(0.0, f64::max);
            let shell = s.iter().map(|v| v[j].shell_fraction).fold(0.0, f64::max);
            rec.detail = format!("max shell {shell:.2e}; max L1/(C*H2) {worst:.3}");
            if !(worst <= 1.0) {
                rec.pass = false;
            }
        }
        report.records.push(rec);
    }
}

fn kernel_checks(cfg: &SuiteConfig, q: &QuadratureConfig<f64>, report: &mut EstimateReport) {
    let fam = CheckFamily::KernelNorms;
    let heat = (cfg.kernel_n, cfg.kernel_box);
    let sheared = (cfg.kernel_shear_n, cfg.kernel_shear_box);
    if cfg.alphas.contains(&2.0) {
        for t in [0.25f64, 1.0, 4.0] {
            let params = format!("alpha=2 A=0 t={t} d=(1,0,0)");
            let crit = Criterion::RelativeWithin {
                expected: 8.0 * PI.powf(2.5) / t.sqrt(),
                rel: 5e-3,
            };
            match kernel_series(&[[1, 0, 0]], 2.0, &[(0.0, t)], heat, q) {
                Ok(v) => report
                    .records
                    .push(CheckRecord::new(fam, "kernel_l1_gaussian", params, v[0][0].value, crit)),
                Err(e) => report
                    .records
                    .push(CheckRecord::failed(fam, "kernel_l1_gaussian", params, crit, &e)),
            }
        }
    }
    let ts = log_points(cfg.kernel_t_range.0, cfg.kernel_t_range.1, cfg.kernel_points);
    let shears = log_points(cfg.kernel_shear_range.0, cfg.kernel_shear_range.1, cfg.kernel_points);
    for &alpha in &cfg.alphas {
        if alpha < 2.0 {
            let mut derivs = cfg.kernel_first.clone();
            derivs.extend_from_slice(&cfg.kernel_second);
            let pts: Vec<(f64, f64)> = ts.iter().map(|&t| (0.0, t)).collect();
            let series = kernel_series(&derivs, alpha, &pts, heat, q);
            push_kernel_fits(
                report,
                "kernel_l1_t_slope",
                alpha,
                &derivs,
                &ts,
                &series,
                &|d| -((d[0] + d[1] + d[2]) as f64) / alpha,
                cfg.exponent_tol,
            );
        }
        let pts: Vec<(f64, f64)> = shears.iter().map(|&a| (a, 1.0)).collect();
        let series = kernel_series(&cfg.kernel_first, alpha, &pts, sheared, q);
        push_kernel_fits(
            report,
            "kernel_l1_a_slope",
            alpha,
            &cfg.kernel_first,
            &shears,
            &series,
            &|d| 0.0 - d[0] as f64,
            cfg.kernel_shear_tol,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shear_integral_matches_midpoint_sum() {
        let cases = [
            (1.0, 2.0, 3.0, 0.5, 1.0),
            (-0.7, 2.0, 1.5, 4.0, 0.5),
            (0.3, -1.0, 2.0, 1.0, 2.0),
            (2.0, 0.0, 1.0, 1.0, 1.5),
            (1.0, -3.0, 1.0, 3.0, 0.0),
        ];
        for (xi, eta, a, t, g) in cases {
            let n = 200_000;
            let h = t / n as f64;
            let sum: f64 = (0..n)
                .map(|i| {
                    let s = (i as f64 + 0.5) * h;
                    (eta + a * s * xi).abs().powf(g) * h
                })
                .sum();
            let exact = shear_power_integral(xi, eta, a, t, g);
            assert!((exact - sum).abs() <= 1e-6 * exact.abs().max(1.0), "{exact} vs {sum}");
        }
    }

    #[test]
    fn shear_integral_negative_exponent_at_root() {
        // η = 0: ∫₀¹ (s)^{-1/2} ds = 2.
        let v = shear_power_integral(1.0, 0.0, 1.0, 1.0, -0.5);
        assert!((v - 2.0).abs() < 1e-14);
        // η = -Atξ puts the root at the right end.
        let v = shear_power_integral(1.0, -1.0, 1.0, 1.0, -0.5);
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn eta_zero_spot_values() {
        let c = sample_inequality_on(Inequality::ShearLower, 1.0, 10_000, 3, SampleDomain::EtaZero).unwrap();
        assert!((c.worst_ratio - 0.5).abs() < 1e-12);
        let c = sample_inequality_on(Inequality::ShearUpper, -0.5, 10_000, 3, SampleDomain::EtaZero).unwrap();
        assert!((c.worst_ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn form_ratio_spot_value() {
        let s = Sample {
            xi: 1.0,
            eta: 10.0,
            a: 10.0,
            t: 1.0,
        };
        let r = inequality_ratio(Inequality::FormFirst, 0.0, s).unwrap();
        assert!((r - (1.0 + 100.0 / 121.0) / 401.0).abs() < 1e-15);
        assert!((r - 0.00455).abs() < 1e-5);
    }

    #[test]
    fn sampling_is_seeded() {
        let a = sample_inequality(Inequality::FormSecond, 0.0, 10_000, 9).unwrap();
        let b = sample_inequality(Inequality::FormSecond, 0.0, 10_000, 9).unwrap();
        assert_eq!(a, b);
        assert!(sample_inequality(Inequality::FormSecond, 0.0, 9_999, 9).is_err());
        assert!(sample_inequality(Inequality::ShearUpper, -1.0, 10_000, 9).is_err());
        assert!(sample_inequality(Inequality::ShearLower, -0.1, 10_000, 9).is_err());
    }

    #[test]
    fn mixing_constant_at_one() {
        // α = 1: ∫|r+τ| = (r²+(1+r)²)/2 on [-1,0]; the ratio bottoms out
        // near 1/6 well inside the interval.
        let c = shear_mixing_constant(1.0);
        assert!(c > 0.15 && c < 0.2, "{c}");
    }

    #[test]
    fn gaussian_weighted_norms() {
        let q = QuadratureConfig::default();
        let tr = Truncation::default();
        for a in [0.0f64, 3.0, 50.0] {
            let flow = FlowParams::new(a, 2.0).unwrap();
            let det = 1.0 + a * a / 12.0;
            let base = PI.powf(1.5) / det.sqrt();
            let v = weighted_spectral_norm([0, 0, 0], 1.0, &flow, NormKind::L1, &tr, &q).unwrap();
            assert!((v.value / base - 1.0).abs() < 1e-9, "a={a}: {}", v.value / base);
            assert!(v.tail <= 1e-8 * v.value);
            let sx = (1.0 / det / 2.0).sqrt();
            let v = weighted_spectral_norm([1, 0, 0], 1.0, &flow, NormKind::L1, &tr, &q).unwrap();
            let want = base * sx * (2.0 / PI).sqrt();
            assert!((v.value / want - 1.0).abs() < 1e-8, "a={a}: {}", v.value / want);
            let sy = ((1.0 + a * a / 3.0) / det / 2.0).sqrt();
            let v = weighted_spectral_norm([0, 1, 0], 1.0, &flow, NormKind::L1, &tr, &q).unwrap();
            let want = base * sy * (2.0 / PI).sqrt();
            assert!((v.value / want - 1.0).abs() < 1e-8, "a={a}: {}", v.value / want);
            // L²: ∫ξ² e^{-2XᵀMX} = π^{3/2}/√(8 det) · (M⁻¹)_xx/4.
            let v = weighted_spectral_norm([1, 0, 0], 1.0, &flow, NormKind::L2, &tr, &q).unwrap();
            let want = (PI.powf(1.5) / (8.0 * det).sqrt() / det / 4.0).sqrt();
            assert!((v.value / want - 1.0).abs() < 1e-8, "a={a}: {}", v.value / want);
        }
    }

    #[test]
    fn heat_rescaling_is_exact() {
        let q = QuadratureConfig::default();
        let tr = Truncation::default();
        let flow = FlowParams::new(0.0, 2.0).unwrap();
        let v1 = weighted_spectral_norm([0, 0, 0], 1.0, &flow, NormKind::L1, &tr, &q).unwrap().value;
        let v4 = weighted_spectral_norm([0, 0, 0], 4.0, &flow, NormKind::L1, &tr, &q).unwrap().value;
        assert!((v4 / v1 - 0.125).abs() < 1e-12);
    }

    #[test]
    fn fractional_weighted_norm_matches_radial_integral() {
        // A = 0: ∫e^{-|Ξ|^α} dΞ = 4π Γ(3/α)/α.
        let q = QuadratureConfig::default();
        let flow = FlowParams::new(0.0, 1.5).unwrap();
        let v = weighted_spectral_norm([0, 0, 0], 1.0, &flow, NormKind::L1, &Truncation::default(), &q).unwrap();
        let want = 4.0 * PI * gamma(3.0 / 1.5) / 1.5;
        assert!((v.value / want - 1.0).abs() < 1e-7, "{}", v.value / want);
    }

    #[test]
    fn gaussian_kernel_derivative_norm() {
        let q = QuadratureConfig::default();
        let flow = FlowParams::new(0.0, 2.0).unwrap();
        for t in [0.25, 1.0] {
            let grid = kernel_grid(t, &flow, [96, 96, 96], [16.0; 3]).unwrap();
            let k = kernel_l1_norm([1, 0, 0], t, &flow, &grid, &KernelTolerance::default(), &q).unwrap();
            let want = 8.0 * PI.powf(2.5) / t.sqrt();
            assert!((k.value / want - 1.0).abs() < 5e-3, "{}", k.value / want);
            assert!(k.sobolev_ratio <= k.sobolev_bound);
        }
    }

    #[test]
    fn kernel_grid_checks() {
        let q = QuadratureConfig::default();
        let flow = FlowParams::new(0.0, 2.0).unwrap();
        let small = kernel_grid(1.0, &flow, [32, 32, 32], [8.0; 3]).unwrap();
        let err = kernel_l1_norm([1, 0, 0], 1.0, &flow, &small, &KernelTolerance::default(), &q).unwrap_err();
        assert!(matches!(err, EstimateError::GridTooSmall(_)));
        // Wide enough box but too coarse a band.
        let coarse = kernel_grid(1.0, &flow, [16, 16, 16], [40.0; 3]).unwrap();
        let err = kernel_l1_norm([1, 0, 0], 1.0, &flow, &coarse, &KernelTolerance::default(), &q).unwrap_err();
        assert!(matches!(err, EstimateError::GridTooSmall(_)));
        let ok = kernel_grid(1.0, &flow, [64, 64, 64], [24.0; 3]).unwrap();
        assert!(kernel_l1_norm([0, 0, 0], 1.0, &flow, &ok, &KernelTolerance::default(), &q).is_err());
    }

    #[test]
    fn fit_exponent_contract() {
        let pts: Vec<(f64, f64)> = (1..=8).map(|i| (i as f64, 3.0 * (i as f64).powf(-1.25))).collect();
        assert!((fit_exponent(&pts).unwrap().slope + 1.25).abs() < 1e-12);
        let flat: Vec<(f64, f64)> = (1..=8).map(|i| (i as f64, 2.0)).collect();
        assert!(fit_exponent(&flat).unwrap().slope.abs() < 1e-15);
    }

    #[test]
    fn empty_suite_is_empty() {
        let cfg = SuiteConfig {
            checks: vec![],
            ..SuiteConfig::default()
        };
        let r = run_estimate_suite(&cfg);
        assert!(r.is_empty());
        assert_eq!(r.to_csv().lines().count(), 1);
    }
}
