//! Exact linear evolution in the shear-following frame.
//!
//! Coefficients are stored against the wavenumber a mode had at the frame
//! reference time `t_ref`. At time `t` the frame mode `(ξ, η, ζ)` represents
//! the laboratory wavenumber `(ξ, η - A(t - t_ref)ξ, ζ)`, so the advection
//! term disappears and the fractional dissipation becomes the per-mode factor
//! `exp(-ℍ₋(mode; t0 - t_ref, t1 - t_ref))`.
//!
//! Whenever `A(t - t_ref)·2π/L_x` is a whole number `m` of `2π/L_y` the frame
//! lattice coincides with the laboratory lattice shifted by `m·k_x` in `k_y`,
//! and [`remap`] re-indexes the coefficients onto a fresh frame.

use std::collections::HashMap;

use num_complex::Complex;
use thiserror::Error;

use crate::quadrature::PanelRule;
use crate::scalar::{lit, Real};
use crate::spectral::{Field, GridSpec, Mode, SpectralError, SpectralField};
use crate::symbol::{
    accumulated_symbol, accumulated_symbol_alpha2, integrate_symbol_with, FlowParams, FreqPoint,
    QuadratureConfig, ShearSign, SymbolError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PropagatorError {
    #[error(transparent)]
    Symbol(#[from] SymbolError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("invalid time: {0}")]
    InvalidTime(String),
    #[error("remap requested off schedule: shift ratio {ratio} is not an integer")]
    RemapOffSchedule { ratio: f64 },
}

/// Bookkeeping of the moving frame: its reference time and the flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShearFrame<T> {
    t_ref: T,
    flow: FlowParams<T>,
}

impl<T: Real> ShearFrame<T> {
    pub fn new(t_ref: T, flow: FlowParams<T>) -> Result<Self, PropagatorError> {
        if !t_ref.is_finite() {
            return Err(PropagatorError::InvalidTime(format!("t_ref must be finite, got {t_ref}")));
        }
        Ok(Self { t_ref, flow })
    }

    pub fn t_ref(&self) -> T {
        self.t_ref
    }

    pub fn flow(&self) -> &FlowParams<T> {
        &self.flow
    }

    /// Accumulated shear `A·(t - t_ref)`.
    pub fn shift_at(&self, t: T) -> T {
        self.flow.shear() * (t - self.t_ref)
    }

    /// Time between exact lattice alignments, `L_x/(A·L_y)`; `None` without shear.
    pub fn remap_period(&self, grid: &GridSpec<T>) -> Option<T> {
        let a = self.flow.shear();
        if a == T::zero() {
            None
        } else {
            let [lx, ly, _] = grid.box_len();
            Some(lx / (a * ly))
        }
    }

    pub fn next_remap_time(&self, grid: &GridSpec<T>) -> Option<T> {
        self.remap_period(grid).map(|p| self.t_ref + p)
    }

    /// Laboratory wavenumber of frame mode `m` at time `t`.
    #[inline]
    pub fn effective_wavenumber(&self, grid: &GridSpec<T>, m: Mode, t: T) -> FreqPoint<T> {
        let k = grid.wavenumber(m);
        FreqPoint::new(k.xi, k.eta - self.shift_at(t) * k.xi, k.zeta)
    }

    /// Whether frame mode `m` can be carried through a sheared step without
    /// breaking conjugate symmetry. Nyquist planes in `x` and `y` have no
    /// partner once `η` drifts, so they are projected out when `A > 0`.
    #[inline]
    pub fn carries(&self, grid: &GridSpec<T>, m: Mode) -> bool {
        if self.flow.shear() == T::zero() {
            return true;
        }
        let [nx, ny, _] = grid.n();
        m.kx != -((nx / 2) as i64) && m.ky != -((ny / 2) as i64)
    }
}

/// Per-mode laboratory wavenumbers of the whole lattice at time `t`.
pub fn effective_wavenumbers<T: Real>(grid: &GridSpec<T>, frame: &ShearFrame<T>, t: T) -> Vec<FreqPoint<T>> {
    (0..grid.len()).map(|i| frame.effective_wavenumber(grid, grid.mode_of(i), t)).collect()
}

/// Density coefficients in the frame, with the current time.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState<T> {
    frame: ShearFrame<T>,
    n_hat: SpectralField<T>,
    t: T,
}

impl<T: Real> SimState<T> {
    pub fn new(frame: ShearFrame<T>, n_hat: SpectralField<T>, t: T) -> Result<Self, PropagatorError> {
        if !(t.is_finite() && t >= frame.t_ref) {
            return Err(PropagatorError::InvalidTime(format!(
                "state time {t} precedes frame reference {}",
                frame.t_ref
            )));
        }
        if !n_hat.is_finite() {
            return Err(PropagatorError::Spectral(SpectralError::NonFinite));
        }
        Ok(Self { frame, n_hat, t })
    }

    /// Starts a run at time `t` from laboratory samples, with `t_ref = t`.
    pub fn from_field(field: &Field<T>, flow: FlowParams<T>, t: T) -> Result<Self, PropagatorError> {
        Self::new(ShearFrame::new(t, flow)?, field.to_spectral(), t)
    }

    pub fn frame(&self) -> &ShearFrame<T> {
        &self.frame
    }

    pub fn n_hat(&self) -> &SpectralField<T> {
        &self.n_hat
    }

    pub fn t(&self) -> T {
        self.t
    }

    pub fn grid(&self) -> &GridSpec<T> {
        self.n_hat.grid()
    }

    pub(crate) fn with_coeffs(&self, n_hat: SpectralField<T>, t: T) -> Self {
        Self {
            frame: self.frame,
            n_hat,
            t,
        }
    }

    /// Samples of the density on the frame lattice.
    ///
    /// Point `(x', y, z)` of the lattice is the laboratory point
    /// `(x' + A(t - t_ref)y, y, z)`. The shear map preserves volume, so
    /// every `Lᵖ` norm and the mass can be read off these samples directly.
    pub fn frame_samples(&self) -> Result<Field<T>, PropagatorError> {
        Ok(self.n_hat.to_physical()?)
    }
}

/// Per-mode factor `exp(-ℍ)` for evolving a frame from `t0` to `t1`.
///
/// `ℍ` is even in the mode, so each conjugate pair is evaluated once.
pub fn propagator_factors<T: Real>(
    grid: &GridSpec<T>,
    frame: &ShearFrame<T>,
    t0: T,
    t1: T,
    q: &QuadratureConfig<T>,
) -> Result<Vec<T>, PropagatorError> {
    if !(t1 >= t0 && t0 >= frame.t_ref) {
        return Err(PropagatorError::InvalidTime(format!(
            "propagation window [{t0}, {t1}] invalid for frame reference {}",
            frame.t_ref
        )));
    }
    let flow = *frame.flow();
    let s0 = t0 - frame.t_ref;
    let s1 = t1 - frame.t_ref;
    let rule = PanelRule::<T>::new();
    let [nx, ny, nz] = grid.n();
    let mut out = vec![T::zero(); grid.len()];
    let mut done = vec![false; grid.len()];
    // ℍ is even in the mode and depends on ζ only through ζ², so one
    // evaluation serves up to four entries.
    for ix in 0..nx {
        let jx = (nx - ix) % nx;
        for iy in 0..ny {
            let jy = (ny - iy) % ny;
            for iz in 0..=nz / 2 {
                let i = grid.flat(ix, iy, iz);
                if done[i] {
                    continue;
                }
                let m = grid.mode_of(i);
                let f = if !frame.carries(grid, m) {
                    T::zero()
                } else if t0 == t1 || m.is_zero() {
                    T::one()
                } else {
                    let h = symbol(&rule, grid.wavenumber(m), s0, s1, &flow, q)?;
                    (-h).exp()
                };
                let kz = (nz - iz) % nz;
                for idx in [
                    i,
                    grid.flat(ix, iy, kz),
                    grid.flat(jx, jy, iz),
                    grid.flat(jx, jy, kz),
                ] {
                    out[idx] = f;
                    done[idx] = true;
                }
            }
        }
    }
    Ok(out)
}

#[inline]
fn symbol<T: Real>(
    rule: &PanelRule<T>,
    p: FreqPoint<T>,
    s0: T,
    s1: T,
    flow: &FlowParams<T>,
    q: &QuadratureConfig<T>,
) -> Result<T, SymbolError> {
    if flow.shear() * p.xi == T::zero() {
        accumulated_symbol(p, s0, s1, flow, ShearSign::Minus, q)
    } else if flow.is_classical() {
        accumulated_symbol_alpha2(p, s0, s1, flow, ShearSign::Minus)
    } else {
        integrate_symbol_with(rule, p, s0, s1, flow, ShearSign::Minus, q)
    }
}

pub(crate) fn apply_factors<T: Real>(n_hat: &SpectralField<T>, factors: &[T]) -> SpectralField<T> {
    let mut out = n_hat.clone();
    for (c, &f) in out.coeffs_mut().iter_mut().zip(factors) {
        *c = *c * f;
    }
    out
}

/// Evolves the linear part exactly from `state.t` to `t1`.
pub fn apply_propagator<T: Real>(
    state: &SimState<T>,
    t1: T,
    q: &QuadratureConfig<T>,
) -> Result<SimState<T>, PropagatorError> {
    if !(t1 >= state.t) {
        return Err(PropagatorError::InvalidTime(format!("target {t1} precedes state time {}", state.t)));
    }
    if t1 == state.t {
        return Ok(state.clone());
    }
    let factors = propagator_factors(state.grid(), &state.frame, state.t, t1, q)?;
    let zero = state.n_hat.zero_mode();
    let mut n_hat = apply_factors(&state.n_hat, &factors);
    n_hat.coeffs_mut()[0] = zero;
    Ok(state.with_coeffs(n_hat, t1))
}

/// Result of re-indexing a state onto a fresh frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Remapped<T> {
    pub state: SimState<T>,
    /// `Σ|n|²ΔV` carried by the modes that left the resolved band.
    pub loss: T,
    /// `Σ|n|²ΔV` before the remap.
    pub energy_before: T,
}

/// Moves the frame reference to `state.t`, re-indexing `k_y → k_y - m·k_x`.
///
/// Requires the accumulated shift to be an exact lattice step. Modes whose
/// new `|k_y|` reaches the Nyquist index are dropped (no wrap-around) and
/// their energy is reported as the remap loss.
pub fn remap<T: Real>(state: &SimState<T>) -> Result<Remapped<T>, PropagatorError> {
    let grid = *state.grid();
    let energy_before = state.n_hat.l2_norm_sqr();
    let shift = state.frame.shift_at(state.t);
    if shift == T::zero() {
        let frame = ShearFrame::new(state.t, state.frame.flow)?;
        return Ok(Remapped {
            state: SimState::new(frame, state.n_hat.clone(), state.t)?,
            loss: T::zero(),
            energy_before,
        });
    }
    let [lx, ly, _] = grid.box_len();
    let ratio = shift * ly / lx;
    let m = ratio.round();
    if (ratio - m).abs() > lit::<T>(1e-12).max(T::tolerance_floor()) * ratio.abs().max(T::one()) {
        return Err(PropagatorError::RemapOffSchedule {
            ratio: ratio.to_f64().unwrap_or(f64::NAN),
        });
    }
    let m = m.to_i64().expect("integer shift");
    let half_y = (grid.n()[1] / 2) as i64;
    let zero = Complex::new(T::zero(), T::zero());
    let mut out = SpectralField::zeros(grid);
    let mut dropped = T::zero();
    for (i, &c) in state.n_hat.coeffs().iter().enumerate() {
        if c == zero {
            continue;
        }
        let mode = grid.mode_of(i);
        let ky_new = mode.ky - m * mode.kx;
        if mode.ky.abs() >= half_y || ky_new.abs() >= half_y {
            dropped = dropped + c.norm_sqr();
            continue;
        }
        let target = grid.index_of(Mode::new(mode.kx, ky_new, mode.kz)).expect("in band");
        out.coeffs_mut()[target] = c;
    }
    let two_pi = T::PI() + T::PI();
    let loss = two_pi * two_pi * two_pi * grid.freq_cell() * dropped;
    let frame = ShearFrame::new(state.t, state.frame.flow)?;
    Ok(Remapped {
        state: SimState::new(frame, out, state.t)?,
        loss,
        energy_before,
    })
}

/// Cache of propagator factors keyed by the (quantised) frame-relative window.
///
/// Within one remap period a run with a repeating step pattern revisits the
/// same windows, so factors are reused across periods.
pub struct Propagator<T: Real> {
    grid: GridSpec<T>,
    quad: QuadratureConfig<T>,
    cache: HashMap<(i64, i64), Vec<T>>,
    capacity: usize,
}

impl<T: Real> Propagator<T> {
    pub fn new(grid: GridSpec<T>, quad: QuadratureConfig<T>) -> Self {
        Self {
            grid,
            quad,
            cache: HashMap::new(),
            capacity: 16,
        }
    }

    fn key(x: T) -> i64 {
        (x.to_f64().unwrap_or(0.0) * 1e12).round() as i64
    }

    /// Factors for evolving `frame` from `t0` to `t1`.
    pub fn factors(&mut self, frame: &ShearFrame<T>, t0: T, t1: T) -> Result<&[T], PropagatorError> {
        let offset = if frame.flow().shear() == T::zero() {
            T::zero()
        } else {
            t0 - frame.t_ref()
        };
        let key = (Self::key(offset), Self::key(t1 - t0));
        if !self.cache.contains_key(&key) {
            if self.cache.len() >= self.capacity {
                self.cache.clear();
            }
            let f = propagator_factors(&self.grid, frame, t0, t1, &self.quad)?;
            self.cache.insert(key, f);
        }
        Ok(self.cache.get(&key).expect("just inserted"))
    }

    /// Applies `P_{t0→t1}` to arbitrary frame coefficients.
    pub fn apply(&mut self, frame: &ShearFrame<T>, t0: T, t1: T, c: &SpectralField<T>) -> Result<SpectralField<T>, PropagatorError> {
        let zero = c.zero_mode();
        let f = self.factors(frame, t0, t1)?;
        let mut out = apply_factors(c, f);
        out.coeffs_mut()[0] = zero;
        Ok(out)
    }
}

/// Evaluates the frame density at arbitrary laboratory points by direct
/// Fourier summation (test and diagnostic helper; O(points × modes)).
pub fn evaluate_lab_points<T: Real>(state: &SimState<T>, points: &[[T; 3]]) -> Vec<T> {
    let grid = state.grid();
    let cell = grid.freq_cell();
    let coeffs = state.n_hat.coeffs();
    points
        .iter()
        .map(|x| {
            let mut acc = Complex::new(T::zero(), T::zero());
            for (i, &c) in coeffs.iter().enumerate() {
                if c.norm_sqr() == T::zero() {
                    continue;
                }
                let k = state.frame.effective_wavenumber(grid, grid.mode_of(i), state.t);
                let phase = k.xi * x[0] + k.eta * x[1] + k.zeta * x[2];
                acc = acc + c * Complex::new(phase.cos(), phase.sin());
            }
            acc.re * cell
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbol::green_hat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn flow(a: f64, alpha: f64) -> FlowParams<f64> {
        FlowParams::new(a, alpha).unwrap()
    }

    fn band_limited(grid: GridSpec<f64>, kmax: i64, seed: u64) -> SpectralField<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = SpectralField::zeros(grid);
        for kx in -kmax..=kmax {
            for ky in -kmax..=kmax {
                for kz in -kmax..=kmax {
                    let m = Mode::new(kx, ky, kz);
                    if (kx, ky, kz) > (0, 0, 0) {
                        s.set_pair(m, Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
                    }
                }
            }
        }
        s.set_pair(Mode::ZERO, Complex::new(0.3, 0.0));
        s
    }

    fn state(grid: GridSpec<f64>, f: FlowParams<f64>, kmax: i64, seed: u64) -> SimState<f64> {
        SimState::new(ShearFrame::new(0.0, f).unwrap(), band_limited(grid, kmax, seed), 0.0).unwrap()
    }

    #[test]
    fn effective_wavenumber_examples() {
        let grid = GridSpec::cubic(8, 2.0 * PI).unwrap();
        let frame = ShearFrame::new(1.0, flow(2.0, 1.5)).unwrap();
        let k = frame.effective_wavenumber(&grid, Mode::new(1, 0, 0), 4.0);
        assert_eq!((k.xi, k.eta, k.zeta), (1.0, -6.0, 0.0));
        let k = frame.effective_wavenumber(&grid, Mode::new(0, 2, -3), 9.0);
        assert_eq!((k.xi, k.eta, k.zeta), (0.0, 2.0, -3.0));
        let ks = effective_wavenumbers(&grid, &frame, 1.0);
        for (i, k) in ks.iter().enumerate() {
            assert_eq!(*k, grid.wavenumber(grid.mode_of(i)));
        }
    }

    #[test]
    fn identity_heat_and_closed_form_factors() {
        let grid = GridSpec::cubic(16, 2.0 * PI).unwrap();
        let q = QuadratureConfig::default();
        let s = state(grid, flow(0.0, 2.0), 3, 1);
        assert_eq!(apply_propagator(&s, 0.0, &q).unwrap(), s);
        let out = apply_propagator(&s, 0.3, &q).unwrap();
        for (i, (a, b)) in s.n_hat().coeffs().iter().zip(out.n_hat().coeffs()).enumerate() {
            let k2 = grid.wavenumber(grid.mode_of(i)).norm_sqr();
            assert!((a * (-k2 * 0.3).exp() - b).norm() < 1e-15);
        }
        let f = propagator_factors(&grid, &ShearFrame::new(0.0, flow(1.0, 2.0)).unwrap(), 0.0, 1.0, &q).unwrap();
        let i = grid.index_of(Mode::new(1, 0, 0)).unwrap();
        assert!((f[i] - (-4.0f64 / 3.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn semigroup_contraction_and_mass() {
        let grid = GridSpec::cubic(16, 2.0 * PI).unwrap();
        let q = QuadratureConfig::default();
        let s = state(grid, flow(10.0, 1.5), 4, 2);
        let one = apply_propagator(&s, 0.07, &q).unwrap();
        let two = apply_propagator(&apply_propagator(&s, 0.03, &q).unwrap(), 0.07, &q).unwrap();
        for (a, b) in one.n_hat().coeffs().iter().zip(two.n_hat().coeffs()) {
            assert!((a - b).norm() <= 2e-10 * a.norm().max(1e-300), "{a} vs {b}");
        }
        let f = propagator_factors(&grid, s.frame(), 0.0, 0.07, &q).unwrap();
        assert!(f.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(one.n_hat().zero_mode(), s.n_hat().zero_mode());
        assert!(one.n_hat().l2_norm_sqr() <= s.n_hat().l2_norm_sqr());
    }

    #[test]
    fn commutes_with_x_and_z_translations() {
        let grid = GridSpec::cubic(16, 2.0 * PI).unwrap();
        let q = QuadratureConfig::default();
        let s = state(grid, flow(3.0, 1.25), 4, 3);
        let (a, c) = (0.37, -1.1);
        let shift = |f: &SpectralField<f64>| {
            f.apply_multiplier(|_, k| Complex::from_polar(1.0, -(k.xi * a + k.zeta * c)))
        };
        let lhs = apply_propagator(&s.with_coeffs(shift(s.n_hat()), 0.0), 0.2, &q).unwrap();
        let rhs = shift(apply_propagator(&s, 0.2, &q).unwrap().n_hat());
        for (x, y) in lhs.n_hat().coeffs().iter().zip(rhs.coeffs()) {
            assert!((x - y).norm() < 1e-15);
        }
    }

    #[test]
    fn shear_nyquist_planes_are_projected_out() {
        let grid = GridSpec::cubic(8, 2.0 * PI).unwrap();
        let q = QuadratureConfig::default();
        let f = propagator_factors(&grid, &ShearFrame::new(0.0, flow(1.0, 2.0)).unwrap(), 0.0, 0.1, &q).unwrap();
        assert_eq!(f[grid.index_of(Mode::new(-4, 1, 0)).unwrap()], 0.0);
        assert_eq!(f[grid.index_of(Mode::new(1, -4, 2)).unwrap()], 0.0);
        assert!(f[grid.index_of(Mode::new(1, 1, -4)).unwrap()] > 0.0);
    }

    #[test]
    fn remap_with_zero_shift_is_identity() {
        let grid = GridSpec::cubic(16, 2.0 * PI).unwrap();
        let s = state(grid, flow(5.0, 1.5), 3, 4);
        let r = remap(&s).unwrap();
        assert_eq!(r.loss, 0.0);
        assert_eq!(r.state.n_hat(), s.n_hat());
    }

    #[test]
    fn remap_preserves_lab_field_pointwise() {
        let grid = GridSpec::new([16, 32, 16], [2.0 * PI, 2.0 * PI, 2.0 * PI]).unwrap();
        let f = flow(2.0, 1.5);
        let period = ShearFrame::new(0.0, f).unwrap().remap_period(&grid).unwrap();
        let before = SimState::new(ShearFrame::new(0.0, f).unwrap(), band_limited(grid, 3, 5), 2.0 * period).unwrap();
        let r = remap(&before).unwrap();
        assert_eq!(r.loss, 0.0);
        assert_eq!(r.state.frame().t_ref(), before.t());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<[f64; 3]> = (0..64)
            .map(|_| [rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0)])
            .collect();
        let a = evaluate_lab_points(&before, &pts);
        let b = evaluate_lab_points(&r.state, &pts);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn remap_drops_modes_leaving_the_band() {
        let grid = GridSpec::cubic(16, 2.0 * PI).unwrap();
        let f = flow(1.0, 2.0);
        let mut c = SpectralField::zeros(grid);
        c.set_pair(Mode::new(1, -7, 0), Complex::new(0.5, 0.25));
        let energy = c.l2_norm_sqr();
        let s = SimState::new(ShearFrame::new(0.0, f).unwrap(), c, 1.0).unwrap();
        let r = remap(&s).unwrap();
        assert!((r.loss - energy).abs() <= 1e-15 * energy);
        assert_eq!(r.state.n_hat().l2_norm_sqr(), 0.0);
    }

    #[test]
    fn off_schedule_remap_is_rejected() {
        let grid = GridSpec::cubic(16, 2.0 * PI).unwrap();
        let s = SimState::new(ShearFrame::new(0.0, flow(1.0, 2.0)).unwrap(), SpectralField::zeros(grid), 0.5).unwrap();
        assert!(matches!(remap(&s), Err(PropagatorError::RemapOffSchedule { .. })));
    }

    #[test]
    fn linear_evolution_matches_green_hat_across_a_remap() {
        // Lab coefficient at final wavenumber K equals the initial one at
        // (ξ, η + Atξ, ζ) times the Green's amplitude evaluated at K.
        let grid = GridSpec::cubic(16, 2.0 * PI).unwrap();
        let q = QuadratureConfig::default();
        for alpha in [1.5, 2.0] {
            let f = flow(10.0, alpha);
            let s0 = state(grid, f, 2, 6);
            let period = s0.frame().remap_period(&grid).unwrap();
            let t1 = 1.5 * period;
            let mid = apply_propagator(&s0, period, &q).unwrap();
            let r = remap(&mid).unwrap();
            assert!(r.loss <= 1e-12 * r.energy_before);
            let end = apply_propagator(&r.state, t1, &q).unwrap();
            let shift = f.shear() * (end.t() - end.frame().t_ref());
            for (i, c) in end.n_hat().coeffs().iter().enumerate() {
                let m = grid.mode_of(i);
                let k = end.frame().effective_wavenumber(&grid, m, end.t());
                let m0 = Mode::new(m.kx, m.ky + m.kx, m.kz);
                let c0 = s0.n_hat().get(m0).unwrap_or_default();
                let g = green_hat(k, t1, &f, ShearSign::Plus, &q).unwrap();
                assert!((c0 * g - c).norm() <= 1e-8 * c.norm().max(1e-300), "{m:?} {shift}");
            }
        }
    }
}
