//! Periodic-box discretisation and Fourier transforms.
//!
//! Samples sit at `x_i = i·L/n`, stored row-major with `z` fastest.
//! Spectral coefficients approximate the continuous transform
//!
//! ```text
//! n̂(Ξ) = (2π)⁻³ ∫ n(x) e^{-iΞ·x} dx,      n(x) = ∫ n̂(Ξ) e^{iΞ·x} dΞ
//! ```
//!
//! so the forward map carries `ΔV/(2π)³` and the inverse carries the
//! frequency cell `ΔΞ = (2π)³/V`. With this normalisation the zero
//! coefficient is `mass/(2π)³` and Parseval reads
//! `Σ|n|²ΔV = (2π)³ Σ|n̂|²ΔΞ`.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftDirection, FftPlanner};
use thiserror::Error;

use crate::scalar::{from_i64, from_usize, lit, Real};
use crate::symbol::FreqPoint;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("field contains non-finite values")]
    NonFinite,
    #[error("coefficients are not conjugate symmetric (relative asymmetry {asymmetry:e})")]
    NotConjugateSymmetric { asymmetry: f64 },
    #[error("operands live on different grids")]
    GridMismatch,
}

/// Signed integer mode triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Mode {
    pub kx: i64,
    pub ky: i64,
    pub kz: i64,
}

impl Mode {
    pub const ZERO: Mode = Mode { kx: 0, ky: 0, kz: 0 };

    pub fn new(kx: i64, ky: i64, kz: i64) -> Self {
        Self { kx, ky, kz }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    n: [usize; 3],
    box_len: [T; 3],
}

impl<T: Real> GridSpec<T> {
    pub fn new(n: [usize; 3], box_len: [T; 3]) -> Result<Self, SpectralError> {
        for (axis, (&ni, &li)) in n.iter().zip(box_len.iter()).enumerate() {
            if ni < 8 || ni % 2 != 0 {
                return Err(SpectralError::InvalidGrid(format!(
                    "axis {axis}: point count must be even and >= 8, got {ni}"
                )));
            }
            if !(li > T::zero() && li.is_finite()) {
                return Err(SpectralError::InvalidGrid(format!("axis {axis}: box length must be positive, got {li}")));
            }
        }
        Ok(Self { n, box_len })
    }

    pub fn cubic(n: usize, len: T) -> Result<Self, SpectralError> {
        Self::new([n; 3], [len; 3])
    }

    pub fn n(&self) -> [usize; 3] {
        self.n
    }

    pub fn box_len(&self) -> [T; 3] {
        self.box_len
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn volume(&self) -> T {
        self.box_len[0] * self.box_len[1] * self.box_len[2]
    }

    pub fn spacing(&self, axis: usize) -> T {
        self.box_len[axis] / from_usize(self.n[axis])
    }

    pub fn min_spacing(&self) -> T {
        (0..3).map(|a| self.spacing(a)).fold(T::infinity(), T::min)
    }

    pub fn cell_volume(&self) -> T {
        self.volume() / from_usize(self.len())
    }

    /// Frequency cell `ΔΞ = (2π)³/V`.
    pub fn freq_cell(&self) -> T {
        let two_pi = T::PI() + T::PI();
        two_pi * two_pi * two_pi / self.volume()
    }

    /// Fundamental wavenumber `2π/L` along `axis`.
    pub fn wavenumber_unit(&self, axis: usize) -> T {
        (T::PI() + T::PI()) / self.box_len[axis]
    }

    #[inline]
    pub fn flat(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.n[1] + iy) * self.n[2] + iz
    }

    #[inline]
    pub fn unflat(&self, idx: usize) -> [usize; 3] {
        let iz = idx % self.n[2];
        let rest = idx / self.n[2];
        [rest / self.n[1], rest % self.n[1], iz]
    }

    /// Signed mode number of storage index `i` along an axis of `n` points.
    #[inline]
    pub fn signed(i: usize, n: usize) -> i64 {
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    /// Storage index of signed mode `k`, if it lies in `[-n/2, n/2)`.
    #[inline]
    pub fn storage(k: i64, n: usize) -> Option<usize> {
        let half = (n / 2) as i64;
        if k >= -half && k < half {
            Some(if k >= 0 { k as usize } else { (k + n as i64) as usize })
        } else {
            None
        }
    }

    pub fn mode_of(&self, idx: usize) -> Mode {
        let [ix, iy, iz] = self.unflat(idx);
        Mode::new(
            Self::signed(ix, self.n[0]),
            Self::signed(iy, self.n[1]),
            Self::signed(iz, self.n[2]),
        )
    }

    pub fn index_of(&self, m: Mode) -> Option<usize> {
        Some(self.flat(
            Self::storage(m.kx, self.n[0])?,
            Self::storage(m.ky, self.n[1])?,
            Self::storage(m.kz, self.n[2])?,
        ))
    }

    /// Whether `m` sits on a Nyquist plane of any axis.
    pub fn is_nyquist(&self, m: Mode) -> bool {
        m.kx == -((self.n[0] / 2) as i64) || m.ky == -((self.n[1] / 2) as i64) || m.kz == -((self.n[2] / 2) as i64)
    }

    pub fn wavenumber(&self, m: Mode) -> FreqPoint<T> {
        FreqPoint::new(
            from_i64::<T>(m.kx) * self.wavenumber_unit(0),
            from_i64::<T>(m.ky) * self.wavenumber_unit(1),
            from_i64::<T>(m.kz) * self.wavenumber_unit(2),
        )
    }

    /// Sample coordinates of storage index `idx`.
    pub fn position(&self, idx: usize) -> [T; 3] {
        let i = self.unflat(idx);
        [0, 1, 2].map(|a| from_usize::<T>(i[a]) * self.spacing(a))
    }

    /// Two-thirds rule: a mode survives iff `3|k_i| <= n_i` on every axis.
    #[inline]
    pub fn is_resolved(&self, m: Mode) -> bool {
        3 * m.kx.unsigned_abs() as usize <= self.n[0]
            && 3 * m.ky.unsigned_abs() as usize <= self.n[1]
            && 3 * m.kz.unsigned_abs() as usize <= self.n[2]
    }
}

/// Real samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    grid: GridSpec<T>,
    values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn new(grid: GridSpec<T>, values: Vec<T>) -> Result<Self, SpectralError> {
        if values.len() != grid.len() {
            return Err(SpectralError::LengthMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SpectralError::NonFinite);
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_raw(grid: GridSpec<T>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: GridSpec<T>) -> Self {
        Self {
            values: vec![T::zero(); grid.len()],
            grid,
        }
    }

    pub fn from_fn<F: FnMut([T; 3]) -> T>(grid: GridSpec<T>, mut f: F) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.position(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Riemann-sum `Lᵖ` norm; `p = T::infinity()` gives the maximum modulus.
    pub fn lp_norm(&self, p: T) -> T {
        lp_norm_of(&self.values, self.grid.cell_volume(), p)
    }

    /// `∫ n dx` as a Riemann sum.
    pub fn mass(&self) -> T {
        self.values.iter().copied().sum::<T>() * self.grid.cell_volume()
    }

    pub fn to_spectral(&self) -> SpectralField<T> {
        Fft3::new(self.grid).forward(self)
    }

    /// `‖Λˢ f‖_{Lᵖ}` with `Λ` the multiplier `|Ξ|`.
    pub fn fractional_norm(&self, s: T, p: T) -> T {
        if s == T::zero() {
            return self.lp_norm(p);
        }
        let fft = Fft3::new(self.grid);
        let spec = fft.forward(self);
        let lifted = spec.apply_multiplier(|m, k| {
            if m.is_zero() {
                Complex::new(T::zero(), T::zero())
            } else {
                Complex::new(k.norm_sqr().powf(s * lit(0.5)), T::zero())
            }
        });
        fft.inverse_real(&lifted).lp_norm(p)
    }

    pub fn scaled(&self, a: T) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| v * a).collect(),
        }
    }
}

pub(crate) fn lp_norm_of<T: Real>(values: &[T], cell: T, p: T) -> T {
    if p.is_infinite() {
        return values.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    }
    let sum: T = if p == T::one() {
        values.iter().map(|v| v.abs()).sum()
    } else if p == lit(2.0) {
        values.iter().map(|&v| v * v).sum()
    } else if p == lit(4.0) {
        values.iter().map(|&v| (v * v) * (v * v)).sum()
    } else {
        values.iter().map(|v| v.abs().powf(p)).sum()
    };
    (sum * cell).powf(p.recip())
}

/// Complex coefficients on the mode lattice of a grid (FFT storage order).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField<T> {
    grid: GridSpec<T>,
    coeffs: Vec<Complex<T>>,
}

impl<T: Real> SpectralField<T> {
    pub fn new(grid: GridSpec<T>, coeffs: Vec<Complex<T>>) -> Result<Self, SpectralError> {
        if coeffs.len() != grid.len() {
            return Err(SpectralError::LengthMismatch {
                expected: grid.len(),
                found: coeffs.len(),
            });
        }
        Ok(Self { grid, coeffs })
    }

    pub fn zeros(grid: GridSpec<T>) -> Self {
        Self {
            coeffs: vec![Complex::new(T::zero(), T::zero()); grid.len()],
            grid,
        }
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.coeffs
    }

    pub fn get(&self, m: Mode) -> Option<Complex<T>> {
        self.grid.index_of(m).map(|i| self.coeffs[i])
    }

    /// Sets `m` and, unless `m` is its own partner, `-m` to the conjugate.
    pub fn set_pair(&mut self, m: Mode, c: Complex<T>) {
        let i = self.grid.index_of(m).expect("mode on grid");
        self.coeffs[i] = c;
        if let Some(j) = self.grid.index_of(Mode::new(-m.kx, -m.ky, -m.kz)) {
            if j != i {
                self.coeffs[j] = c.conj();
            } else {
                self.coeffs[i] = Complex::new(c.re, T::zero());
            }
        }
    }

    pub fn zero_mode(&self) -> Complex<T> {
        self.coeffs[0]
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// `max |c(k) - conj(c(-k))| / max |c|`, zero for the zero field.
    pub fn conjugate_asymmetry(&self) -> T {
        let [nx, ny, nz] = self.grid.n;
        let mut worst = T::zero();
        let mut scale = T::zero();
        for ix in 0..nx {
            let jx = (nx - ix) % nx;
            for iy in 0..ny {
                let jy = (ny - iy) % ny;
                for iz in 0..nz {
                    let jz = (nz - iz) % nz;
                    let a = self.coeffs[self.grid.flat(ix, iy, iz)];
                    let b = self.coeffs[self.grid.flat(jx, jy, jz)];
                    worst = worst.max((a - b.conj()).norm());
                    scale = scale.max(a.norm());
                }
            }
        }
        if scale == T::zero() {
            T::zero()
        } else {
            worst / scale
        }
    }

    /// Inverse transform; fails unless the coefficients describe a real field.
    pub fn to_physical(&self) -> Result<Field<T>, SpectralError> {
        let asym = self.conjugate_asymmetry();
        if asym > symmetry_tolerance::<T>() {
            return Err(SpectralError::NotConjugateSymmetric {
                asymmetry: asym.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Fft3::new(self.grid).inverse_real(self))
    }

    /// Coefficient-wise product with `m(mode, nominal wavenumber)`.
    pub fn apply_multiplier<F: FnMut(Mode, FreqPoint<T>) -> Complex<T>>(&self, mut m: F) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let mode = self.grid.mode_of(i);
                c * m(mode, self.grid.wavenumber(mode))
            })
            .collect();
        Self { grid: self.grid, coeffs }
    }

    /// Zeroes every mode outside the two-thirds band.
    pub fn dealias(&self) -> Self {
        let mut out = self.clone();
        out.dealias_in_place();
        out
    }

    pub fn dealias_in_place(&mut self) {
        let zero = Complex::new(T::zero(), T::zero());
        for i in 0..self.coeffs.len() {
            if !self.grid.is_resolved(self.grid.mode_of(i)) {
                self.coeffs[i] = zero;
            }
        }
    }

    /// `Σ|n|²ΔV` computed on the coefficient side.
    pub fn l2_norm_sqr(&self) -> T {
        let two_pi = T::PI() + T::PI();
        let sum: T = self.coeffs.iter().map(|c| c.norm_sqr()).sum();
        two_pi * two_pi * two_pi * self.grid.freq_cell() * sum
    }

    /// `(2π)³ n̂(0)`, the mass of the represented field.
    pub fn mass(&self) -> T {
        let two_pi = T::PI() + T::PI();
        two_pi * two_pi * two_pi * self.coeffs[0].re
    }

    pub fn scale(&self, a: T) -> Self {
        Self {
            grid: self.grid,
            coeffs: self.coeffs.iter().map(|&c| c * a).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, SpectralError> {
        if self.grid != other.grid {
            return Err(SpectralError::GridMismatch);
        }
        Ok(Self {
            grid: self.grid,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(&a, &b)| a + b).collect(),
        })
    }
}

pub(crate) fn symmetry_tolerance<T: Real>() -> T {
    lit::<T>(1e-10).max(T::epsilon() * lit(1000.0))
}

/// Planned three-dimensional complex FFT for one grid.
#[derive(Clone)]
pub struct Fft3<T: Real> {
    grid: GridSpec<T>,
    forward: [Arc<dyn Fft<T>>; 3],
    inverse: [Arc<dyn Fft<T>>; 3],
}

impl<T: Real> std::fmt::Debug for Fft3<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("grid", &self.grid).finish()
    }
}

impl<T: Real> Fft3<T> {
    pub fn new(grid: GridSpec<T>) -> Self {
        let mut planner = FftPlanner::new();
        let forward = grid.n.map(|n| planner.plan_fft(n, FftDirection::Forward));
        let inverse = grid.n.map(|n| planner.plan_fft(n, FftDirection::Inverse));
        Self { grid, forward, inverse }
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    pub fn forward(&self, f: &Field<T>) -> SpectralField<T> {
        assert_eq!(f.grid, self.grid, "field grid does not match transform grid");
        self.forward_values(&f.values)
    }

    pub(crate) fn forward_values(&self, values: &[T]) -> SpectralField<T> {
        let mut data: Vec<Complex<T>> = values.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.run(&mut data, &self.forward);
        let two_pi = T::PI() + T::PI();
        let norm = self.grid.cell_volume() / (two_pi * two_pi * two_pi);
        for c in data.iter_mut() {
            *c = *c * norm;
        }
        SpectralField { grid: self.grid, coeffs: data }
    }

    /// Inverse transform to complex samples, without any symmetry check.
    pub(crate) fn inverse_complex(&self, s: &SpectralField<T>) -> Vec<Complex<T>> {
        let norm = self.grid.freq_cell();
        let mut data: Vec<Complex<T>> = s.coeffs.iter().map(|&c| c * norm).collect();
        self.run(&mut data, &self.inverse);
        data
    }

    /// Inverse transform keeping the real part; callers guarantee symmetry.
    pub(crate) fn inverse_real(&self, s: &SpectralField<T>) -> Field<T> {
        assert_eq!(s.grid, self.grid, "spectral grid does not match transform grid");
        let data = self.inverse_complex(s);
        Field::from_raw(self.grid, data.into_iter().map(|c| c.re).collect())
    }

    /// Inverse transforms of two conjugate-symmetric spectra through one
    /// complex transform of `a + i·b`.
    pub(crate) fn inverse_real_pair(&self, a: &SpectralField<T>, b: &SpectralField<T>) -> (Vec<T>, Vec<T>) {
        let norm = self.grid.freq_cell();
        let mut data: Vec<Complex<T>> = a
            .coeffs
            .iter()
            .zip(&b.coeffs)
            .map(|(&x, &y)| Complex::new(x.re - y.im, x.im + y.re) * norm)
            .collect();
        self.run(&mut data, &self.inverse);
        data.into_iter().map(|c| (c.re, c.im)).unzip()
    }

    /// Forward transforms of two real sample sets through one complex
    /// transform, split using conjugate symmetry.
    pub(crate) fn forward_real_pair(&self, x: &[T], y: &[T]) -> (SpectralField<T>, SpectralField<T>) {
        let mut data: Vec<Complex<T>> = x.iter().zip(y).map(|(&a, &b)| Complex::new(a, b)).collect();
        self.run(&mut data, &self.forward);
        let two_pi = T::PI() + T::PI();
        let norm = self.grid.cell_volume() / (two_pi * two_pi * two_pi);
        let half = lit::<T>(0.5);
        let [nx, ny, nz] = self.grid.n;
        let zero = Complex::new(T::zero(), T::zero());
        let mut fa = vec![zero; data.len()];
        let mut fb = vec![zero; data.len()];
        for ix in 0..nx {
            let jx = (nx - ix) % nx;
            for iy in 0..ny {
                let jy = (ny - iy) % ny;
                for iz in 0..nz {
                    let i = self.grid.flat(ix, iy, iz);
                    let p = data[i];
                    let q = data[self.grid.flat(jx, jy, (nz - iz) % nz)].conj();
                    fa[i] = (p + q) * (half * norm);
                    let d = (p - q) * (half * norm);
                    fb[i] = Complex::new(d.im, -d.re);
                }
            }
        }
        (
            SpectralField { grid: self.grid, coeffs: fa },
            SpectralField { grid: self.grid, coeffs: fb },
        )
    }

    fn run(&self, data: &mut [Complex<T>], plans: &[Arc<dyn Fft<T>>; 3]) {
        let [nx, ny, nz] = self.grid.n;
        let zero = Complex::new(T::zero(), T::zero());
        let scratch_len = plans.iter().map(|p| p.get_inplace_scratch_len()).max().unwrap_or(0);
        let mut scratch = vec![zero; scratch_len];

        // z: contiguous lines
        plans[2].process_with_scratch(data, &mut scratch);

        // y: gather each x-slab transposed to (z, y)
        let mut slab = vec![zero; ny * nz];
        for ix in 0..nx {
            let base = ix * ny * nz;
            for iy in 0..ny {
                for iz in 0..nz {
                    slab[iz * ny + iy] = data[base + iy * nz + iz];
                }
            }
            plans[1].process_with_scratch(&mut slab, &mut scratch);
            for iy in 0..ny {
                for iz in 0..nz {
                    data[base + iy * nz + iz] = slab[iz * ny + iy];
                }
            }
        }

        // x: gather (y, z) columns into lines of length nx
        let plane = ny * nz;
        let mut lines = vec![zero; nx * plane];
        for ix in 0..nx {
            for j in 0..plane {
                lines[j * nx + ix] = data[ix * plane + j];
            }
        }
        plans[0].process_with_scratch(&mut lines, &mut scratch);
        for ix in 0..nx {
            for j in 0..plane {
                data[ix * plane + j] = lines[j * nx + ix];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid(n: usize, len: f64) -> GridSpec<f64> {
        GridSpec::cubic(n, len).unwrap()
    }

    fn random_field(g: GridSpec<f64>, seed: u64) -> Field<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::new(g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn paired_transforms_match_single_ones() {
        let g = GridSpec::new([8, 10, 12], [1.0, 2.0, 3.0]).unwrap();
        let fft = Fft3::new(g);
        let (a, b) = (random_field(g, 11), random_field(g, 12));
        let (sa, sb) = fft.forward_real_pair(a.values(), b.values());
        for (x, y) in sa.coeffs().iter().zip(fft.forward(&a).coeffs()) {
            assert!((x - y).norm() < 1e-15);
        }
        for (x, y) in sb.coeffs().iter().zip(fft.forward(&b).coeffs()) {
            assert!((x - y).norm() < 1e-15);
        }
        let (ra, rb) = fft.inverse_real_pair(&sa, &sb);
        for (x, y) in ra.iter().zip(a.values()).chain(rb.iter().zip(b.values())) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new([8, 8, 6], [1.0; 3]).is_err());
        assert!(GridSpec::new([8, 9, 8], [1.0; 3]).is_err());
        assert!(GridSpec::new([8, 8, 8], [1.0, 0.0, 1.0]).is_err());
        assert!(GridSpec::new([8, 10, 12], [1.0, 2.0, 3.0]).is_ok());
    }

    #[test]
    fn mode_index_round_trip() {
        let g = GridSpec::new([8, 10, 12], [1.0, 2.0, 3.0]).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.index_of(g.mode_of(i)), Some(i));
        }
        assert_eq!(g.index_of(Mode::new(4, 0, 0)), None);
        assert_eq!(g.mode_of(g.flat(4, 0, 0)), Mode::new(-4, 0, 0));
    }

    #[test]
    fn constant_field_has_only_zero_mode() {
        let g = grid(8, 2.0 * PI);
        let s = Field::from_fn(g, |_| 3.0).to_spectral();
        assert!((s.mass() - 3.0 * g.volume()).abs() < 1e-10);
        for (i, c) in s.coeffs().iter().enumerate().skip(1) {
            assert!(c.norm() < 1e-14, "mode {:?}", g.mode_of(i));
        }
    }

    #[test]
    fn single_harmonic_gives_conjugate_pair() {
        let g = GridSpec::new([16, 8, 8], [3.0, 2.0 * PI, 2.0 * PI]).unwrap();
        let s = Field::from_fn(g, |x| (2.0 * PI * x[0] / 3.0).cos()).to_spectral();
        let a = s.get(Mode::new(1, 0, 0)).unwrap();
        let b = s.get(Mode::new(-1, 0, 0)).unwrap();
        assert!((a - b.conj()).norm() < 1e-15);
        assert!((a.norm() - b.norm()).abs() < 1e-15 && a.norm() > 1e-3);
        let others: f64 = s
            .coeffs()
            .iter()
            .enumerate()
            .filter(|(i, _)| g.mode_of(*i).kx.abs() != 1)
            .map(|(_, c)| c.norm())
            .sum();
        assert!(others < 1e-13);
    }

    #[test]
    fn zero_coefficients_give_zero_field_and_pair_gives_cosine() {
        let g = grid(8, 2.0 * PI);
        let z = SpectralField::zeros(g).to_physical().unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        let mut s = SpectralField::zeros(g);
        // cos(x) = (e^{ix} + e^{-ix})/2 and n = Σ ĉ ΔΞ e^{ikx}
        s.set_pair(Mode::new(1, 0, 0), Complex::new(0.5 / g.freq_cell(), 0.0));
        let f = s.to_physical().unwrap();
        for i in 0..g.len() {
            assert!((f.values()[i] - g.position(i)[0].cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn asymmetric_coefficients_rejected() {
        let g = grid(8, 1.0);
        let mut s = SpectralField::zeros(g);
        let i = g.index_of(Mode::new(1, 2, 0)).unwrap();
        s.coeffs_mut()[i] = Complex::new(1.0, 0.0);
        assert!(matches!(s.to_physical(), Err(SpectralError::NotConjugateSymmetric { .. })));
    }

    #[test]
    fn random_round_trip() {
        let g = GridSpec::new([8, 16, 10], [1.0, 2.0, 3.0]).unwrap();
        let f = random_field(g, 1);
        let back = f.to_spectral().to_physical().unwrap();
        let err = f.values().iter().zip(back.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn multiplier_examples() {
        let g = grid(16, 2.0 * PI);
        let f = Field::from_fn(g, |x| x[0].cos());
        let s = f.to_spectral();
        assert_eq!(s.apply_multiplier(|_, _| Complex::new(1.0, 0.0)), s);
        let lap = s.apply_multiplier(|_, k| Complex::new(k.norm_sqr(), 0.0)).to_physical().unwrap();
        for i in 0..g.len() {
            assert!((lap.values()[i] - f.values()[i]).abs() < 1e-13);
        }
        let f2 = Field::from_fn(g, |x| (2.0 * x[0]).cos());
        let frac = f2
            .to_spectral()
            .apply_multiplier(|_, k| Complex::new(k.norm_sqr().powf(0.75), 0.0))
            .to_physical()
            .unwrap();
        for i in 0..g.len() {
            assert!((frac.values()[i] - 2f64.powf(1.5) * f2.values()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn dealias_examples() {
        let g = grid(64, 2.0 * PI);
        let band = Field::from_fn(g, |x| (21.0 * x[0]).cos() + (5.0 * x[1]).sin() * (20.0 * x[2]).cos());
        let s = band.to_spectral();
        let d = s.dealias();
        let diff: f64 = s.coeffs().iter().zip(d.coeffs()).map(|(a, b)| (a - b).norm()).sum();
        assert!(diff < 1e-12);

        let nyq = Field::from_fn(g, |x| (32.0 * x[0]).cos());
        assert!(nyq.to_spectral().dealias().coeffs().iter().all(|c| c.norm() < 1e-15));

        // cos²(21x) = (1 + cos 42x)/2; on 64 points cos 42x aliases onto cos 22x,
        // which the two-thirds band removes, leaving the resolved projection 1/2.
        let prod = Field::from_fn(g, |x| (21.0 * x[0]).cos() * (21.0 * x[0]).cos());
        let cleaned = prod.to_spectral().dealias().to_physical().unwrap();
        assert!(cleaned.values().iter().all(|&v| (v - 0.5).abs() < 1e-13));
    }

    #[test]
    fn norm_examples() {
        let g = GridSpec::new([8, 8, 8], [1.0, 2.0, 3.0]).unwrap();
        let one = Field::from_fn(g, |_| 1.0);
        assert!((one.lp_norm(2.0) - 6f64.sqrt()).abs() < 1e-14);
        assert!((one.mass() - 6.0).abs() < 1e-14);

        let c = grid(16, 2.0 * PI);
        let cosx = Field::from_fn(c, |x| x[0].cos());
        assert!((cosx.lp_norm(2.0) - 2.0 * PI.powf(1.5)).abs() < 1e-12);
        assert_eq!(cosx.lp_norm(f64::INFINITY), 1.0);
        assert!(cosx.mass().abs() < 1e-12);
    }

    #[test]
    fn gaussian_mass() {
        // Box half-width 12σ: tail mass below erfc(12/√2)·3 ≈ 1e-32.
        let sigma = 0.7;
        let m = 2.5;
        let len = 24.0 * sigma;
        let g = grid(48, len);
        let norm = m / (2.0 * PI * sigma * sigma).powf(1.5);
        let f = Field::from_fn(g, |x| {
            let r2: f64 = x.iter().map(|&xi| (xi - len / 2.0).powi(2)).sum();
            norm * (-r2 / (2.0 * sigma * sigma)).exp()
        });
        assert!((f.mass() - m).abs() / m < 1e-10);
    }

    #[test]
    fn fractional_norm_examples() {
        let g = grid(16, 2.0 * PI);
        let f = Field::from_fn(g, |x| x[0].cos() + 0.3);
        assert_eq!(f.fractional_norm(0.0, 3.0), f.lp_norm(3.0));
        let cosx = Field::from_fn(g, |x| x[0].cos());
        assert!((cosx.fractional_norm(1.0, 2.0) - cosx.lp_norm(2.0)).abs() < 1e-12);
        let cos2 = Field::from_fn(g, |x| (2.0 * x[0]).cos());
        assert!((cos2.fractional_norm(0.5, 2.0) - 2f64.sqrt() * cos2.lp_norm(2.0)).abs() < 1e-12);
    }

    #[test]
    fn f32_round_trip() {
        let g = GridSpec::<f32>::cubic(8, 1.0).unwrap();
        let f = Field::from_fn(g, |x| (6.0 * x[0]).sin() + x[1] * x[2]);
        let back = f.to_spectral().to_physical().unwrap();
        let err = f.values().iter().zip(back.values()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
        assert!(err < 1e-5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn parseval_and_round_trip(seed in any::<u64>()) {
            let g = GridSpec::new([8, 10, 12], [1.5, 2.0, 0.7]).unwrap();
            let f = random_field(g, seed);
            let s = f.to_spectral();
            let phys = f.lp_norm(2.0).powi(2);
            prop_assert!((phys - s.l2_norm_sqr()).abs() / phys < 1e-10);
            prop_assert!(s.conjugate_asymmetry() < 1e-12);
            let back = s.to_physical().unwrap();
            let err = f.values().iter().zip(back.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(err < 1e-12);
        }

        #[test]
        fn multiplier_linearity_and_mass(seed in any::<u64>(), a in -3.0..3.0f64) {
            let g = grid(8, 2.0);
            let f = random_field(g, seed);
            let h = random_field(g, seed.wrapping_add(1));
            let m = |_: Mode, k: FreqPoint<f64>| Complex::new((-k.norm_sqr()).exp(), 0.0);
            let lhs = f.to_spectral().scale(a).add(&h.to_spectral()).unwrap().apply_multiplier(m);
            let rhs = f.to_spectral().apply_multiplier(m).scale(a).add(&h.to_spectral().apply_multiplier(m)).unwrap();
            for (x, y) in lhs.coeffs().iter().zip(rhs.coeffs()) {
                prop_assert!((x - y).norm() < 1e-14);
            }
            let filtered = f.to_spectral().apply_multiplier(m).to_physical().unwrap();
            prop_assert!((filtered.mass() - f.mass()).abs() < 1e-12);
        }
    }
}
