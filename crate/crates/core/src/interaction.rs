//! Attractive drift `B(n) = ∇(-Δ)⁻¹n` and the nonlinear term `-∇·(nB)`.
//!
//! Both act on frame coefficients but differentiate with the laboratory
//! wavenumber of each mode. Pointwise products are formed on the frame
//! lattice, which samples the laboratory field along sheared coordinates;
//! the product of two such samplings is the sampling of the product.

use num_complex::Complex;

use crate::propagator::ShearFrame;
use crate::scalar::Real;
use crate::spectral::{lp_norm_of, Field, Fft3, GridSpec, SpectralField};

/// Three real components on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField<T> {
    pub x: Field<T>,
    pub y: Field<T>,
    pub z: Field<T>,
}

impl<T: Real> VectorField<T> {
    pub fn grid(&self) -> &GridSpec<T> {
        self.x.grid()
    }

    /// `max |v|` over the samples.
    pub fn max_magnitude(&self) -> T {
        self.x
            .values()
            .iter()
            .zip(self.y.values())
            .zip(self.z.values())
            .map(|((&a, &b), &c)| (a * a + b * b + c * c).sqrt())
            .fold(T::zero(), T::max)
    }
}

/// Output of one nonlinear evaluation.
#[derive(Debug, Clone)]
pub struct RhsEval<T> {
    pub rhs: SpectralField<T>,
    /// `max|B|` over the frame lattice.
    pub max_drift: T,
    /// `‖n‖_{Lᵖ}` when requested.
    pub monitor: Option<T>,
}

/// Transform plans plus the multiplier logic, reusable across steps.
#[derive(Debug, Clone)]
pub struct Interaction<T: Real> {
    fft: Fft3<T>,
}

impl<T: Real> Interaction<T> {
    pub fn new(grid: GridSpec<T>) -> Self {
        Self { fft: Fft3::new(grid) }
    }

    pub fn grid(&self) -> &GridSpec<T> {
        self.fft.grid()
    }

    /// Spectral components `iK/|K|² n̂` with `K` the laboratory wavenumber.
    ///
    /// The zero mode and every Nyquist plane are set to zero: the former is
    /// the mean-free potential convention, the latter have no conjugate
    /// partner for an odd multiplier.
    pub fn attractive_spectral(&self, n_hat: &SpectralField<T>, frame: &ShearFrame<T>, t: T) -> [SpectralField<T>; 3] {
        let grid = *n_hat.grid();
        let zero = Complex::new(T::zero(), T::zero());
        let mut out = [
            SpectralField::zeros(grid),
            SpectralField::zeros(grid),
            SpectralField::zeros(grid),
        ];
        for (i, &c) in n_hat.coeffs().iter().enumerate() {
            let m = grid.mode_of(i);
            if c == zero || m.is_zero() || grid.is_nyquist(m) {
                continue;
            }
            let k = frame.effective_wavenumber(&grid, m, t);
            let ic = Complex::new(-c.im, c.re) / k.norm_sqr();
            out[0].coeffs_mut()[i] = ic * k.xi;
            out[1].coeffs_mut()[i] = ic * k.eta;
            out[2].coeffs_mut()[i] = ic * k.zeta;
        }
        out
    }

    /// `B(n)` sampled on the frame lattice.
    pub fn attractive_field(&self, n_hat: &SpectralField<T>, frame: &ShearFrame<T>, t: T) -> VectorField<T> {
        let grid = *n_hat.grid();
        let [bx, by, bz] = self.attractive_spectral(n_hat, frame, t);
        let (x, y) = self.fft.inverse_real_pair(&bx, &by);
        VectorField {
            x: Field::from_raw(grid, x),
            y: Field::from_raw(grid, y),
            z: self.fft.inverse_real(&bz),
        }
    }

    /// Spectral coefficients of `N(n) = -∇·(n B(n))`, dealiased, together
    /// with `max|B|` and optionally `‖n‖_{Lᵖ}` from the same samples.
    pub fn evaluate(&self, n_hat: &SpectralField<T>, frame: &ShearFrame<T>, t: T, monitor_p: Option<T>) -> RhsEval<T> {
        let grid = *n_hat.grid();
        let [bx, by, bz] = self.attractive_spectral(n_hat, frame, t);
        let (sx, sy) = self.fft.inverse_real_pair(&bx, &by);
        let (sz, n) = self.fft.inverse_real_pair(&bz, n_hat);
        let monitor = monitor_p.map(|p| lp_norm_of(&n, grid.cell_volume(), p));
        let mut drift = T::zero();
        let mut px = Vec::with_capacity(grid.len());
        let mut py = Vec::with_capacity(grid.len());
        let mut pz = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let (a, b, c) = (sx[i], sy[i], sz[i]);
            drift = drift.max((a * a + b * b + c * c).sqrt());
            px.push(n[i] * a);
            py.push(n[i] * b);
            pz.push(n[i] * c);
        }
        let (fx, fy) = self.fft.forward_real_pair(&px, &py);
        let fz = self.fft.forward_values(&pz);
        let zero = Complex::new(T::zero(), T::zero());
        let mut out = SpectralField::zeros(grid);
        for (i, slot) in out.coeffs_mut().iter_mut().enumerate() {
            let m = grid.mode_of(i);
            if m.is_zero() || grid.is_nyquist(m) || !grid.is_resolved(m) {
                *slot = zero;
                continue;
            }
            let k = frame.effective_wavenumber(&grid, m, t);
            let div = fx.coeffs()[i] * k.xi + fy.coeffs()[i] * k.eta + fz.coeffs()[i] * k.zeta;
            // -i·div
            *slot = Complex::new(div.im, -div.re);
        }
        RhsEval {
            rhs: out,
            max_drift: drift,
            monitor,
        }
    }

    pub fn nonlinear_rhs(&self, n_hat: &SpectralField<T>, frame: &ShearFrame<T>, t: T) -> SpectralField<T> {
        self.evaluate(n_hat, frame, t, None).rhs
    }

    /// Samples of `n` on the frame lattice.
    pub fn synthesize(&self, n_hat: &SpectralField<T>) -> Field<T> {
        self.fft.inverse_real(n_hat)
    }

    /// `max|B(n)|` on the frame lattice.
    pub fn max_drift(&self, n_hat: &SpectralField<T>, frame: &ShearFrame<T>, t: T) -> T {
        self.attractive_field(n_hat, frame, t).max_magnitude()
    }
}

/// One-off form of [`Interaction::attractive_field`].
pub fn attractive_field<T: Real>(n_hat: &SpectralField<T>, frame: &ShearFrame<T>, t: T) -> VectorField<T> {
    Interaction::new(*n_hat.grid()).attractive_field(n_hat, frame, t)
}

/// One-off form of [`Interaction::nonlinear_rhs`].
pub fn nonlinear_rhs<T: Real>(n_hat: &SpectralField<T>, frame: &ShearFrame<T>, t: T) -> SpectralField<T> {
    Interaction::new(*n_hat.grid()).nonlinear_rhs(n_hat, frame, t)
}
