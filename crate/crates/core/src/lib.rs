//! Shear-frame pseudo-spectral solver for fractional Keller–Segel in a
//! Couette flow, with numerical checks of the Green's-function estimates.
//!
//! The solver modules are generic over [`scalar::Real`]; the aliases below
//! fix them to `f64`, which is what the diagnostics, estimates and I/O use.

pub mod diagnostics;
pub mod estimates;
pub mod interaction;
pub mod io;
pub mod propagator;
pub mod quadrature;
pub mod scalar;
pub mod spectral;
pub mod symbol;
pub mod timestepper;

pub type Grid = spectral::GridSpec<f64>;
pub type RealField = spectral::Field<f64>;
pub type Spectrum = spectral::SpectralField<f64>;
pub type Fft = spectral::Fft3<f64>;
pub type Flow = symbol::FlowParams<f64>;
pub type Freq = symbol::FreqPoint<f64>;
pub type Quadrature = symbol::QuadratureConfig<f64>;
pub type Frame = propagator::ShearFrame<f64>;
pub type State = propagator::SimState<f64>;
pub type Steps = timestepper::StepConfig<f64>;
pub type Run = timestepper::RunResult<f64>;
