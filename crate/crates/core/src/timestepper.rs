//! Exponential Heun stepping, step-size control and the blow-up detector.
//!
//! With `P` the exact linear propagator over `[t, t+dt]` and `N` the
//! nonlinear term,
//!
//! ```text
//! a     = P[n + dt·N(n, t)]
//! n_new = a + dt/2·(N(a, t+dt) - P[N(n, t)])
//! ```
//!
//! which is second order and integrates the linear part exactly.

use std::fmt;

use thiserror::Error;

use crate::diagnostics::{Column, DiagnosticsError, NormsConfig, Recorder, SeriesRow, TimeSeries};
use crate::interaction::{Interaction, RhsEval};
use crate::propagator::{remap, Propagator, PropagatorError, SimState};
use crate::scalar::{lit, to_f64, Real};
use crate::spectral::{Field, GridSpec, SpectralField};
use crate::symbol::{FlowParams, QuadratureConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error(transparent)]
    Propagator(#[from] PropagatorError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("step size {dt} fell below dt_min = {dt_min}")]
    StepUnderflow { dt: f64, dt_min: f64 },
    #[error("non-finite coefficients at t = {t}")]
    NonFinite { t: f64 },
    #[error("invalid step configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig<T> {
    pub dt_max: T,
    pub cfl: T,
    pub dt_min: T,
    pub blowup_factor: T,
    /// Norm index of the blow-up monitor: 1, 2, 4 or infinity.
    pub lp_monitor: T,
    pub quad: QuadratureConfig<T>,
}

impl<T: Real> StepConfig<T> {
    pub fn new(dt_max: T, cfl: T, dt_min: T, blowup_factor: T, lp_monitor: T) -> Result<Self, StepError> {
        if !(dt_min > T::zero() && dt_min <= dt_max && dt_max.is_finite()) {
            return Err(StepError::InvalidConfig(format!("need 0 < dt_min <= dt_max, got {dt_min}, {dt_max}")));
        }
        if !(cfl > T::zero() && cfl <= T::one()) {
            return Err(StepError::InvalidConfig(format!("cfl must lie in (0,1], got {cfl}")));
        }
        if !(blowup_factor > T::one() && blowup_factor.is_finite()) {
            return Err(StepError::InvalidConfig(format!("blowup_factor must exceed 1, got {blowup_factor}")));
        }
        if monitor_column(to_f64(lp_monitor)).is_none() {
            return Err(StepError::InvalidConfig(format!("lp_monitor must be 1, 2, 4 or inf, got {lp_monitor}")));
        }
        Ok(Self {
            dt_max,
            cfl,
            dt_min,
            blowup_factor,
            lp_monitor,
            quad: QuadratureConfig::default(),
        })
    }

    pub fn with_quadrature(mut self, quad: QuadratureConfig<T>) -> Self {
        self.quad = quad;
        self
    }
}

/// Series column holding the monitored norm.
pub fn monitor_column(p: f64) -> Option<Column> {
    match p {
        p if p == 1.0 => Some(Column::L1),
        p if p == 2.0 => Some(Column::L2),
        p if p == 4.0 => Some(Column::L4),
        p if p == f64::INFINITY => Some(Column::LInf),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    BlowupDetected,
    StepUnderflow,
    NonFinite,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Ok => "ok",
            Outcome::BlowupDetected => "blowup_detected",
            Outcome::StepUnderflow => "step_underflow",
            Outcome::NonFinite => "nonfinite",
        })
    }
}

impl std::str::FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ok" => Ok(Outcome::Ok),
            "blowup_detected" => Ok(Outcome::BlowupDetected),
            "step_underflow" => Ok(Outcome::StepUnderflow),
            "nonfinite" => Ok(Outcome::NonFinite),
            _ => Err(format!("unknown outcome {s}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepStatus {
    pub outcome: Outcome,
    pub detail: String,
    /// Time of the triggering sample (end time for `ok`).
    pub t: f64,
}

impl StepStatus {
    pub fn ok(t: f64) -> Self {
        Self {
            outcome: Outcome::Ok,
            detail: String::new(),
            t,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.outcome == Outcome::Ok
    }
}

/// Advective step candidate `cfl·Δx_min / max(|B|, ε)` capped by `dt_max`.
pub fn cfl_dt<T: Real>(grid: &GridSpec<T>, cfg: &StepConfig<T>, max_drift: T) -> T {
    let eps = T::min_positive_value().sqrt();
    let adv = cfg.cfl * grid.min_spacing() / max_drift.max(eps);
    adv.min(cfg.dt_max)
}

/// `min(dt_max, cfl·Δx_min/max|B|, time to the next remap)`.
///
/// Only the advective candidate is checked against `dt_min`; clipping to the
/// schedule may legitimately produce shorter steps.
pub fn select_dt_with_drift<T: Real>(state: &SimState<T>, cfg: &StepConfig<T>, max_drift: T) -> Result<T, StepError> {
    let dt = cfl_dt(state.grid(), cfg, max_drift);
    if dt < cfg.dt_min {
        return Err(StepError::StepUnderflow {
            dt: to_f64(dt),
            dt_min: to_f64(cfg.dt_min),
        });
    }
    Ok(match state.frame().next_remap_time(state.grid()) {
        Some(tr) if tr > state.t() => dt.min(tr - state.t()),
        _ => dt,
    })
}

pub fn select_dt<T: Real>(state: &SimState<T>, cfg: &StepConfig<T>) -> Result<T, StepError> {
    let drift = Interaction::new(*state.grid()).max_drift(state.n_hat(), state.frame(), state.t());
    select_dt_with_drift(state, cfg, drift)
}

/// Reusable stepping machinery for one grid.
pub struct Stepper<T: Real> {
    prop: Propagator<T>,
    inter: Interaction<T>,
    linear_only: bool,
    monitor_p: T,
}

impl<T: Real> Stepper<T> {
    pub fn new(grid: GridSpec<T>, cfg: &StepConfig<T>, linear_only: bool) -> Self {
        Self {
            prop: Propagator::new(grid, cfg.quad),
            inter: Interaction::new(grid),
            linear_only,
            monitor_p: cfg.lp_monitor,
        }
    }

    /// Nonlinear term, drift and monitored norm at the given state.
    pub fn evaluate(&self, state: &SimState<T>) -> RhsEval<T> {
        if self.linear_only {
            let grid = *state.grid();
            let n = self.inter.synthesize(state.n_hat());
            RhsEval {
                rhs: SpectralField::zeros(grid),
                max_drift: T::zero(),
                monitor: Some(n.lp_norm(self.monitor_p)),
            }
        } else {
            self.inter.evaluate(state.n_hat(), state.frame(), state.t(), Some(self.monitor_p))
        }
    }

    /// One exponential Heun step of length `dt` (the caller guarantees no
    /// remap instant lies strictly inside). `n0` is `N(state)`.
    pub fn step_with(&mut self, state: &SimState<T>, n0: &SpectralField<T>, dt: T) -> Result<SimState<T>, StepError> {
        let t0 = state.t();
        let t1 = t0 + dt;
        self.step_to(state, n0, t1)
    }

    fn step_to(&mut self, state: &SimState<T>, n0: &SpectralField<T>, t1: T) -> Result<SimState<T>, StepError> {
        let t0 = state.t();
        let dt = t1 - t0;
        if !(dt > T::zero()) {
            return Err(StepError::InvalidConfig(format!("step must advance time, got dt = {dt}")));
        }
        let frame = *state.frame();
        if self.linear_only {
            let out = self.prop.apply(&frame, t0, t1, state.n_hat())?;
            return self.finish(state, out, t1);
        }
        let predictor = self.prop.apply(&frame, t0, t1, &state.n_hat().add(&n0.scale(dt)).expect("same grid"))?;
        let n1 = self.inter.nonlinear_rhs(&predictor, &frame, t1);
        let pn0 = self.prop.apply(&frame, t0, t1, n0)?;
        let half = dt * lit(0.5);
        let mut out = predictor;
        for ((c, a), b) in out.coeffs_mut().iter_mut().zip(n1.coeffs()).zip(pn0.coeffs()) {
            *c = *c + (*a - *b) * half;
        }
        self.finish(state, out, t1)
    }

    fn finish(&self, state: &SimState<T>, out: SpectralField<T>, t1: T) -> Result<SimState<T>, StepError> {
        if !out.is_finite() {
            return Err(StepError::NonFinite { t: to_f64(t1) });
        }
        Ok(SimState::new(*state.frame(), out, t1)?)
    }

    /// Convenience single step computing `N(state)` internally.
    pub fn step(&mut self, state: &SimState<T>, dt: T) -> Result<SimState<T>, StepError> {
        let n0 = self.evaluate(state).rhs;
        self.step_with(state, &n0, dt)
    }
}

/// One step from a fresh stepper (see [`Stepper::step`]).
pub fn step<T: Real>(state: &SimState<T>, dt: T, cfg: &StepConfig<T>) -> Result<SimState<T>, StepError> {
    Stepper::new(*state.grid(), cfg, false).step(state, dt)
}

/// Scans a series: non-finite rows win, then the first row whose monitored
/// norm exceeds `blowup_factor` times the first row's.
pub fn detect_blowup<T: Real>(series: &TimeSeries, cfg: &StepConfig<T>) -> StepStatus {
    let col = monitor_column(to_f64(cfg.lp_monitor)).unwrap_or(Column::L4);
    let factor = to_f64(cfg.blowup_factor);
    if let Some(r) = series.rows().iter().find(|r| r.nonfinite || !TimeSeries::value(r, col).is_finite()) {
        return StepStatus {
            outcome: Outcome::NonFinite,
            detail: format!("non-finite sample at t = {}", r.t),
            t: r.t,
        };
    }
    let Some(first) = series.rows().first() else {
        return StepStatus::ok(0.0);
    };
    let base = TimeSeries::value(first, col);
    for r in series.rows() {
        let v = TimeSeries::value(r, col);
        if v > factor * base {
            return StepStatus {
                outcome: Outcome::BlowupDetected,
                detail: format!("monitored norm {v} exceeds {factor} x initial {base} at t = {}", r.t),
                t: r.t,
            };
        }
    }
    StepStatus::ok(series.rows().last().map_or(0.0, |r| r.t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub linear_only: bool,
    pub norms: NormsConfig,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            linear_only: false,
            norms: NormsConfig {
                fractional: vec![(0.4, 2.0)],
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult<T> {
    pub series: TimeSeries,
    pub state: SimState<T>,
    pub status: StepStatus,
    pub steps: usize,
    pub remaps: usize,
}

/// Runs from `t = 0` with the frame anchored at the initial time.
pub fn run<T: Real>(
    initial: &Field<T>,
    flow: FlowParams<T>,
    cfg: &StepConfig<T>,
    t_end: T,
    record_every: T,
    opts: &RunOptions,
) -> Result<RunResult<T>, StepError> {
    let min = initial.min_value();
    if min < lit(-1e-12) {
        log::warn!("initial data has negative values (min {min})");
    }
    let state = SimState::from_field(initial, flow, T::zero())?;
    run_from(state, TimeSeries::new(&opts.norms), cfg, t_end, record_every, opts, |_, _| {})
}

/// Continues a run from `state`, appending to `series`. Records fall on the
/// absolute instants `k·record_every`; `on_record` sees every recorded state.
///
/// Numerical breakdown never surfaces as `Err`: it ends the run with the
/// matching status. Errors are reserved for invalid inputs.
pub fn run_from<T: Real, F: FnMut(&SimState<T>, &SeriesRow)>(
    mut state: SimState<T>,
    mut series: TimeSeries,
    cfg: &StepConfig<T>,
    t_end: T,
    record_every: T,
    opts: &RunOptions,
    mut on_record: F,
) -> Result<RunResult<T>, StepError> {
    if !(t_end > state.t()) {
        return Err(StepError::InvalidConfig(format!("end time {t_end} must exceed start time {}", state.t())));
    }
    if !(record_every > T::zero()) {
        return Err(StepError::InvalidConfig(format!("record_every must be positive, got {record_every}")));
    }
    let grid = *state.grid();
    let recorder = Recorder::new(grid, opts.norms.clone());
    let mut stepper = Stepper::new(grid, cfg, opts.linear_only);
    let factor = cfg.blowup_factor;
    let mut record_index = next_record_index(state.t(), record_every);
    let mut pending_loss = 0.0f64;
    let mut steps = 0usize;
    let mut remaps = 0usize;

    let mut eval = stepper.evaluate(&state);
    let start_t = to_f64(state.t());
    let needs_first = series.last().map_or(true, |r| r.t < start_t);
    if needs_first {
        let row = recorder.record(&state, 0.0, to_f64(eval.max_drift));
        on_record(&state, &row);
        series.push(row)?;
    }
    let initial_monitor = {
        let col = monitor_column(to_f64(cfg.lp_monitor)).unwrap_or(Column::L4);
        lit::<T>(TimeSeries::value(&series.rows()[0], col))
    };

    let status = loop {
        if state.t() >= t_end {
            break StepStatus::ok(to_f64(state.t()));
        }
        let dt_cfl = if opts.linear_only { cfg.dt_max } else { cfl_dt(&grid, cfg, eval.max_drift) };
        if dt_cfl < cfg.dt_min {
            break StepStatus {
                outcome: Outcome::StepUnderflow,
                detail: format!("step {dt_cfl} below dt_min {} (max|B| = {})", cfg.dt_min, eval.max_drift),
                t: to_f64(state.t()),
            };
        }
        let next_record = record_every * crate::scalar::from_usize(record_index);
        let next_remap = state.frame().next_remap_time(&grid).unwrap_or(T::infinity());
        let target = t_end.min(next_record).min(next_remap);
        let t1 = if state.t() + dt_cfl >= target { target } else { state.t() + dt_cfl };

        let next = match stepper.step_to(&state, &eval.rhs, t1) {
            Ok(s) => s,
            Err(StepError::NonFinite { t }) => {
                break StepStatus {
                    outcome: Outcome::NonFinite,
                    detail: format!("non-finite coefficients at t = {t}"),
                    t,
                };
            }
            Err(e) => return Err(e),
        };
        state = next;
        steps += 1;

        if state.t() == next_remap {
            let r = remap(&state)?;
            pending_loss += to_f64(r.loss);
            state = r.state;
            remaps += 1;
        }
        eval = stepper.evaluate(&state);
        let monitor = eval.monitor.unwrap_or(T::nan());
        let recording = state.t() == next_record || state.t() == t_end;
        let blown = monitor > factor * initial_monitor;
        let broken = !monitor.is_finite() || !eval.rhs.is_finite();
        if recording || blown || broken {
            let row = recorder.record(&state, pending_loss, to_f64(eval.max_drift));
            pending_loss = 0.0;
            on_record(&state, &row);
            series.push(row)?;
            if state.t() == next_record {
                record_index += 1;
            }
        }
        if broken {
            break StepStatus {
                outcome: Outcome::NonFinite,
                detail: format!("non-finite monitor at t = {}", state.t()),
                t: to_f64(state.t()),
            };
        }
        if blown {
            break StepStatus {
                outcome: Outcome::BlowupDetected,
                detail: format!(
                    "monitored norm {monitor} exceeds {factor} x initial {initial_monitor} at t = {}",
                    state.t()
                ),
                t: to_f64(state.t()),
            };
        }
    };
    Ok(RunResult {
        series,
        state,
        status,
        steps,
        remaps,
    })
}

/// Smallest `k ≥ 1` with `k·record_every > t` (up to rounding).
fn next_record_index<T: Real>(t: T, record_every: T) -> usize {
    let q = to_f64(t / record_every);
    let k = (q + 1e-9).floor() as usize + 1;
    k.max(1)
}
