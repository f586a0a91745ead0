//! Time series of norms, power-law fits and decay exponents.

use std::fmt::Write as _;

use num_complex::Complex;
use thiserror::Error;

use crate::propagator::SimState;
use crate::scalar::{lit, to_f64, Real};
use crate::spectral::{lp_norm_of, Fft3, Field, GridSpec};
use crate::timestepper::{Outcome, StepStatus};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error("{0}")]
    Domain(String),
    #[error("non-positive data at abscissa {x}: value {value}")]
    NonPositiveData { x: f64, value: f64 },
    #[error("fit needs at least 5 samples, found {0}")]
    TooFewSamples(usize),
    #[error("invalid window [{lo}, {hi}]")]
    InvalidWindow { lo: f64, hi: f64 },
    #[error("time {t} does not follow previous sample {prev}")]
    NonIncreasingTime { t: f64, prev: f64 },
    #[error("experiments differ: {0}")]
    MismatchedExperiments(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// Which fractional norms `‖Λˢn‖_{Lᵖ}` to record, as `(s, p)` pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NormsConfig {
    pub fractional: Vec<(f64, f64)>,
}

/// One recorded sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub t: f64,
    pub mass: f64,
    pub min_value: f64,
    pub l1: f64,
    pub l2: f64,
    pub l4: f64,
    pub linf: f64,
    pub fractional: Vec<f64>,
    /// Remap loss accumulated since the previous row.
    pub remap_loss: f64,
    pub max_drift: f64,
    /// Mass-weighted spread per axis in laboratory coordinates.
    pub spread: [f64; 3],
    pub nonfinite: bool,
    /// Set when `min < -1e-3·‖n‖_∞`.
    pub undershoot: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Mass,
    Min,
    L1,
    L2,
    L4,
    LInf,
    Fractional(usize),
    RemapLoss,
    MaxDrift,
    Radius,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries {
    pub fractional: Vec<(f64, f64)>,
    rows: Vec<SeriesRow>,
}

impl TimeSeries {
    pub fn new(cfg: &NormsConfig) -> Self {
        Self {
            fractional: cfg.fractional.clone(),
            rows: Vec::new(),
        }
    }

    pub fn rows(&self) -> &[SeriesRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn last(&self) -> Option<&SeriesRow> {
        self.rows.last()
    }

    pub fn push(&mut self, row: SeriesRow) -> Result<(), DiagnosticsError> {
        if let Some(prev) = self.rows.last() {
            if !(row.t > prev.t) {
                return Err(DiagnosticsError::NonIncreasingTime { t: row.t, prev: prev.t });
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Drops every row at or after `t` (used when resuming).
    pub fn truncate_from(&mut self, t: f64) {
        self.rows.retain(|r| r.t < t);
    }

    pub fn value(row: &SeriesRow, column: Column) -> f64 {
        match column {
            Column::Mass => row.mass,
            Column::Min => row.min_value,
            Column::L1 => row.l1,
            Column::L2 => row.l2,
            Column::L4 => row.l4,
            Column::LInf => row.linf,
            Column::Fractional(i) => row.fractional.get(i).copied().unwrap_or(f64::NAN),
            Column::RemapLoss => row.remap_loss,
            Column::MaxDrift => row.max_drift,
            Column::Radius => row.spread.iter().map(|s| s * s).sum::<f64>().sqrt(),
        }
    }

    pub fn column(&self, column: Column) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.t, Self::value(r, column))).collect()
    }

    /// Index of the fractional column recording `(s, p)`.
    pub fn fractional_index(&self, s: f64, p: f64) -> Option<usize> {
        self.fractional.iter().position(|&(a, b)| a == s && b == p)
    }

    pub fn header(&self) -> String {
        let mut h = String::from("t,mass,min,l1,l2,l4,linf");
        for (s, p) in &self.fractional {
            let _ = write!(h, ",frac_s{s}_p{p}");
        }
        h.push_str(",remap_loss,max_drift,spread_x,spread_y,spread_z,nonfinite,undershoot");
        h
    }

    /// CSV text: one header line, one row per sample, shortest round-trip floats.
    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{},{},{},{},{}", r.t, r.mass, r.min_value, r.l1, r.l2, r.l4, r.linf);
            for v in &r.fractional {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(
                out,
                ",{},{},{},{},{},{},{}",
                r.remap_loss, r.max_drift, r.spread[0], r.spread[1], r.spread[2], r.nonfinite as u8, r.undershoot as u8
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, DiagnosticsError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| DiagnosticsError::Csv("empty input".into()))?;
        let names: Vec<&str> = header.split(',').collect();
        let mut fractional = Vec::new();
        for name in &names {
            if let Some(rest) = name.strip_prefix("frac_s") {
                let (s, p) = rest
                    .split_once("_p")
                    .ok_or_else(|| DiagnosticsError::Csv(format!("bad column {name}")))?;
                let parse = |x: &str| x.parse::<f64>().map_err(|e| DiagnosticsError::Csv(format!("{name}: {e}")));
                fractional.push((parse(s)?, parse(p)?));
            }
        }
        let series = Self {
            fractional,
            rows: Vec::new(),
        };
        if series.header() != header {
            return Err(DiagnosticsError::Csv(format!("unexpected header {header}")));
        }
        let nf = series.fractional.len();
        let mut series = series;
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| DiagnosticsError::Csv(format!("line {}: {e}", lineno + 2)))?;
            if vals.len() != names.len() {
                return Err(DiagnosticsError::Csv(format!(
                    "line {}: expected {} fields, found {}",
                    lineno + 2,
                    names.len(),
                    vals.len()
                )));
            }
            let b = 7 + nf;
            series.push(SeriesRow {
                t: vals[0],
                mass: vals[1],
                min_value: vals[2],
                l1: vals[3],
                l2: vals[4],
                l4: vals[5],
                linf: vals[6],
                fractional: vals[7..b].to_vec(),
                remap_loss: vals[b],
                max_drift: vals[b + 1],
                spread: [vals[b + 2], vals[b + 3], vals[b + 4]],
                nonfinite: vals[b + 5] != 0.0,
                undershoot: vals[b + 6] != 0.0,
            })?;
        }
        Ok(series)
    }
}

/// Evaluates the configured functionals of a state.
#[derive(Debug, Clone)]
pub struct Recorder<T: Real> {
    fft: Fft3<T>,
    cfg: NormsConfig,
}

impl<T: Real> Recorder<T> {
    pub fn new(grid: GridSpec<T>, cfg: NormsConfig) -> Self {
        Self {
            fft: Fft3::new(grid),
            cfg,
        }
    }

    pub fn config(&self) -> &NormsConfig {
        &self.cfg
    }

    /// Builds a row from the state. Norms are read from the frame samples,
    /// which are the laboratory field along sheared coordinates; the shear
    /// map preserves volume so every integral is unchanged.
    pub fn record(&self, state: &SimState<T>, remap_loss: f64, max_drift: f64) -> SeriesRow {
        let grid = *state.grid();
        let n_hat = state.n_hat();
        let field = self.fft.inverse_real(n_hat);
        let v = field.values();
        let cell = grid.cell_volume();
        let norm = |p: f64| to_f64(lp_norm_of(v, cell, lit::<T>(p)));
        let linf = to_f64(lp_norm_of(v, cell, T::infinity()));
        let min_value = to_f64(field.min_value());
        let frame = *state.frame();
        let t = state.t();
        let fractional = self
            .cfg
            .fractional
            .iter()
            .map(|&(s, p)| {
                if s == 0.0 {
                    return norm(p);
                }
                let half_s = lit::<T>(0.5 * s);
                let zero = Complex::new(T::zero(), T::zero());
                let mut lifted = n_hat.clone();
                for (i, c) in lifted.coeffs_mut().iter_mut().enumerate() {
                    let m = grid.mode_of(i);
                    if m.is_zero() {
                        *c = zero;
                    } else {
                        *c = *c * frame.effective_wavenumber(&grid, m, t).norm_sqr().powf(half_s);
                    }
                }
                let p = if p.is_infinite() { T::infinity() } else { lit(p) };
                to_f64(lp_norm_of(self.fft.inverse_real(&lifted).values(), cell, p))
            })
            .collect::<Vec<_>>();
        let spread = lab_spread(state, v);
        let mass = to_f64(n_hat.mass());
        let nonfinite = !(mass.is_finite() && linf.is_finite() && fractional.iter().all(|x| x.is_finite()));
        SeriesRow {
            t: to_f64(t),
            mass,
            min_value,
            l1: norm(1.0),
            l2: norm(2.0),
            l4: norm(4.0),
            linf,
            fractional,
            remap_loss,
            max_drift,
            spread,
            nonfinite,
            undershoot: min_value < -1e-3 * linf,
        }
    }
}

/// Wrapped-normal spread per axis: with `R = |∫n e^{2πi x_a/L_a}| / ∫n`,
/// `σ_a = (L_a/2π)·sqrt(-2 ln R)`. Laboratory `x` of frame sample
/// `(x', y, z)` is `x' + A(t - t_ref)y`.
fn lab_spread<T: Real>(state: &SimState<T>, v: &[T]) -> [f64; 3] {
    let grid = *state.grid();
    let shift = to_f64(state.frame().shift_at(state.t()));
    let len = grid.box_len().map(to_f64);
    let mut acc = [(0.0f64, 0.0f64); 3];
    let mut total = 0.0;
    for (i, &n) in v.iter().enumerate() {
        let n = to_f64(n);
        let p = grid.position(i).map(to_f64);
        let lab = [p[0] + shift * p[1], p[1], p[2]];
        for a in 0..3 {
            let ph = 2.0 * std::f64::consts::PI * lab[a] / len[a];
            acc[a].0 += n * ph.cos();
            acc[a].1 += n * ph.sin();
        }
        total += n;
    }
    [0, 1, 2].map(|a| {
        if total <= 0.0 {
            return f64::INFINITY;
        }
        let r = (acc[a].0.hypot(acc[a].1) / total).min(1.0);
        if r <= 0.0 {
            f64::INFINITY
        } else {
            len[a] / (2.0 * std::f64::consts::PI) * (-2.0 * r.ln()).sqrt()
        }
    })
}

/// Decay exponent of `‖∂^ϑ n‖_{Lᵖ}`: `-(3/α + 1)(1 - 1/p) - order/α`.
pub fn theoretical_rate(p: f64, alpha: f64, deriv_order: f64) -> Result<f64, DiagnosticsError> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(DiagnosticsError::Domain(format!("p must lie in [2, inf), got {p}")));
    }
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(DiagnosticsError::Domain(format!("alpha must lie in (1,2], got {alpha}")));
    }
    if !(deriv_order >= 0.0 && deriv_order.is_finite()) {
        return Err(DiagnosticsError::Domain(format!("derivative order must be >= 0, got {deriv_order}")));
    }
    Ok(-(3.0 / alpha + 1.0) * (1.0 - 1.0 / p) - deriv_order / alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Abscissa {
    #[default]
    OnePlusT,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub window: (f64, f64),
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub samples: usize,
}

/// Least-squares line through `(ln x, ln y)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<DecayFit, DiagnosticsError> {
    if points.len() < 5 {
        return Err(DiagnosticsError::TooFewSamples(points.len()));
    }
    for &(x, y) in points {
        if !(x > 0.0) || !(y > 0.0) {
            return Err(DiagnosticsError::NonPositiveData { x, value: y });
        }
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(DiagnosticsError::InvalidWindow {
            lo: points[0].0,
            hi: points[0].0,
        });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    Ok(DecayFit {
        window: (lo, hi),
        slope,
        intercept,
        r2,
        samples: points.len(),
    })
}

/// Power-law fit of one column over `window` (inclusive), in `t` or `1+t`.
/// The reported window is in `t`.
pub fn fit_decay(
    series: &TimeSeries,
    column: Column,
    window: (f64, f64),
    abscissa: Abscissa,
) -> Result<DecayFit, DiagnosticsError> {
    if !(window.0 < window.1) {
        return Err(DiagnosticsError::InvalidWindow {
            lo: window.0,
            hi: window.1,
        });
    }
    let pts: Vec<(f64, f64)> = series
        .column(column)
        .into_iter()
        .filter(|&(t, _)| t >= window.0 && t <= window.1)
        .map(|(t, v)| match abscissa {
            Abscissa::OnePlusT => (1.0 + t, v),
            Abscissa::T => (t, v),
        })
        .collect();
    let mut fit = fit_power_law(&pts)?;
    if abscissa == Abscissa::OnePlusT {
        fit.window = (fit.window.0 - 1.0, fit.window.1 - 1.0);
    }
    Ok(fit)
}

/// Last time before the mass-weighted laboratory spread reaches the box.
///
/// The spread of axis `a` is the wrapped-normal standard deviation `σ_a`;
/// the solution is taken to feel the periodic images once `2σ_a` exceeds the
/// half-width `L_a/2` on any axis. Returns the time of the last sample
/// before that happens (the whole series if it never does).
pub fn pre_boundary_end(series: &TimeSeries, box_len: [f64; 3]) -> Option<f64> {
    let mut end = None;
    for r in series.rows() {
        let hit = (0..3).any(|a| !(2.0 * r.spread[a] < 0.5 * box_len[a]));
        if hit {
            break;
        }
        end = Some(r.t);
    }
    end
}

/// Identity of an experiment, used to check that compared runs match.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentKey {
    pub n: [usize; 3],
    pub box_len: [f64; 3],
    pub alpha: f64,
    /// Bit pattern digest of the initial samples.
    pub initial_digest: u64,
}

impl ExperimentKey {
    /// Key of a run started from `initial` at order `alpha`; the digest is
    /// FNV-1a over the sample bit patterns.
    pub fn of(initial: &Field<f64>, alpha: f64) -> Self {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in initial.values() {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        let grid = initial.grid();
        Self {
            n: grid.n(),
            box_len: grid.box_len(),
            alpha,
            initial_digest: h,
        }
    }
}

/// A finished run: key, series and final status.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub key: ExperimentKey,
    pub series: TimeSeries,
    pub status: StepStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuppressionConfig {
    pub monitor: Column,
    /// Required ratio final/initial of the monitored norm in the sheared run.
    pub decay_ratio: f64,
}

impl Default for SuppressionConfig {
    fn default() -> Self {
        Self {
            monitor: Column::L4,
            decay_ratio: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuppressionVerdict {
    pub suppressed: bool,
    pub reasons: Vec<String>,
    /// Final/initial ratio of the monitored norm in the sheared run.
    pub decay_ratio: f64,
}

impl SuppressionVerdict {
    pub fn label(&self) -> &'static str {
        if self.suppressed {
            "suppressed"
        } else {
            "not demonstrated"
        }
    }
}

/// "suppressed" iff the unsheared run blows up and the sheared run ends ok
/// with the monitored norm at most `decay_ratio` times its initial value.
pub fn suppression_verdict(
    still: &RunRecord,
    sheared: &RunRecord,
    cfg: &SuppressionConfig,
) -> Result<SuppressionVerdict, DiagnosticsError> {
    if still.key != sheared.key {
        return Err(DiagnosticsError::MismatchedExperiments(format!(
            "{:?} vs {:?}",
            still.key, sheared.key
        )));
    }
    let mut reasons = Vec::new();
    if still.status.outcome != Outcome::BlowupDetected {
        reasons.push(format!("reference run ended {} (initial data subcritical?)", still.status.outcome));
    }
    if sheared.status.outcome != Outcome::Ok {
        reasons.push(format!("sheared run ended {} (shear too weak?)", sheared.status.outcome));
    }
    let col = sheared.series.column(cfg.monitor);
    let ratio = match (col.first(), col.last()) {
        (Some(a), Some(b)) if a.1 > 0.0 => b.1 / a.1,
        _ => f64::NAN,
    };
    if !(ratio <= cfg.decay_ratio) {
        reasons.push(format!("sheared run decayed only to {ratio} of its initial value (need {})", cfg.decay_ratio));
    }
    Ok(SuppressionVerdict {
        suppressed: reasons.is_empty(),
        reasons,
        decay_ratio: ratio,
    })
}
