//! Experiment configuration and binary snapshots.
//!
//! Configuration files are plain `key = value` lines with dotted section
//! names; `#` starts a comment. Lengths accept a `pi` suffix (`8pi`), and
//! per-axis keys take either one value or three separated by commas.
//!
//! ```text
//! grid.n = 64
//! grid.box = 8pi
//! flow.A = 100
//! flow.alpha = 1.5
//! init.kind = gaussian
//! init.mass = 120
//! init.sigma = 1.5
//! time.T = 5
//! ```
//!
//! Snapshots store frame-lattice samples:
//!
//! ```text
//! "CKS1" | version u32 | n u32×3 | box f64×3 | t | alpha | A | t_ref | samples f64…
//! ```
//!
//! all little-endian, samples row-major with `z` fastest.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::diagnostics::{NormsConfig, SuppressionConfig};
use crate::estimates::{CheckFamily, SuiteConfig};
use crate::propagator::{ShearFrame, SimState};
use crate::spectral::{Field, GridSpec};
use crate::symbol::FlowParams;
use crate::timestepper::{monitor_column, RunOptions, StepConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{key}: {msg}")]
    Validation { key: String, msg: String },
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        key: key.to_string(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Gaussian,
    Modes,
    File,
}

impl InitKind {
    fn name(self) -> &'static str {
        match self {
            InitKind::Gaussian => "gaussian",
            InitKind::Modes => "modes",
            InitKind::File => "file",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitConfig {
    pub kind: InitKind,
    pub mass: f64,
    pub sigma: f64,
    /// Defaults to the box centre.
    pub center: Option<[f64; 3]>,
    pub seed: u64,
    /// Number of random Fourier modes for `modes`.
    pub modes: usize,
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeConfig {
    pub t_end: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    pub cfl: f64,
    pub record_every: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectConfig {
    pub blowup_factor: f64,
    pub lp_monitor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Snapshot cadence in time units; 0 keeps only the final snapshot.
    pub snapshot_every: f64,
    /// `(s, p)` pairs for `‖Λˢn‖_{Lᵖ}` columns.
    pub fractional: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub shears: Vec<f64>,
    pub decay_ratio: f64,
}

/// Parameters for the `kernel` subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub derivs: Vec<[u32; 3]>,
    pub times: Vec<f64>,
    pub shears: Vec<f64>,
    pub n: [usize; 3],
    pub box_factor: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: [usize; 3],
    pub box_len: [f64; 3],
    pub shear: f64,
    pub alpha: f64,
    pub init: InitConfig,
    pub time: TimeConfig,
    pub detect: DetectConfig,
    pub output: OutputConfig,
    pub suite: SuiteConfig,
    pub kernel: KernelConfig,
    pub sweep: SweepConfig,
}

impl ExperimentConfig {
    pub fn grid(&self) -> GridSpec<f64> {
        GridSpec::new(self.n, self.box_len).expect("validated grid")
    }

    pub fn flow(&self) -> FlowParams<f64> {
        FlowParams::new(self.shear, self.alpha).expect("validated flow")
    }

    pub fn flow_with_shear(&self, shear: f64) -> Result<FlowParams<f64>, ConfigError> {
        FlowParams::new(shear, self.alpha).map_err(|e| invalid("flow.A", e.to_string()))
    }

    pub fn step_config(&self) -> StepConfig<f64> {
        StepConfig::new(
            self.time.dt_max,
            self.time.cfl,
            self.time.dt_min,
            self.detect.blowup_factor,
            self.detect.lp_monitor,
        )
        .expect("validated step settings")
    }

    pub fn run_options(&self, linear_only: bool) -> RunOptions {
        RunOptions {
            linear_only,
            norms: NormsConfig {
                fractional: self.output.fractional.clone(),
            },
        }
    }

    pub fn suppression(&self) -> SuppressionConfig {
        SuppressionConfig {
            monitor: monitor_column(self.detect.lp_monitor).expect("validated monitor"),
            decay_ratio: self.sweep.decay_ratio,
        }
    }

    /// Overrides both the initial-data and the estimates seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.init.seed = seed;
        self.suite.seed = seed;
    }

    /// Every key with its value, in a form [`parse_config`] reads back.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let f3 = |v: [f64; 3]| format!("{},{},{}", v[0], v[1], v[2]);
        let u3 = |v: [usize; 3]| format!("{},{},{}", v[0], v[1], v[2]);
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let derivs = |v: &[[u32; 3]]| {
            v.iter()
                .map(|d| format!("{}{}{}", d[0], d[1], d[2]))
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("grid.n", u3(self.n));
        kv("grid.box", f3(self.box_len));
        kv("flow.A", self.shear.to_string());
        kv("flow.alpha", self.alpha.to_string());
        kv("init.kind", self.init.kind.name().to_string());
        kv("init.mass", self.init.mass.to_string());
        kv("init.sigma", self.init.sigma.to_string());
        if let Some(c) = self.init.center {
            kv("init.center", f3(c));
        }
        kv("init.seed", self.init.seed.to_string());
        kv("init.modes", self.init.modes.to_string());
        if let Some(p) = &self.init.file {
            kv("init.file", p.display().to_string());
        }
        kv("time.T", self.time.t_end.to_string());
        kv("time.dt_max", self.time.dt_max.to_string());
        kv("time.dt_min", self.time.dt_min.to_string());
        kv("time.cfl", self.time.cfl.to_string());
        kv("time.record_every", self.time.record_every.to_string());
        kv("detect.blowup_factor", self.detect.blowup_factor.to_string());
        kv("detect.lp_monitor", self.detect.lp_monitor.to_string());
        kv("output.dir", self.output.dir.display().to_string());
        kv("output.snapshot_every", self.output.snapshot_every.to_string());
        kv(
            "output.fractional",
            self.output
                .fractional
                .iter()
                .map(|(a, b)| format!("{a}:{b}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        let su = &self.suite;
        kv(
            "suite.checks",
            su.checks.iter().map(|c| c.name()).collect::<Vec<_>>().join(","),
        );
        kv("suite.alphas", list(&su.alphas));
        kv("suite.seed", su.seed.to_string());
        kv("suite.samples", su.samples.to_string());
        kv("suite.lower_exponents", list(&su.lower_exponents));
        kv("suite.upper_exponents", list(&su.upper_exponents));
        kv("suite.weights", derivs(&su.weights));
        kv("suite.weighted_range", format!("{},{}", su.weighted_range.0, su.weighted_range.1));
        kv("suite.weighted_points", su.weighted_points.to_string());
        kv("suite.exponent_tol", su.exponent_tol.to_string());
        kv("suite.kernel_n", u3(su.kernel_n));
        kv("suite.kernel_box", f3(su.kernel_box));
        kv("suite.kernel_shear_n", u3(su.kernel_shear_n));
        kv("suite.kernel_shear_box", f3(su.kernel_shear_box));
        kv("suite.kernel_points", su.kernel_points.to_string());
        kv("suite.kernel_t_range", format!("{},{}", su.kernel_t_range.0, su.kernel_t_range.1));
        kv(
            "suite.kernel_shear_range",
            format!("{},{}", su.kernel_shear_range.0, su.kernel_shear_range.1),
        );
        kv("suite.kernel_first", derivs(&su.kernel_first));
        kv("suite.kernel_second", derivs(&su.kernel_second));
        kv("suite.kernel_shear_tol", su.kernel_shear_tol.to_string());
        kv("kernel.derivs", derivs(&self.kernel.derivs));
        kv("kernel.t", list(&self.kernel.times));
        kv("kernel.A", list(&self.kernel.shears));
        kv("kernel.n", u3(self.kernel.n));
        kv("kernel.box_factor", f3(self.kernel.box_factor));
        kv("sweep.A", list(&self.sweep.shears));
        kv("sweep.decay_ratio", self.sweep.decay_ratio.to_string());
        s
    }
}

const KEYS: &[&str] = &[
    "grid.n",
    "grid.box",
    "flow.A",
    "flow.alpha",
    "init.kind",
    "init.mass",
    "init.sigma",
    "init.center",
    "init.seed",
    "init.modes",
    "init.file",
    "time.T",
    "time.dt_max",
    "time.dt_min",
    "time.cfl",
    "time.record_every",
    "detect.blowup_factor",
    "detect.lp_monitor",
    "output.dir",
    "output.snapshot_every",
    "output.fractional",
    "suite.checks",
    "suite.alphas",
    "suite.seed",
    "suite.samples",
    "suite.lower_exponents",
    "suite.upper_exponents",
    "suite.weights",
    "suite.weighted_range",
    "suite.weighted_points",
    "suite.exponent_tol",
    "suite.kernel_n",
    "suite.kernel_box",
    "suite.kernel_shear_n",
    "suite.kernel_shear_box",
    "suite.kernel_points",
    "suite.kernel_t_range",
    "suite.kernel_shear_range",
    "suite.kernel_first",
    "suite.kernel_second",
    "suite.kernel_shear_tol",
    "kernel.derivs",
    "kernel.t",
    "kernel.A",
    "kernel.n",
    "kernel.box_factor",
    "sweep.A",
    "sweep.decay_ratio",
];

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

/// Raw `key → (value, line)` pairs with syntax checks only.
fn parse_pairs(text: &str) -> Result<Vec<(String, String, usize)>, ConfigError> {
    let mut out: Vec<(String, String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(ConfigError::Parse {
                line,
                msg: format!("expected key = value, found '{content}'"),
            });
        };
        let key = k.trim();
        let valid_key = key.split('.').count() == 2
            && key
                .split('.')
                .all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'));
        if !valid_key {
            return Err(ConfigError::Parse {
                line,
                msg: format!("malformed key '{key}' (expected section.name)"),
            });
        }
        if out.iter().any(|(k2, _, _)| k2 == key) {
            return Err(ConfigError::Parse {
                line,
                msg: format!("duplicate key '{key}'"),
            });
        }
        out.push((key.to_string(), v.trim().to_string(), line));
    }
    Ok(out)
}

struct Values {
    pairs: Vec<(String, String, usize)>,
}

impl Values {
    fn get(&self, key: &str) -> Option<(&str, usize)> {
        self.pairs
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, l)| (v.as_str(), *l))
    }

    fn parse<T>(&self, key: &str, f: impl Fn(&str) -> Option<T>, what: &str) -> Result<Option<T>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some((v, line)) => f(v).map(Some).ok_or_else(|| ConfigError::Parse {
                line,
                msg: format!("{key}: cannot read '{v}' as {what}"),
            }),
        }
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.parse(key, parse_real, "a number")
    }

    fn usize(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.parse(key, |v| v.parse().ok(), "a non-negative integer")
    }

    fn u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.parse(key, |v| v.parse().ok(), "an unsigned integer")
    }

    fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.parse(key, |v| split_list(v).map(parse_real).collect(), "a list of numbers")
    }

    fn f64_3(&self, key: &str) -> Result<Option<[f64; 3]>, ConfigError> {
        self.parse(
            key,
            |v| {
                let xs: Option<Vec<f64>> = split_list(v).map(parse_real).collect();
                triple(xs?)
            },
            "one or three numbers",
        )
    }

    fn usize_3(&self, key: &str) -> Result<Option<[usize; 3]>, ConfigError> {
        self.parse(
            key,
            |v| {
                let xs: Option<Vec<usize>> = split_list(v).map(|s| s.parse().ok()).collect();
                triple(xs?)
            },
            "one or three integers",
        )
    }

    fn pair(&self, key: &str) -> Result<Option<(f64, f64)>, ConfigError> {
        self.parse(
            key,
            |v| {
                let xs: Option<Vec<f64>> = split_list(v).map(parse_real).collect();
                match xs?.as_slice() {
                    [a, b] => Some((*a, *b)),
                    _ => None,
                }
            },
            "two numbers",
        )
    }

    fn derivs(&self, key: &str) -> Result<Option<Vec<[u32; 3]>>, ConfigError> {
        self.parse(key, |v| split_list(v).map(parse_multi_index).collect(), "multi-indices like 100,011")
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn triple<T: Copy>(xs: Vec<T>) -> Option<[T; 3]> {
    match xs.as_slice() {
        [a] => Some([*a; 3]),
        [a, b, c] => Some([*a, *b, *c]),
        _ => None,
    }
}

/// A decimal number, `inf`, or a number times `pi` (`8pi`, `2*pi`, `pi`).
fn parse_real(v: &str) -> Option<f64> {
    let v = v.trim();
    if let Some(head) = v.strip_suffix("pi") {
        let head = head.trim().trim_end_matches('*').trim();
        let k = if head.is_empty() { 1.0 } else { head.parse::<f64>().ok()? };
        return Some(k * PI);
    }
    v.parse().ok()
}

fn parse_multi_index(v: &str) -> Option<[u32; 3]> {
    let digits: Vec<u32> = v.chars().map(|c| c.to_digit(10)).collect::<Option<_>>()?;
    match digits.as_slice() {
        [a, b, c] => Some([*a, *b, *c]),
        _ => None,
    }
}

fn parse_fractional(v: &str) -> Option<Vec<(f64, f64)>> {
    split_list(v)
        .map(|item| {
            let (s, p) = item.split_once(':')?;
            Some((parse_real(s)?, parse_real(p)?))
        })
        .collect()
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let pairs = parse_pairs(text)?;
    for (k, _, _) in &pairs {
        if !KEYS.contains(&k.as_str()) {
            return Err(invalid(k, "unknown key"));
        }
    }
    let v = Values { pairs };

    let n = v.usize_3("grid.n")?.ok_or_else(|| invalid("grid.n", "required"))?;
    if n.iter().any(|&k| k < 8 || k % 2 != 0) {
        return Err(invalid("grid.n", "each axis must be an even count >= 8"));
    }
    let box_len = v.f64_3("grid.box")?.unwrap_or([2.0 * PI; 3]);
    if box_len.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(invalid("grid.box", "lengths must be positive"));
    }
    let shear = v.f64("flow.A")?.unwrap_or(0.0);
    if !(shear >= 0.0 && shear.is_finite()) {
        return Err(invalid("flow.A", "A must be finite and >= 0"));
    }
    let alpha = v.f64("flow.alpha")?.unwrap_or(1.5);
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(invalid("flow.alpha", "alpha must lie in (1,2]"));
    }

    let kind = match v.get("init.kind").map(|(s, _)| s) {
        None | Some("gaussian") => InitKind::Gaussian,
        Some("modes") => InitKind::Modes,
        Some("file") => InitKind::File,
        Some(other) => return Err(invalid("init.kind", format!("'{other}' is not one of gaussian|modes|file"))),
    };
    let mass = v.f64("init.mass")?.unwrap_or(1.0);
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(invalid("init.mass", "mass must be positive"));
    }
    let sigma = v.f64("init.sigma")?.unwrap_or(1.0);
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid("init.sigma", "sigma must be positive"));
    }
    let center = v.f64_3("init.center")?;
    let init_seed = v.u64("init.seed")?.unwrap_or(0);
    let modes = v.usize("init.modes")?.unwrap_or(8);
    if kind == InitKind::Modes && modes == 0 {
        return Err(invalid("init.modes", "need at least one mode"));
    }
    let file = v.get("init.file").map(|(s, _)| PathBuf::from(s));
    if kind == InitKind::File && file.is_none() {
        return Err(invalid("init.file", "required when init.kind = file"));
    }

    let t_end = v.f64("time.T")?.ok_or_else(|| invalid("time.T", "required"))?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(invalid("time.T", "T must be positive"));
    }
    let dt_max = v.f64("time.dt_max")?.unwrap_or(0.01);
    let dt_min = v.f64("time.dt_min")?.unwrap_or(1e-10);
    if !(dt_min > 0.0 && dt_min <= dt_max && dt_max.is_finite()) {
        return Err(invalid("time.dt_max", "need 0 < time.dt_min <= time.dt_max"));
    }
    let cfl = v.f64("time.cfl")?.unwrap_or(0.5);
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(invalid("time.cfl", "cfl must lie in (0,1]"));
    }
    let record_every = v.f64("time.record_every")?.unwrap_or(t_end / 100.0);
    if !(record_every > 0.0 && record_every.is_finite()) {
        return Err(invalid("time.record_every", "must be positive"));
    }

    let blowup_factor = v.f64("detect.blowup_factor")?.unwrap_or(10.0);
    if !(blowup_factor > 1.0 && blowup_factor.is_finite()) {
        return Err(invalid("detect.blowup_factor", "must exceed 1"));
    }
    let lp_monitor = v.f64("detect.lp_monitor")?.unwrap_or(4.0);
    if monitor_column(lp_monitor).is_none() {
        return Err(invalid("detect.lp_monitor", "must be 1, 2, 4 or inf"));
    }

    let dir = v.get("output.dir").map(|(s, _)| PathBuf::from(s)).unwrap_or_else(|| PathBuf::from("out"));
    let snapshot_every = v.f64("output.snapshot_every")?.unwrap_or(0.0);
    if !(snapshot_every >= 0.0 && snapshot_every.is_finite()) {
        return Err(invalid("output.snapshot_every", "must be >= 0"));
    }
    let fractional = v
        .parse("output.fractional", parse_fractional, "s:p pairs")?
        .unwrap_or_else(|| vec![(0.4, 2.0)]);
    for &(s, p) in &fractional {
        if !(s >= 0.0 && p >= 1.0) {
            return Err(invalid("output.fractional", "need s >= 0 and p >= 1"));
        }
    }

    let mut suite = SuiteConfig::default();
    if let Some((s, line)) = v.get("suite.checks") {
        suite.checks = split_list(s)
            .map(|c| c.parse::<CheckFamily>())
            .collect::<Result<_, _>>()
            .map_err(|e| ConfigError::Parse {
                line,
                msg: e.to_string(),
            })?;
    }
    if let Some(a) = v.f64_list("suite.alphas")? {
        if a.iter().any(|&x| !(x > 1.0 && x <= 2.0)) {
            return Err(invalid("suite.alphas", "alpha must lie in (1,2]"));
        }
        suite.alphas = a;
    }
    suite.seed = v.u64("suite.seed")?.unwrap_or(suite.seed);
    suite.samples = v.usize("suite.samples")?.unwrap_or(suite.samples);
    if suite.samples < 10_000 {
        return Err(invalid("suite.samples", "need at least 10000 samples"));
    }
    if let Some(l) = v.f64_list("suite.lower_exponents")? {
        if l.iter().any(|&x| !(x >= 0.0)) {
            return Err(invalid("suite.lower_exponents", "exponents must be >= 0"));
        }
        suite.lower_exponents = l;
    }
    if let Some(l) = v.f64_list("suite.upper_exponents")? {
        if l.iter().any(|&x| !(x > -1.0 && x < 0.0)) {
            return Err(invalid("suite.upper_exponents", "exponents must lie in (-1,0)"));
        }
        suite.upper_exponents = l;
    }
    suite.weights = v.derivs("suite.weights")?.unwrap_or(suite.weights);
    suite.weighted_range = v.pair("suite.weighted_range")?.unwrap_or(suite.weighted_range);
    check_range("suite.weighted_range", suite.weighted_range)?;
    suite.weighted_points = v.usize("suite.weighted_points")?.unwrap_or(suite.weighted_points);
    if suite.weighted_points < 5 {
        return Err(invalid("suite.weighted_points", "need at least 5 points per fit"));
    }
    suite.exponent_tol = v.f64("suite.exponent_tol")?.unwrap_or(suite.exponent_tol);
    suite.kernel_n = v.usize_3("suite.kernel_n")?.unwrap_or(suite.kernel_n);
    suite.kernel_box = v.f64_3("suite.kernel_box")?.unwrap_or(suite.kernel_box);
    suite.kernel_shear_n = v.usize_3("suite.kernel_shear_n")?.unwrap_or(suite.kernel_shear_n);
    suite.kernel_shear_box = v.f64_3("suite.kernel_shear_box")?.unwrap_or(suite.kernel_shear_box);
    for key in ["suite.kernel_n", "suite.kernel_shear_n"] {
        let nn = if key == "suite.kernel_n" { suite.kernel_n } else { suite.kernel_shear_n };
        if nn.iter().any(|&k| k < 8 || k % 2 != 0) {
            return Err(invalid(key, "each axis must be an even count >= 8"));
        }
    }
    suite.kernel_points = v.usize("suite.kernel_points")?.unwrap_or(suite.kernel_points);
    if suite.kernel_points < 5 {
        return Err(invalid("suite.kernel_points", "need at least 5 points per fit"));
    }
    suite.kernel_t_range = v.pair("suite.kernel_t_range")?.unwrap_or(suite.kernel_t_range);
    check_range("suite.kernel_t_range", suite.kernel_t_range)?;
    suite.kernel_shear_range = v.pair("suite.kernel_shear_range")?.unwrap_or(suite.kernel_shear_range);
    check_range("suite.kernel_shear_range", suite.kernel_shear_range)?;
    suite.kernel_first = v.derivs("suite.kernel_first")?.unwrap_or(suite.kernel_first);
    suite.kernel_second = v.derivs("suite.kernel_second")?.unwrap_or(suite.kernel_second);
    suite.kernel_shear_tol = v.f64("suite.kernel_shear_tol")?.unwrap_or(suite.kernel_shear_tol);

    let kernel = KernelConfig {
        derivs: v.derivs("kernel.derivs")?.unwrap_or_else(|| vec![[1, 0, 0], [0, 1, 0], [0, 0, 1]]),
        times: v.f64_list("kernel.t")?.unwrap_or_else(|| vec![0.25, 1.0, 4.0]),
        shears: v.f64_list("kernel.A")?.unwrap_or_else(|| vec![0.0]),
        n: v.usize_3("kernel.n")?.unwrap_or([128, 128, 128]),
        box_factor: v.f64_3("kernel.box_factor")?.unwrap_or([32.0; 3]),
    };
    if kernel.derivs.iter().any(|d| !(1..=2).contains(&(d[0] + d[1] + d[2]))) {
        return Err(invalid("kernel.derivs", "derivative order must be 1 or 2"));
    }
    if kernel.times.iter().any(|&t| !(t > 0.0)) {
        return Err(invalid("kernel.t", "times must be positive"));
    }
    if kernel.shears.iter().any(|&a| !(a >= 0.0)) {
        return Err(invalid("kernel.A", "A must be >= 0"));
    }

    let sweep = SweepConfig {
        shears: v.f64_list("sweep.A")?.unwrap_or_else(|| vec![0.0, 100.0]),
        decay_ratio: v.f64("sweep.decay_ratio")?.unwrap_or(0.5),
    };
    if sweep.shears.is_empty() || sweep.shears.iter().any(|&a| !(a >= 0.0)) {
        return Err(invalid("sweep.A", "need a non-empty list of A >= 0"));
    }
    if !(sweep.decay_ratio > 0.0 && sweep.decay_ratio <= 1.0) {
        return Err(invalid("sweep.decay_ratio", "must lie in (0,1]"));
    }

    Ok(ExperimentConfig {
        n,
        box_len,
        shear,
        alpha,
        init: InitConfig {
            kind,
            mass,
            sigma,
            center,
            seed: init_seed,
            modes,
            file,
        },
        time: TimeConfig {
            t_end,
            dt_max,
            dt_min,
            cfl,
            record_every,
        },
        detect: DetectConfig {
            blowup_factor,
            lp_monitor,
        },
        output: OutputConfig {
            dir,
            snapshot_every,
            fractional,
        },
        suite,
        kernel,
        sweep,
    })
}

fn check_range(key: &str, r: (f64, f64)) -> Result<(), ConfigError> {
    if r.0 > 0.0 && r.0 < r.1 && r.1.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, "need 0 < lo < hi"))
    }
}

// ---------------------------------------------------------------------------
// Initial data

#[derive(Debug, Error)]
pub enum InitError {
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("snapshot grid {found:?} does not match configured grid {expected:?}")]
    GridMismatch { expected: [usize; 3], found: [usize; 3] },
}

/// Periodic Gaussian of the given mass centred at `center`, using
/// minimum-image distances.
pub fn gaussian_field(grid: GridSpec<f64>, mass: f64, sigma: f64, center: [f64; 3]) -> Field<f64> {
    let l = grid.box_len();
    let norm = mass / (2.0 * PI * sigma * sigma).powf(1.5);
    Field::from_fn(grid, |x| {
        let mut r2 = 0.0;
        for a in 0..3 {
            let mut d = x[a] - center[a];
            d -= l[a] * (d / l[a]).round();
            r2 += d * d;
        }
        norm * (-r2 / (2.0 * sigma * sigma)).exp()
    })
}

/// Positive field `(M/V)(1 + Σ a_j cos(k_j·x + φ_j))` with `Σ|a_j| ≤ 1/2`
/// and low random wavenumbers.
pub fn random_modes_field(grid: GridSpec<f64>, mass: f64, modes: usize, seed: u64) -> Field<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<([f64; 3], f64, f64)> = (0..modes)
        .map(|_| {
            let k = [0, 1, 2].map(|a| rng.gen_range(-3i64..=3) as f64 * grid.wavenumber_unit(a));
            (k, rng.gen::<f64>(), rng.gen_range(0.0..2.0 * PI))
        })
        .collect();
    let total: f64 = terms.iter().map(|t| t.1).sum::<f64>().max(f64::MIN_POSITIVE);
    let base = mass / grid.volume();
    Field::from_fn(grid, |x| {
        let s: f64 = terms
            .iter()
            .map(|(k, a, phi)| 0.5 * a / total * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2] + phi).cos())
            .sum();
        base * (1.0 + s)
    })
}

pub fn initial_field(cfg: &ExperimentConfig) -> Result<Field<f64>, InitError> {
    let grid = cfg.grid();
    let init = &cfg.init;
    Ok(match init.kind {
        InitKind::Gaussian => {
            let c = init.center.unwrap_or(cfg.box_len.map(|l| 0.5 * l));
            gaussian_field(grid, init.mass, init.sigma, c)
        }
        InitKind::Modes => random_modes_field(grid, init.mass, init.modes, init.seed),
        InitKind::File => {
            let path = init.file.as_ref().expect("validated init.file");
            let snap = Snapshot::read(path)?;
            if snap.grid.n() != cfg.n {
                return Err(InitError::GridMismatch {
                    expected: cfg.n,
                    found: snap.grid.n(),
                });
            }
            Field::new(grid, snap.samples).map_err(|e| SnapshotError::Format(e.to_string()))?
        }
    })
}

// ---------------------------------------------------------------------------
// Snapshots

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"CKS1";
pub const SNAPSHOT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 12 + 24 + 32;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad snapshot: {0}")]
    Format(String),
    #[error("snapshot version {found}, expected {expected}")]
    Version { expected: u32, found: u32 },
}

/// Frame-lattice samples plus everything needed to rebuild the state.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub grid: GridSpec<f64>,
    pub t: f64,
    pub alpha: f64,
    pub shear: f64,
    pub t_ref: f64,
    pub samples: Vec<f64>,
}

impl Snapshot {
    pub fn from_state(state: &SimState<f64>) -> Result<Self, SnapshotError> {
        let field = state
            .frame_samples()
            .map_err(|e| SnapshotError::Format(format!("cannot synthesise state: {e}")))?;
        let flow = state.frame().flow();
        Ok(Self {
            grid: *state.grid(),
            t: state.t(),
            alpha: flow.alpha(),
            shear: flow.shear(),
            t_ref: state.frame().t_ref(),
            samples: field.into_values(),
        })
    }

    pub fn to_state(&self) -> Result<SimState<f64>, SnapshotError> {
        let bad = |e: String| SnapshotError::Format(e);
        let flow = FlowParams::new(self.shear, self.alpha).map_err(|e| bad(e.to_string()))?;
        let frame = ShearFrame::new(self.t_ref, flow).map_err(|e| bad(e.to_string()))?;
        let field = Field::new(self.grid, self.samples.clone()).map_err(|e| bad(e.to_string()))?;
        SimState::new(frame, field.to_spectral(), self.t).map_err(|e| bad(e.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.samples.len());
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        for n in self.grid.n() {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        for l in self.grid.box_len() {
            out.extend_from_slice(&l.to_le_bytes());
        }
        for v in [self.t, self.alpha, self.shear, self.t_ref] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.samples {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let fmt = |m: String| SnapshotError::Format(m);
        if bytes.len() < HEADER_LEN {
            return Err(fmt(format!("truncated header: {} bytes, need {HEADER_LEN}", bytes.len())));
        }
        if &bytes[0..4] != SNAPSHOT_MAGIC {
            return Err(fmt(format!("bad magic {:?}", &bytes[0..4])));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let version = u32_at(4);
        if version != SNAPSHOT_VERSION {
            return Err(SnapshotError::Version {
                expected: SNAPSHOT_VERSION,
                found: version,
            });
        }
        let n = [u32_at(8), u32_at(12), u32_at(16)].map(|v| v as usize);
        let box_len = [f64_at(20), f64_at(28), f64_at(36)];
        let [t, alpha, shear, t_ref] = [f64_at(44), f64_at(52), f64_at(60), f64_at(68)];
        let grid = GridSpec::new(n, box_len).map_err(|e| fmt(e.to_string()))?;
        let count = n[0]
            .checked_mul(n[1])
            .and_then(|v| v.checked_mul(n[2]))
            .ok_or_else(|| fmt("dimension overflow".into()))?;
        let expected = HEADER_LEN + 8 * count;
        if bytes.len() != expected {
            return Err(fmt(format!(
                "payload length mismatch: file has {} bytes, header implies {expected}",
                bytes.len()
            )));
        }
        let samples = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self {
            grid,
            t,
            alpha,
            shear,
            t_ref,
            samples,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), SnapshotError> {
        fs::write(path, self.to_bytes()).map_err(|source| SnapshotError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, SnapshotError> {
        let bytes = fs::read(path).map_err(|source| SnapshotError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

pub fn write_snapshot(state: &SimState<f64>, path: &Path) -> Result<(), SnapshotError> {
    Snapshot::from_state(state)?.write(path)
}

pub fn read_snapshot(path: &Path) -> Result<SimState<f64>, SnapshotError> {
    Snapshot::read(path)?.to_state()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "grid.n = 32\nflow.A = 10\nflow.alpha = 1.5\ntime.T = 1\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.n, [32; 3]);
        assert_eq!(c.box_len, [2.0 * PI; 3]);
        assert_eq!(c.time.dt_max, 0.01);
        assert_eq!(c.time.record_every, 0.01);
        assert_eq!(c.detect.lp_monitor, 4.0);
        assert_eq!(c.init.kind, InitKind::Gaussian);
        assert_eq!(c.suite, SuiteConfig::default());
    }

    #[test]
    fn echo_round_trips() {
        let text = format!("{MINIMAL}grid.box = 8pi, 4pi, 2*pi\ninit.center = 1,2,3\nsuite.checks =\noutput.fractional = 0.4:2, 0.2:4\n");
        let c = parse_config(&text).unwrap();
        assert_eq!(c.box_len, [8.0 * PI, 4.0 * PI, 2.0 * PI]);
        assert!(c.suite.checks.is_empty());
        let again = parse_config(&c.echo()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn validation_messages() {
        let e = parse_config("grid.n = 32\nflow.alpha = 2.5\ntime.T = 1\n").unwrap_err();
        assert!(e.to_string().contains("alpha must lie in (1,2]"), "{e}");
        let e = parse_config(&format!("{MINIMAL}flow.nu = 1\n")).unwrap_err();
        assert!(e.to_string().contains("flow.nu"), "{e}");
        let e = parse_config("grid.n = 32\n\nflow.A = ten\ntime.T = 1\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 3, .. }), "{e}");
        let e = parse_config("grid.n = 32\nthis is not a pair\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 2, .. }));
        assert!(parse_config("flow.A = 1\ntime.T = 1\n").is_err());
    }

    #[test]
    fn snapshot_bytes_round_trip() {
        let grid = GridSpec::new([8, 8, 16], [1.0, 2.0, 3.0]).unwrap();
        let snap = Snapshot {
            grid,
            t: 0.75,
            alpha: 1.5,
            shear: 10.0,
            t_ref: 0.5,
            samples: (0..grid.len()).map(|i| (i as f64).sin() * 1e-3 + 1.0 / 3.0).collect(),
        };
        let bytes = snap.to_bytes();
        assert_eq!(bytes.len(), HEADER_LEN + 8 * grid.len());
        let back = Snapshot::from_bytes(&bytes).unwrap();
        assert_eq!(back, snap);
        for (a, b) in back.samples.iter().zip(&snap.samples) {
            assert_eq!(a.to_bits(), b.to_bits());
        }

        let e = Snapshot::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(e, SnapshotError::Format(_)));
        let mut bumped = bytes.clone();
        bumped[4..8].copy_from_slice(&2u32.to_le_bytes());
        let e = Snapshot::from_bytes(&bumped).unwrap_err();
        assert!(e.to_string().contains("version 2, expected 1"), "{e}");
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(matches!(Snapshot::from_bytes(&bad), Err(SnapshotError::Format(_))));
    }

    #[test]
    fn gaussian_has_requested_mass() {
        let grid = GridSpec::cubic(32, 8.0 * PI).unwrap();
        let f = gaussian_field(grid, 7.0, 1.5, [4.0 * PI; 3]);
        assert!((f.mass() / 7.0 - 1.0).abs() < 1e-12);
        let g = random_modes_field(grid, 3.0, 8, 1);
        assert!((g.mass() / 3.0 - 1.0).abs() < 1e-12);
        assert!(g.min_value() > 0.0);
    }
}
