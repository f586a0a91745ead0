use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use couette_ks::diagnostics::{
    fit_decay, pre_boundary_end, suppression_verdict, theoretical_rate, Abscissa, Column, ExperimentKey, RunRecord,
    TimeSeries,
};
use couette_ks::estimates::{kernel_grid, kernel_l1_norms, run_estimate_suite, KernelTolerance};
use couette_ks::io::{initial_field, load_config, parse_config, read_snapshot, write_snapshot, ExperimentConfig};
use couette_ks::symbol::QuadratureConfig;
use couette_ks::timestepper::{run_from, Outcome, RunResult};

/// Shear-frame Keller–Segel solver and estimate checks.
#[derive(Parser)]
#[command(name = "couette-ks", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (key = value).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides output.dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for initial data and sampling; overrides init.seed and suite.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Drop the chemotactic term.
    #[arg(long, global = true)]
    linear_only: bool,
    /// Continue a run from this snapshot (simulate only).
    #[arg(long, global = true)]
    resume: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its series and snapshots.
    Simulate,
    /// Run the estimates suite.
    Estimates,
    /// Kernel derivative L1 norms over configured times and shears.
    Kernel,
    /// Same initial data at every shear in sweep.A, then suppression verdicts.
    Sweep,
    /// Fitted against theoretical decay exponents from stored series.
    Report,
}

/// Failed checks, written as `name<TAB>detail` lines.
#[derive(Default)]
struct Failures(Vec<(String, String)>);

impl Failures {
    fn push(&mut self, name: impl Into<String>, detail: impl Into<String>) {
        self.0.push((name.into(), detail.into()));
    }

    fn finish(self, out: &Path) -> Result<ExitCode> {
        let mut text = String::new();
        for (n, d) in &self.0 {
            let _ = writeln!(text, "{n}\t{d}");
        }
        fs::write(out.join("failures.txt"), &text).context("writing failures.txt")?;
        if self.0.is_empty() {
            Ok(ExitCode::SUCCESS)
        } else {
            eprint!("{text}");
            Ok(ExitCode::from(2))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let c = &cli.common;
    if c.resume.is_some() && !matches!(cli.command, Command::Simulate) {
        bail!("--resume applies to simulate only");
    }
    let mut cfg = match &c.config {
        Some(p) => load_config(p).with_context(|| format!("loading {}", p.display()))?,
        None if matches!(cli.command, Command::Report) => {
            let dir = c.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let echo = dir.join("config.txt");
            let text = fs::read_to_string(&echo).with_context(|| format!("no --config and cannot read {}", echo.display()))?;
            parse_config(&text).with_context(|| format!("parsing {}", echo.display()))?
        }
        None => bail!("--config is required"),
    };
    if let Some(seed) = c.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &c.out {
        cfg.output.dir = out.clone();
    }
    let out = cfg.output.dir.clone();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    match cli.command {
        Command::Simulate => simulate(&cfg, &out, c.linear_only, c.resume.as_deref()),
        Command::Estimates => estimates(&cfg, &out),
        Command::Kernel => kernel(&cfg, &out),
        Command::Sweep => sweep(&cfg, &out, c.linear_only),
        Command::Report => report(&cfg, &out),
    }
}

fn on_snapshot_grid(t: f64, every: f64) -> bool {
    if every <= 0.0 {
        return false;
    }
    let q = t / every;
    q > 0.5 && (q - q.round()).abs() < 1e-9
}

/// One run into `dir`: config echo, series, snapshots and status.
fn run_into(
    cfg: &ExperimentConfig,
    dir: &Path,
    linear_only: bool,
    resume: Option<&Path>,
) -> Result<(RunResult<f64>, ExperimentKey)> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.txt"), cfg.echo())?;
    let flow = cfg.flow();
    let steps = cfg.step_config();
    let opts = cfg.run_options(linear_only);
    let initial = initial_field(cfg)?;
    let key = ExperimentKey::of(&initial, cfg.alpha);
    let every = cfg.output.snapshot_every;
    let mut snap_err: Option<anyhow::Error> = None;
    let mut on_record = |state: &couette_ks::State, row: &couette_ks::diagnostics::SeriesRow| {
        if on_snapshot_grid(row.t, every) {
            let p = dir.join(format!("snapshot_t{:.6}.cks", row.t));
            if let Err(e) = write_snapshot(state, &p) {
                snap_err.get_or_insert(e.into());
            }
        }
    };
    let result = match resume {
        Some(snap) => {
            let state = read_snapshot(snap).with_context(|| format!("reading {}", snap.display()))?;
            if state.grid().n() != cfg.n || state.frame().flow() != &flow {
                bail!("snapshot {} does not match the configured grid and flow", snap.display());
            }
            let csv_path = dir.join("series.csv");
            let text = fs::read_to_string(&csv_path)
                .with_context(|| format!("resume needs the earlier series at {}", csv_path.display()))?;
            let mut series = TimeSeries::from_csv(&text)?;
            series.truncate_from(state.t());
            run_from(
                state,
                series,
                &steps,
                cfg.time.t_end,
                cfg.time.record_every,
                &opts,
                &mut on_record,
            )?
        }
        None => {
            let state = couette_ks::State::from_field(&initial, flow, 0.0)?;
            let series = TimeSeries::new(&opts.norms);
            run_from(
                state,
                series,
                &steps,
                cfg.time.t_end,
                cfg.time.record_every,
                &opts,
                &mut on_record,
            )?
        }
    };
    if let Some(e) = snap_err {
        return Err(e.context("writing snapshot"));
    }
    fs::write(dir.join("series.csv"), result.series.to_csv())?;
    write_snapshot(&result.state, &dir.join("final.cks"))?;
    fs::write(
        dir.join("status.txt"),
        format!(
            "outcome={}\nt={}\nsteps={}\nremaps={}\ndetail={}\n",
            result.status.outcome, result.status.t, result.steps, result.remaps, result.status.detail
        ),
    )?;
    Ok((result, key))
}

fn simulate(cfg: &ExperimentConfig, out: &Path, linear_only: bool, resume: Option<&Path>) -> Result<ExitCode> {
    let (res, _) = run_into(cfg, out, linear_only, resume)?;
    println!(
        "{} at t = {} after {} steps ({} remaps); series in {}",
        res.status.outcome,
        res.status.t,
        res.steps,
        res.remaps,
        out.join("series.csv").display()
    );
    let mut f = Failures::default();
    if res.status.outcome != Outcome::Ok {
        f.push("simulate", format!("{}: {}", res.status.outcome, res.status.detail));
    }
    f.finish(out)
}

fn estimates(cfg: &ExperimentConfig, out: &Path) -> Result<ExitCode> {
    let report = run_estimate_suite(&cfg.suite);
    fs::write(out.join("estimates.csv"), report.to_csv())?;
    let table = report.to_table();
    fs::write(out.join("estimates.txt"), &table)?;
    print!("{table}");
    let mut f = Failures::default();
    for r in report.failures() {
        f.push(format!("{}/{} {}", r.family.name(), r.name, r.params), r.detail.clone());
    }
    f.finish(out)
}

fn kernel(cfg: &ExperimentConfig, out: &Path) -> Result<ExitCode> {
    let k = &cfg.kernel;
    let q = QuadratureConfig::default();
    let tol = KernelTolerance::default();
    let mut csv = String::from("alpha,A,t,deriv,value,shell_fraction,band_edge,sobolev_ratio,sobolev_bound\n");
    let mut f = Failures::default();
    for &a in &k.shears {
        let flow = cfg.flow_with_shear(a)?;
        for &t in &k.times {
            let res = kernel_grid(t, &flow, k.n, k.box_factor)
                .and_then(|g| kernel_l1_norms(&k.derivs, t, &flow, &g, &tol, &q));
            match res {
                Ok(norms) => {
                    for n in norms {
                        let d = n.deriv;
                        let _ = writeln!(
                            csv,
                            "{},{},{},{}{}{},{:e},{:e},{:e},{:e},{:e}",
                            cfg.alpha,
                            a,
                            t,
                            d[0],
                            d[1],
                            d[2],
                            n.value,
                            n.shell_fraction,
                            n.band_edge,
                            n.sobolev_ratio,
                            n.sobolev_bound
                        );
                        println!("A={a} t={t} d={d:?}: {:.8e}", n.value);
                    }
                }
                Err(e) => f.push(format!("kernel A={a} t={t}"), e.to_string()),
            }
        }
    }
    fs::write(out.join("kernel.csv"), csv)?;
    f.finish(out)
}

fn shear_dir(out: &Path, a: f64) -> PathBuf {
    out.join(format!("A_{a}"))
}

fn sweep(cfg: &ExperimentConfig, out: &Path, linear_only: bool) -> Result<ExitCode> {
    let mut records = Vec::new();
    for &a in &cfg.sweep.shears {
        let mut c = cfg.clone();
        c.shear = a;
        c.flow_with_shear(a)?;
        let dir = shear_dir(out, a);
        c.output.dir = dir.clone();
        let (res, key) = run_into(&c, &dir, linear_only, None)?;
        println!("A={a}: {} at t = {}", res.status.outcome, res.status.t);
        records.push((
            a,
            RunRecord {
                key,
                series: res.series,
                status: res.status,
            },
        ));
    }
    let (a_ref, still) = records
        .iter()
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .expect("non-empty sweep");
    let supp = cfg.suppression();
    let mut csv = String::from("A,outcome,t_end,monitor_ratio,verdict,reasons\n");
    let mut f = Failures::default();
    for (a, rec) in &records {
        if a == a_ref {
            let _ = writeln!(csv, "{a},{},{},,reference,", rec.status.outcome, rec.status.t);
            continue;
        }
        let v = suppression_verdict(still, rec, &supp)?;
        let reasons = v.reasons.join("; ");
        let _ = writeln!(
            csv,
            "{a},{},{},{:e},{},\"{}\"",
            rec.status.outcome,
            rec.status.t,
            v.decay_ratio,
            v.label(),
            reasons.replace('"', "'")
        );
        println!("A={a} vs A={a_ref}: {}", v.label());
        if !v.suppressed {
            f.push(format!("sweep A={a}"), reasons);
        }
    }
    fs::write(out.join("sweep.csv"), csv)?;
    f.finish(out)
}

/// Series files under `out`: `out/series.csv` and `out/*/series.csv`.
fn find_series(out: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    if out.join("series.csv").is_file() {
        found.push(out.join("series.csv"));
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(out)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join("series.csv").is_file())
        .collect();
    subdirs.sort();
    found.extend(subdirs.into_iter().map(|d| d.join("series.csv")));
    Ok(found)
}

fn report(cfg: &ExperimentConfig, out: &Path) -> Result<ExitCode> {
    let mut text = String::new();
    let files = find_series(out)?;
    let _ = writeln!(
        text,
        "{:<28} {:<12} {:>9} {:>9} {:>10} {:>10} {:>8}",
        "series", "column", "from", "to", "fitted", "theory", "r2"
    );
    for path in &files {
        let series = TimeSeries::from_csv(&fs::read_to_string(path)?)?;
        let label = path
            .parent()
            .and_then(|p| p.strip_prefix(out).ok())
            .map(|p| p.display().to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| ".".to_string());
        let alpha = fs::read_to_string(path.with_file_name("config.txt"))
            .ok()
            .and_then(|t| parse_config(&t).ok())
            .map_or(cfg.alpha, |c| c.alpha);
        let (Some(first), Some(end)) = (series.rows().first().map(|r| r.t), pre_boundary_end(&series, cfg.box_len))
        else {
            let _ = writeln!(text, "{label:<28} (no samples before the box is felt)");
            continue;
        };
        let window = (first.max(0.1 * end), end);
        let mut cols: Vec<(String, Column, f64, f64)> = vec![
            ("L2".into(), Column::L2, 2.0, 0.0),
            ("L4".into(), Column::L4, 4.0, 0.0),
        ];
        for (i, &(s, p)) in series.fractional.iter().enumerate() {
            cols.push((format!("Lambda^{s} L{p}"), Column::Fractional(i), p, s));
        }
        for (name, col, p, s) in cols {
            let theory = theoretical_rate(p, alpha, s).map_or(f64::NAN, |v| v);
            match fit_decay(&series, col, window, Abscissa::OnePlusT) {
                Ok(fit) => {
                    let _ = writeln!(
                        text,
                        "{label:<28} {name:<12} {:>9.4} {:>9.4} {:>10.4} {:>10.4} {:>8.5}",
                        fit.window.0, fit.window.1, fit.slope, theory, fit.r2
                    );
                }
                Err(e) => {
                    let _ = writeln!(text, "{label:<28} {name:<12} fit failed: {e}");
                }
            }
        }
    }
    let est = out.join("estimates.txt");
    if est.is_file() {
        let _ = writeln!(text, "\nestimates\n{}", fs::read_to_string(&est)?);
    }
    let sw = out.join("sweep.csv");
    if sw.is_file() {
        let _ = writeln!(text, "\nsweep\n{}", fs::read_to_string(&sw)?);
    }
    fs::write(out.join("report.txt"), &text)?;
    print!("{text}");
    if files.is_empty() && !est.is_file() && !sw.is_file() {
        bail!("nothing to report in {}", out.display());
    }
    Ok(ExitCode::SUCCESS)
}
