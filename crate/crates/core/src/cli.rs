//! Command-line interface: argument parsing, output files and exit codes.
//!
//! Exit codes: 0 when everything ran and no check fired, 1 when a run completed with
//! verification events, 2 on usage or runtime errors.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{parse_config, ConfigLayer, FlowName, Format, RunConfig};
use crate::diagnostics::{self as diag, TimeSeries, VerificationEvent};
use crate::error::{Error, Result};
use crate::flow::FlowKind;
use crate::grid_curve::{make_curve, GridCurve};
use crate::par::Execution;
use crate::presets::{self, PresetOutcome};
use crate::renorm::roundtrip_compare;
use crate::runner::{run, RunOutcome};
use crate::stationary;

pub const EXIT_OK: i32 = 0;
pub const EXIT_EVENTS: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "UCMCF_OUT";
const DEFAULT_OUT: &str = "ucmcf-out";

/// At most this many events per check are written to `events.jsonl`; the summary keeps full counts.
pub const EVENTS_PER_CHECK_CAP: usize = 10_000;

#[derive(Debug, Parser)]
#[command(name = "ucmcf", version, about = "Simulate and verify uniformly compressing mean curvature flow")]
pub struct Cli {
    /// Run independent tasks on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Original flow ∂_tη = σ̃ ∂_s²η.
    RunOriginal(RunArgs),
    /// Length-normalized flow.
    RunNormalized(RunArgs),
    /// Regularized flow (needs --epsilon).
    RunRegularized(RunArgs),
    /// Classical curve shortening, as a baseline.
    RunClassical(RunArgs),
    /// Stationary diagnostics on a curve file or descriptor.
    StationaryCheck(StationaryArgs),
    /// Compare the original flow with the normalized flow through τ = −ln L.
    Roundtrip(RunArgs),
    /// Run named presets (`all` for every preset).
    Preset(PresetArgs),
    /// List presets and their checks.
    ListPresets,
    /// Check a stored series against a corrupted copy; exits 1 with one event.
    SelfTest(OutArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct OutArgs {
    /// Output directory (default: $UCMCF_OUT, then ./ucmcf-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML or JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Initial datum, e.g. `circle:1`, `ellipse:2,1`, `perturbed:0.01,3`, `square@1`, `file:PATH`.
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    #[arg(long = "reparam-every")]
    pub reparam_every: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long = "drift-ceiling")]
    pub drift_ceiling: Option<f64>,
    #[arg(long = "length-floor")]
    pub length_floor: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Series format: csv or json.
    #[arg(long)]
    pub format: Option<Format>,
    #[arg(long = "snapshot-every")]
    pub snapshot_every: Option<usize>,
    #[arg(long = "record-every")]
    pub record_every: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stop a normalized run once ‖ξ̃‖ falls below this.
    #[arg(long = "converge-tol")]
    pub converge_tol: Option<f64>,
}

impl RunArgs {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            flow: None,
            init: self.init.clone(),
            n: self.n,
            dim: self.dim,
            dt: self.dt,
            t_end: self.t_end,
            reparam_every: self.reparam_every,
            epsilon: self.epsilon,
            drift_ceiling: self.drift_ceiling,
            length_floor: self.length_floor,
            output_dir: self.out.clone(),
            format: self.format,
            snapshot_every: self.snapshot_every,
            record_every: self.record_every,
            seed: self.seed,
            converge_tol: self.converge_tol,
        }
    }

    pub fn config(&self, flow: FlowName) -> Result<RunConfig> {
        let file = self.config.as_deref().map(ConfigLayer::read).transpose()?;
        parse_config(flow, file, self.layer())
    }
}

#[derive(Debug, Clone, Args)]
pub struct StationaryArgs {
    /// Curve JSON file.
    #[arg(long, conflicts_with = "init")]
    pub curve: Option<PathBuf>,
    /// Initial-datum descriptor, sampled at --n points.
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PresetArgs {
    /// Preset names, or `all`.
    #[arg(required = true)]
    pub names: Vec<String>,
    /// Run presets as this many parallel child processes.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Parse `argv` and run; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = presets::validate_manifests() {
        eprintln!("error: {e}");
        return EXIT_ERROR;
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::available() };
    match &cli.command {
        Cmd::RunOriginal(a) => run_flow(a, FlowName::Original),
        Cmd::RunNormalized(a) => run_flow(a, FlowName::Normalized),
        Cmd::RunRegularized(a) => run_flow(a, FlowName::Regularized),
        Cmd::RunClassical(a) => run_flow(a, FlowName::Classical),
        Cmd::StationaryCheck(a) => stationary_check(a, exec),
        Cmd::Roundtrip(a) => roundtrip(a, exec),
        Cmd::Preset(a) => preset(a, exec, cli.sequential),
        Cmd::ListPresets => {
            for p in presets::PRESETS {
                println!("{:<20} {}", p.name, p.summary);
                println!("{:<20} checks: {}", "", p.checks.join(", "));
            }
            Ok(EXIT_OK)
        }
        Cmd::SelfTest(a) => self_test(&out_dir(a.out.as_deref(), None)),
    }
}

/// `--out`, then the config's output_dir, then `$UCMCF_OUT`, then `./ucmcf-out`.
pub fn out_dir(flag: Option<&Path>, config: Option<&Path>) -> PathBuf {
    flag.or(config)
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn exit_code(events: &[VerificationEvent]) -> i32 {
    if events.is_empty() {
        EXIT_OK
    } else {
        EXIT_EVENTS
    }
}

fn event_counts(events: &[VerificationEvent]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for e in events {
        *m.entry(e.check.to_string()).or_insert(0) += 1;
    }
    m
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// One JSON object per line, capped at [`EVENTS_PER_CHECK_CAP`] per check.
pub fn write_events(path: &Path, events: &[VerificationEvent]) -> Result<usize> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut written = 0;
    for e in events {
        let k = seen.entry(e.check.as_ref()).or_insert(0);
        *k += 1;
        if *k > EVENTS_PER_CHECK_CAP {
            continue;
        }
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
        written += 1;
    }
    w.flush()?;
    Ok(written)
}

pub fn write_series(dir: &Path, series: &TimeSeries, format: Format) -> Result<()> {
    match format {
        Format::Csv => fs::write(dir.join("series.csv"), series.to_csv())?,
        Format::Json => write_json(&dir.join("series.json"), series)?,
    }
    Ok(())
}

/// Series, snapshots, events and summary of one run under `dir`.
pub fn write_run(dir: &Path, out: &RunOutcome, elapsed: f64) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_series(dir, &out.series, out.config.format)?;
    if !out.snapshots.is_empty() {
        let snaps = dir.join("snapshots");
        fs::create_dir_all(&snaps)?;
        for s in &out.snapshots {
            s.curve.write_json(&snaps.join(format!("step_{:08}.json", s.step)))?;
        }
    }
    let written = write_events(&dir.join("events.jsonl"), &out.events)?;
    let last = out.series.last();
    let summary = json!({
        "config": out.config,
        "config_hash": out.config.hash(),
        "termination": out.termination,
        "steps": out.steps,
        "halvings": out.halvings,
        "dt_final": out.dt_final,
        "final_time": out.final_state.time,
        "final_length": last.map(|r| r.l),
        "final_mass": last.map(|r| r.m),
        "oscillation": out.oscillation,
        "event_counts": event_counts(&out.events),
        "events_total": out.events.len(),
        "events_written": written,
        "elapsed_seconds": elapsed,
    });
    write_json(&dir.join("summary.json"), &summary)
}

fn print_events(events: &[VerificationEvent]) {
    for (check, count) in event_counts(events) {
        let worst = events.iter().filter(|e| e.check == check).map(|e| e.magnitude).fold(0.0, f64::max);
        println!("  {check}: {count} events, worst magnitude {worst:.3e}");
    }
}

fn run_flow(args: &RunArgs, flow: FlowName) -> Result<i32> {
    let cfg = args.config(flow)?;
    let dir = out_dir(args.out.as_deref(), cfg.output_dir.as_deref());
    let t = Instant::now();
    let out = run(&cfg)?;
    let elapsed = t.elapsed().as_secs_f64();
    write_run(&dir, &out, elapsed)?;
    println!(
        "{flow} {}: {} steps to t = {:.6}, {:?}, {} events ({elapsed:.2} s) -> {}",
        cfg.init,
        out.steps,
        out.final_state.time,
        out.termination,
        out.events.len(),
        dir.display()
    );
    print_events(&out.events);
    Ok(exit_code(&out.events))
}

fn stationary_check(args: &StationaryArgs, exec: Execution) -> Result<i32> {
    let curve = match (&args.curve, &args.init) {
        (Some(p), _) => GridCurve::read_json(p)?,
        (None, Some(d)) => make_curve(&d.parse()?, args.n, args.dim)?,
        (None, None) => return Err(Error::InvalidConfig("stationary-check needs --curve or --init".into())),
    };
    let report = stationary::analyze(&curve, exec)?;
    let events = report.events(0);
    let dir = out_dir(args.out.out.as_deref(), None);
    fs::create_dir_all(&dir)?;
    write_json(&dir.join("stationary.json"), &json!({ "report": report, "events": events }))?;
    write_events(&dir.join("events.jsonl"), &events)?;
    println!(
        "residual {:.3e}, σ²k CV {:.3e}, planar {}, min curvature {:.3e}, {} events",
        report.residual,
        report.sigma_sq_curvature_cv,
        report.planar,
        report.min_curvature,
        events.len()
    );
    if let Some(fi) = &report.first_integral {
        println!("first integral λ ≈ {:.6e} (spread {:.3e}), −2τ̄³ = {:.6e}", fi.lambda_estimate, fi.lambda_spread, -2.0 * fi.tau_bar.powi(3));
    }
    print_events(&events);
    Ok(exit_code(&events))
}

fn roundtrip(args: &RunArgs, exec: Execution) -> Result<i32> {
    let cfg = args.config(FlowName::Original)?;
    let dir = out_dir(args.out.as_deref(), cfg.output_dir.as_deref());
    fs::create_dir_all(&dir)?;
    let report = roundtrip_compare(&cfg, exec)?;
    write_json(&dir.join("roundtrip.json"), &json!({ "config": cfg, "config_hash": cfg.hash(), "report": report }))?;
    println!(
        "max L² discrepancy {:.3e} over {} original steps ({} normalized)",
        report.max, report.original_steps, report.normalized_steps
    );
    Ok(EXIT_OK)
}

fn preset_names(names: &[String]) -> Result<Vec<&'static str>> {
    let mut out = Vec::new();
    for n in names {
        if n == "all" {
            out.extend(presets::PRESETS.iter().map(|p| p.name));
        } else {
            out.push(presets::find(n)?.name);
        }
    }
    Ok(out)
}

fn preset(args: &PresetArgs, exec: Execution, sequential: bool) -> Result<i32> {
    let names = preset_names(&args.names)?;
    let dir = out_dir(args.out.out.as_deref(), None);
    match args.jobs {
        Some(k) if k > 1 && names.len() > 1 => preset_processes(&names, k, &dir, sequential),
        _ => {
            let mut code = EXIT_OK;
            for name in names {
                code = code.max(run_preset(name, exec, &dir)?);
            }
            Ok(code)
        }
    }
}

fn run_preset(name: &str, exec: Execution, root: &Path) -> Result<i32> {
    let t = Instant::now();
    let out = presets::find(name)?.run(exec)?;
    let elapsed = t.elapsed().as_secs_f64();
    write_preset(&root.join(name), &out, elapsed)?;
    let verdict = if out.passed() { "PASS" } else { "FAIL" };
    println!("{verdict} {name} ({elapsed:.2} s)");
    print_events(&out.events);
    Ok(exit_code(&out.events))
}

pub fn write_preset(dir: &Path, out: &PresetOutcome, elapsed: f64) -> Result<()> {
    fs::create_dir_all(dir)?;
    for r in &out.runs {
        let sub = dir.join(r.label.replace([':', ',', '='], "_"));
        fs::create_dir_all(&sub)?;
        write_series(&sub, &r.outcome.series, r.outcome.config.format)?;
        write_json(&sub.join("config.json"), &json!({ "config": r.outcome.config, "config_hash": r.outcome.config.hash() }))?;
    }
    let written = write_events(&dir.join("events.jsonl"), &out.events)?;
    let summary = json!({
        "preset": out.name,
        "checks": out.checks,
        "passed": out.passed(),
        "metrics": out.metrics,
        "event_counts": out.event_counts(),
        "events_total": out.events.len(),
        "events_written": written,
        "runs": out.runs.iter().map(|r| json!({ "label": r.label, "config_hash": r.outcome.config.hash(), "steps": r.outcome.steps })).collect::<Vec<_>>(),
        "elapsed_seconds": elapsed,
    });
    write_json(&dir.join("summary.json"), &summary)
}

/// One child process per preset, at most `jobs` at a time. The worst child exit code wins.
fn preset_processes(names: &[&str], jobs: usize, root: &Path, sequential: bool) -> Result<i32> {
    let exe = std::env::current_exe()?;
    let mut pending = names.iter();
    let mut running = Vec::new();
    let mut code = EXIT_OK;
    loop {
        while running.len() < jobs {
            let Some(name) = pending.next() else { break };
            let mut cmd = Command::new(&exe);
            if sequential {
                cmd.arg("--sequential");
            }
            cmd.args(["preset", name, "--out"]).arg(root);
            running.push((*name, cmd.spawn()?));
        }
        if running.is_empty() {
            break;
        }
        let (name, mut child) = running.remove(0);
        let status = child.wait()?;
        let c = status.code().unwrap_or(EXIT_ERROR);
        if c == EXIT_ERROR {
            eprintln!("preset {name} failed to run");
        }
        code = code.max(c);
    }
    Ok(code)
}

/// The series of a short shrinking-circle run with the mass of its last row perturbed.
pub fn corrupted_fixture() -> Result<(String, String)> {
    let mut cfg = RunConfig::new(FlowName::Original, "circle:1", 0.01);
    cfg.dt = 1e-3;
    let clean = run(&cfg)?.series.to_csv();
    let mut lines: Vec<String> = clean.lines().map(str::to_string).collect();
    let last = lines.last_mut().ok_or_else(|| Error::InvalidConfig("empty fixture".into()))?;
    let mut fields: Vec<String> = last.split(',').map(str::to_string).collect();
    let m: f64 = fields[1].parse().map_err(|_| Error::InvalidConfig("fixture mass column".into()))?;
    fields[1] = format!("{}", m + 1e-3);
    *last = fields.join(",");
    let mut corrupted = lines.join("\n");
    corrupted.push('\n');
    Ok((clean, corrupted))
}

/// Checks of a stored original-flow series.
pub fn check_original_series(csv: &str) -> Result<Vec<VerificationEvent>> {
    let series = TimeSeries::from_csv(FlowKind::Original, csv)?;
    let mut events = diag::verify_monotone(&series);
    events.extend(diag::extinction_bounds_check(&series));
    Ok(events)
}

fn self_test(dir: &Path) -> Result<i32> {
    let (clean, corrupted) = corrupted_fixture()?;
    let clean_events = check_original_series(&clean)?;
    if !clean_events.is_empty() {
        return Err(Error::InvalidConfig(format!("clean fixture produced {} events", clean_events.len())));
    }
    let events = check_original_series(&corrupted)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("fixture.csv"), &corrupted)?;
    write_events(&dir.join("events.jsonl"), &events)?;
    println!("corrupted fixture: {} events", events.len());
    print_events(&events);
    Ok(exit_code(&events))
}
