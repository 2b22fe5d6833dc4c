//! Command-line front end.
//!
//! Machine outputs go to files under `--out-dir`; stdout carries one-line
//! summaries. Every artifact embeds the crate version, the command, the resolved
//! configuration and the seed. `--threads` only sizes the worker pool and is not
//! part of the recorded configuration.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::covariance::{gram, psd_check, psd_counterexample_search, Hurst, Kernel, KernelId, PSD_TOLERANCE};
use crate::error::{Error, Result};
use crate::flows::{self, Flow};
use crate::properties::{run_suite, SuiteConfig};
use crate::sampler::{self, JitterPolicy};
use crate::set_families::SetFamily;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SCHEMA_VERSION: u32 = 1;

/// Default `H` list of `suite` when no config file is given.
pub const DEFAULT_SUITE_HURST: [f64; 5] = [0.2, 0.3, 0.4, 0.5, 0.9];

#[derive(Parser, Debug)]
#[command(name = "sifbm", version, about = "Set-indexed fractional Brownian motion experiments")]
pub struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving output files (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads; 0 picks the number of available cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Gram matrix of a set family and its PSD report.
    Gram(GramArgs),
    /// Exact Gaussian samples on a set family.
    Sample(SampleArgs),
    /// Random search for a non-PSD Gram matrix.
    PsdProbe(ProbeArgs),
    /// Samples projected along a flow.
    Flow(FlowArgs),
    /// Hölder exponent estimate from flow paths.
    Holder(HolderArgs),
    /// Runs the property suite.
    Suite(SuiteArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct GramArgs {
    /// Set family JSON.
    #[arg(long)]
    pub family: PathBuf,
    #[arg(long, default_value = "sifbm")]
    pub kernel: KernelId,
    #[arg(long)]
    pub hurst: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub family: PathBuf,
    #[arg(long, default_value = "sifbm")]
    pub kernel: KernelId,
    #[arg(long)]
    pub hurst: f64,
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct ProbeArgs {
    #[arg(long)]
    pub hurst: f64,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Maximum number of random families tried.
    #[arg(long, default_value_t = 10_000)]
    pub budget: u64,
    #[arg(long, default_value_t = 8)]
    pub family_size_max: usize,
    #[arg(long, default_value = "sifbm")]
    pub kernel: KernelId,
}

/// Flow source: a knot file or a linear flow `t ↦ [0, αt]`.
#[derive(Args, Debug, Serialize)]
#[group(required = true, multiple = false)]
pub struct FlowSource {
    /// Flow JSON with a `knots` list of `[t, corner]` pairs.
    #[arg(long)]
    pub flow: Option<PathBuf>,
    /// Comma-separated slopes of a linear flow.
    #[arg(long, value_delimiter = ',')]
    pub linear: Option<Vec<f64>>,
}

impl FlowSource {
    fn load(&self) -> Result<Flow> {
        match (&self.flow, &self.linear) {
            (Some(path), _) => Flow::from_json(&read(path)?),
            (None, Some(alpha)) => Flow::linear(alpha.clone()),
            (None, None) => Err(Error::Argument("a flow file or --linear is required".into())),
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct FlowArgs {
    #[command(flatten)]
    pub source: FlowSource,
    #[arg(long)]
    pub hurst: f64,
    /// Number of grid points.
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
    #[arg(long, default_value_t = 4)]
    pub replicates: usize,
    /// Use the grid where `θ` is uniform instead of uniform `t`.
    #[arg(long)]
    pub invert: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct HolderArgs {
    /// Flow CSV (`t,theta,r0,…`) whose replicate columns are the paths.
    #[arg(long, conflicts_with_all = ["flow", "linear"])]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub flow: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub linear: Option<Vec<f64>>,
    /// Required when sampling from a flow.
    #[arg(long)]
    pub hurst: Option<f64>,
    #[arg(long, default_value_t = 4096)]
    pub grid: usize,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct SuiteArgs {
    /// Suite config JSON; defaults to the built-in `H` list.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Serialize)]
struct RunInfo<'a, C: Serialize> {
    version: &'static str,
    command: &'static str,
    schema_version: u32,
    seed: u64,
    config: &'a C,
}

impl<C: Serialize> RunInfo<'_, C> {
    fn value(&self) -> Value {
        serde_json::to_value(self).expect("run info serializes")
    }

    fn csv_line(&self) -> String {
        format!("# run={}\n", serde_json::to_string(self).expect("run info serializes"))
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(dir, name, &text)
}

fn load_family(path: &Path) -> Result<SetFamily> {
    SetFamily::from_json(&read(path)?)
}

/// Whether an error stems from user input rather than a numerical failure.
fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::Json(_)
            | Error::Io(_)
            | Error::Argument(_)
            | Error::InvalidSet(_)
            | Error::InvalidFamily(_)
            | Error::InvalidFlow(_)
            | Error::Hurst { .. }
            | Error::Context(_)
    )
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot build thread pool: {e}");
            return 2;
        }
    };
    let mut summary = Vec::new();
    let result = pool.install(|| execute(&cli, &mut summary));
    let _ = out.write_all(&summary);
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if is_input_error(&e) {
                2
            } else {
                1
            }
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

fn execute(cli: &Cli, out: &mut Vec<u8>) -> Result<i32> {
    let dir = cli.out_dir.as_path();
    let seed = cli.seed;
    match &cli.command {
        Command::Gram(a) => {
            let run = RunInfo { version: VERSION, command: "gram", schema_version: SCHEMA_VERSION, seed, config: a };
            let family = load_family(&a.family)?;
            let g = gram(&family, &Kernel::from_id(a.kernel, a.hurst)?)?;
            let report = psd_check(&g, PSD_TOLERANCE)?;
            let csv = write(dir, "gram.csv", &(run.csv_line() + &g.to_csv(&family.labels())))?;
            let json = write_json(
                dir,
                "gram_report.json",
                &json!({ "run": run.value(), "gram": g.to_json(), "psd": report }),
            )?;
            writeln!(
                out,
                "gram: n={} kernel={} psd={} min_eigenvalue={:e} -> {}, {}",
                g.n(),
                a.kernel,
                report.psd,
                report.min_eigenvalue,
                csv.display(),
                json.display()
            )?;
            Ok(0)
        }
        Command::Sample(a) => {
            let run = RunInfo { version: VERSION, command: "sample", schema_version: SCHEMA_VERSION, seed, config: a };
            let family = load_family(&a.family)?;
            let g = gram(&family, &Kernel::from_id(a.kernel, a.hurst)?)?;
            let e = sampler::sample(&g, a.replicates, seed, JitterPolicy::default())?;
            let csv = write(dir, "samples.csv", &(run.csv_line() + &e.to_csv(&family.labels())))?;
            let json = write_json(dir, "samples.json", &json!({ "run": run.value(), "ensemble": e.metadata() }))?;
            writeln!(
                out,
                "sample: {} replicates x {} sets, jitter={:e} -> {}, {}",
                e.replicates(),
                e.columns(),
                e.jitter,
                csv.display(),
                json.display()
            )?;
            Ok(0)
        }
        Command::PsdProbe(a) => {
            let run =
                RunInfo { version: VERSION, command: "psd-probe", schema_version: SCHEMA_VERSION, seed, config: a };
            let h = Hurst::any(a.hurst)?;
            let outcome = psd_counterexample_search(a.kernel, h, a.dim, a.family_size_max, a.budget, seed)?;
            let body = match &outcome.witness {
                Some(w) => json!({
                    "run": run.value(),
                    "found": true,
                    "trials_run": outcome.trials_run,
                    "trial": w.trial,
                    "min_eigenvalue": w.min_eigenvalue,
                    "relative_min_eigenvalue": w.relative_min_eigenvalue,
                    "family": w.family.to_doc(),
                }),
                None => json!({ "run": run.value(), "found": false, "trials_run": outcome.trials_run, "witness": "none" }),
            };
            let path = write_json(dir, "psd_probe.json", &body)?;
            match &outcome.witness {
                Some(w) => writeln!(
                    out,
                    "psd-probe: witness at trial {} with {} sets, relative min eigenvalue {:e} -> {}",
                    w.trial,
                    w.family.len(),
                    w.relative_min_eigenvalue,
                    path.display()
                )?,
                None => writeln!(out, "psd-probe: none in {} trials -> {}", outcome.trials_run, path.display())?,
            }
            Ok(0)
        }
        Command::Flow(a) => {
            let run = RunInfo { version: VERSION, command: "flow", schema_version: SCHEMA_VERSION, seed, config: a };
            let flow = a.source.load()?;
            let h = Hurst::any(a.hurst)?;
            let ts = if a.invert {
                flows::invert_time_change(&flow, a.grid)?
            } else {
                flows::uniform_grid(a.grid)?
            };
            let sample = flows::sample_along_flow(&flow, &ts, h, a.replicates, seed)?;
            let residual = sample.flow_cov_residual(h);
            let csv = write(dir, "flow.csv", &(run.csv_line() + &sample.to_csv()))?;
            let json = write_json(
                dir,
                "flow_report.json",
                &json!({
                    "run": run.value(),
                    "flow": flow.to_doc(),
                    "flow_cov_max_abs_deviation": residual,
                    "ensemble": sample.ensemble.metadata(),
                }),
            )?;
            writeln!(
                out,
                "flow: {} points x {} replicates, flow covariance residual {:e} -> {}, {}",
                ts.len(),
                a.replicates,
                residual,
                csv.display(),
                json.display()
            )?;
            Ok(0)
        }
        Command::Holder(a) => {
            let run = RunInfo { version: VERSION, command: "holder", schema_version: SCHEMA_VERSION, seed, config: a };
            let paths = holder_paths(a, seed)?;
            let refs: Vec<&[f64]> = paths.iter().map(Vec::as_slice).collect();
            let pooled = flows::holder_estimate(&refs)?;
            let per_path = refs
                .iter()
                .map(|p| flows::holder_estimate(&[p]).map(|e| e.exponent))
                .collect::<Result<Vec<_>>>()?;
            let mean = per_path.iter().sum::<f64>() / per_path.len() as f64;
            let path = write_json(
                dir,
                "holder.json",
                &json!({ "run": run.value(), "mean_exponent": mean, "per_path": per_path, "pooled": pooled }),
            )?;
            writeln!(
                out,
                "holder: mean exponent {mean:.4} over {} paths (pooled {:.4}) -> {}",
                per_path.len(),
                pooled.exponent,
                path.display()
            )?;
            Ok(0)
        }
        Command::Suite(a) => {
            let config = match &a.config {
                Some(path) => SuiteConfig::from_json(&read(path)?)?,
                None => {
                    let mut c = SuiteConfig::with_hurst(DEFAULT_SUITE_HURST.to_vec());
                    c.seed = seed;
                    c
                }
            };
            let run =
                RunInfo { version: VERSION, command: "suite", schema_version: SCHEMA_VERSION, seed: config.seed, config: &config };
            let outcome = run_suite(&config)?;
            let path = write_json(
                dir,
                "suite_report.json",
                &json!({ "run": run.value(), "exit_code": outcome.exit_code, "reports": outcome.reports }),
            )?;
            write!(out, "{}", outcome.table())?;
            writeln!(out, "suite: exit {} -> {}", outcome.exit_code, path.display())?;
            Ok(outcome.exit_code)
        }
    }
}

fn holder_paths(a: &HolderArgs, seed: u64) -> Result<Vec<Vec<f64>>> {
    if let Some(input) = &a.input {
        return read_flow_csv(&read(input)?);
    }
    let source = FlowSource { flow: a.flow.clone(), linear: a.linear.clone() };
    let flow = source.load()?;
    let h = Hurst::any(a.hurst.ok_or_else(|| Error::Argument("--hurst is required with a flow".into()))?)?;
    let ts = flows::invert_time_change(&flow, a.grid)?;
    let sample = flows::sample_along_flow(&flow, &ts, h, a.replicates, seed)?;
    Ok((0..a.replicates).map(|r| sample.path(r).to_vec()).collect())
}

/// Replicate columns (`r0, r1, …`) of a flow CSV; `#` lines are skipped.
pub fn read_flow_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Config("empty CSV".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    let cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with('r') && h[1..].parse::<usize>().is_ok())
        .map(|(i, _)| i)
        .collect();
    if cols.is_empty() {
        return Err(Error::Config("CSV has no replicate columns".into()));
    }
    let mut paths = vec![Vec::new(); cols.len()];
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(Error::Config(format!("CSV row {} has {} fields", row + 1, fields.len())));
        }
        for (k, &c) in cols.iter().enumerate() {
            let v = fields[c]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("CSV row {}: {e}", row + 1)))?;
            paths[k].push(v);
        }
    }
    Ok(paths)
}
