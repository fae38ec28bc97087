//! `imuchain` command-line front end.
//!
//! Exit codes: 0 success, 1 domain failure (not converged, unreachable,
//! degenerate data), 2 usage or I/O error.

mod commands;
mod config;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "imuchain", version, about = "Kinematic chain estimation from pairs of IMUs")]
struct Cli {
    /// Run configuration (JSON). Defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed for simulated noise; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Primary output file. Standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate IMU streams for a chain and trajectory, writing a JSONL log.
    Simulate(SimulateArgs),
    /// Fit a calibration profile for one IMU from a stationary and a slow-rotation segment.
    Calibrate(CalibrateArgs),
    /// Estimate the relative pose of two IMUs on the same link.
    Estimate(EstimateArgs),
    /// Sweep the excitation frequency and report the recovered length ratio as CSV.
    FreqSweep(FreqSweepArgs),
    /// Build a kinematic model from known joints and estimated links.
    Assemble(AssembleArgs),
    /// Solve inverse kinematics to a point above a target.
    Reach(ReachArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Chain description (JSON).
    #[arg(long)]
    chain: PathBuf,
    /// Trajectory description (JSON).
    #[arg(long)]
    trajectory: PathBuf,
    /// Noise description (JSON); the configuration's noise otherwise.
    #[arg(long)]
    noise: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// IMU log (JSONL).
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    imu: String,
    /// Stationary segment as `start:end` seconds, end exclusive.
    #[arg(long, value_parser = parse_span)]
    stationary: (f64, f64),
    /// Slow-rotation segment as `start:end` seconds, end exclusive.
    #[arg(long, value_parser = parse_span)]
    rotation: (f64, f64),
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// IMU log (JSONL).
    #[arg(long)]
    log: PathBuf,
    /// IMU pair as `A:P`; the estimate is the pose of P in A's frame.
    #[arg(long, value_parser = parse_pair)]
    pair: (String, String),
    /// Calibration profile for A. Identity when omitted.
    #[arg(long)]
    profile_a: Option<PathBuf>,
    /// Calibration profile for P. Identity when omitted.
    #[arg(long)]
    profile_p: Option<PathBuf>,
    /// Per-sample convergence trace (CSV).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FreqSweepArgs {
    /// Comma-separated frequency ratios `f / f_sample`, each in (0, 0.5).
    #[arg(long, value_delimiter = ',', value_parser = parse_f64, default_value = "0.01,0.05,0.1,0.2,0.3,0.4")]
    ratios: Vec<f64>,
    /// Rod length in metres; the configuration's sweep length otherwise.
    #[arg(long)]
    length: Option<f64>,
    /// Also write the chain and trajectory of every sweep point into this directory.
    #[arg(long)]
    setup_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AssembleArgs {
    /// Assembly description (JSON); estimate paths are relative to it.
    #[arg(long)]
    spec: PathBuf,
    /// Also write the model as URDF.
    #[arg(long)]
    urdf: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReachArgs {
    /// Kinematic model (JSON), as written by `assemble`.
    #[arg(long)]
    model: PathBuf,
    /// Target point `x,y,z` in metres.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    target: [f64; 3],
    /// Height of the tool above the target, metres.
    #[arg(long, default_value_t = 0.05, allow_hyphen_values = true)]
    offset_z: f64,
}

/// Why a command failed, and so which exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Domain(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Domain(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Domain(m) => f.write_str(m),
        }
    }
}

impl From<imuchain::Error> for Failure {
    fn from(e: imuchain::Error) -> Self {
        match e {
            imuchain::Error::Io(_) | imuchain::Error::InvalidInput(_) => Failure::Usage(e.to_string()),
            _ => Failure::Domain(e.to_string()),
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Failure::Usage(format!("cannot parse {}: {e}", path.display())))
}

/// Writes to `path`, or to standard output when no path is given.
pub fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Failure::Usage(format!("cannot write to stdout: {e}"))),
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_span(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected `start:end`, got `{s}`"))?;
    let (a, b) = (parse_f64(a)?, parse_f64(b)?);
    if b <= a {
        return Err(format!("empty span `{s}`"));
    }
    Ok((a, b))
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    match s.split_once(':') {
        Some((a, p)) if !a.is_empty() && !p.is_empty() && a != p => Ok((a.to_string(), p.to_string())),
        _ => Err(format!("expected two distinct ids `A:P`, got `{s}`")),
    }
}

fn parse_point(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected `x,y,z`, got `{s}`"));
    }
    Ok([parse_f64(parts[0])?, parse_f64(parts[1])?, parse_f64(parts[2])?])
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    let out = cli.out.as_deref();
    match cli.command {
        Command::Simulate(a) => commands::simulate(&config, &a.chain, &a.trajectory, a.noise.as_deref(), out),
        Command::Calibrate(a) => commands::calibrate(&config, &a.log, &a.imu, a.stationary, a.rotation, out),
        Command::Estimate(a) => commands::estimate(
            &config,
            &a.log,
            (&a.pair.0, &a.pair.1),
            (a.profile_a.as_deref(), a.profile_p.as_deref()),
            a.trace.as_deref(),
            out,
        ),
        Command::FreqSweep(a) => commands::freq_sweep(&config, &a.ratios, a.length, a.setup_dir.as_deref(), out),
        Command::Assemble(a) => commands::assemble(&a.spec, a.urdf.as_deref(), out),
        Command::Reach(a) => commands::reach(&a.model, a.target, a.offset_z, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
