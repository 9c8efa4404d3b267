//! Argument definitions and dispatch for the `envelofit` binary.
//!
//! Every command is first resolved into an [`Invocation`] holding fully
//! explicit parameters. The invocation is executed and also written into
//! the command's metadata JSON, which `envelofit replay` accepts to rerun
//! the command bit for bit.

mod commands;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use envelofit::baseline::{FilterKind, Window, DEFAULT_LOWPASS_CUTOFF_HZ};
use envelofit::pipeline::PipelineParams;
use envelofit::synth::{GpParams, TrialSpec};
use envelofit::ErrorKind;

pub use commands::{execute, read_invocation, Invocation, RunContext};
pub use output::OutputFormat;

/// Exit code for numerical failures (non-convergence, indefinite spectra).
pub const EXIT_NUMERICAL: u8 = 1;
/// Exit code for usage, input and output errors.
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_NUMERICAL,
            message: message.into(),
        }
    }
}

impl From<envelofit::Error> for CliError {
    fn from(e: envelofit::Error) -> Self {
        let code = match e.kind() {
            ErrorKind::NoConvergence | ErrorKind::SpectrumNotPositive | ErrorKind::InfeasibleBounds => EXIT_NUMERICAL,
            ErrorKind::LengthMismatch
            | ErrorKind::EmptySignal
            | ErrorKind::NonPositiveParameter
            | ErrorKind::IoOrFormatError => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "envelofit",
    version,
    about = "Split a sampled signal into a smooth component and a transient remainder",
    after_help = "Environment:\n  ENVELOFIT_THREADS  cap on worker threads (default: all cores)"
)]
pub struct Cli {
    /// Base seed for synthetic trials.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Directory receiving all output files (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub output_dir: PathBuf,

    /// Format of signal and table outputs. `bench` always writes CSV tables
    /// and JSON metadata.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,

    /// Suppress the summary printed on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Decompose a `t,value` CSV into smooth and transient components.
    Decompose(DecomposeArgs),
    /// Generate a synthetic smooth + transient trial.
    Synth(SynthArgs),
    /// Compare the decomposition against lowpass filters on synthetic trials.
    Bench(BenchArgs),
    /// Detect beats in a transient signal.
    Peaks(PeaksArgs),
    /// Apply a linear-phase FIR filter with the group delay removed.
    Filter(FilterArgs),
    /// Rerun a command from the metadata JSON it wrote.
    Replay(ReplayArgs),
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be a positive number, got {s}"))
    }
}

fn gp_triple(s: &str) -> Result<GpParams, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [c0, c1, c2] => {
            let p = GpParams {
                c0: *c0,
                c1: *c1,
                c2: *c2,
            };
            p.validate().map_err(|e| e.to_string())?;
            Ok(p)
        }
        _ => Err(format!("expected `c0,c1,c2`, got {s}")),
    }
}

/// Solver and pipeline overrides; unset flags keep the library defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct PipelineArgs {
    /// Data-fit weight of the tight envelopes [default: 50].
    #[arg(long, value_parser = positive_f64)]
    pub lambda0: Option<f64>,
    /// Data-fit weight of the final smoothing stage [default: 0.5].
    #[arg(long, value_parser = positive_f64)]
    pub lambda1: Option<f64>,
    /// Envelope kernel width in samples [default: sigma1 / 4].
    #[arg(long, value_parser = positive_f64)]
    pub sigma0: Option<f64>,
    /// Smoothing kernel width in samples [default: 20].
    #[arg(long, value_parser = positive_f64)]
    pub sigma1: Option<f64>,
    /// Data-fit weight of the coarse envelopes (--debias) [default: 1].
    #[arg(long, value_parser = positive_f64)]
    pub coarse_lambda: Option<f64>,
    /// Kernel width of the coarse envelopes (--debias) [default: 100].
    #[arg(long, value_parser = positive_f64)]
    pub coarse_sigma: Option<f64>,
    /// Douglas-Rachford relaxation, in (0, 1) [default: 0.5].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Douglas-Rachford step size [default: 1].
    #[arg(long, value_parser = positive_f64)]
    pub alpha: Option<f64>,
    /// Residual tolerance relative to max |y| [default: 1e-6].
    #[arg(long, value_parser = positive_f64)]
    pub tol: Option<f64>,
    /// Iteration cap per solve [default: 20000].
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Kernel truncation threshold [default: 1e-3; our choice, not from
    /// the method's description].
    #[arg(long, value_parser = positive_f64)]
    pub tau: Option<f64>,
    /// Diagonal kernel jitter [default: 0.05; our choice, needed for
    /// reliable convergence with the truncated kernel].
    #[arg(long)]
    pub epsilon: Option<f64>,
}

impl PipelineArgs {
    pub fn resolve(&self) -> PipelineParams {
        let mut p = PipelineParams::default();
        if let Some(v) = self.lambda0 {
            p.lambda0 = v;
        }
        if let Some(v) = self.lambda1 {
            p.lambda1 = v;
        }
        if let Some(v) = self.sigma1 {
            p.sigma1 = v;
            p.sigma0 = 0.25 * v;
        }
        if let Some(v) = self.sigma0 {
            p.sigma0 = v;
        }
        let mut coarse = p.coarse.unwrap_or_default();
        if let Some(v) = self.coarse_lambda {
            coarse.lambda = v;
        }
        if let Some(v) = self.coarse_sigma {
            coarse.sigma = v;
        }
        p.coarse = Some(coarse);
        if let Some(v) = self.gamma {
            p.solver.gamma = v;
        }
        if let Some(v) = self.alpha {
            p.solver.alpha = v;
        }
        if let Some(v) = self.tol {
            p.solver.tol = v;
        }
        if let Some(v) = self.max_iters {
            p.solver.max_iters = v;
        }
        if let Some(v) = self.tau {
            p.tau = v;
        }
        if let Some(v) = self.epsilon {
            p.epsilon = v;
        }
        p
    }
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    /// Input CSV with header `t,value`.
    pub input: PathBuf,
    /// Sample rate in Hz; inferred from the time column when omitted.
    #[arg(long, value_parser = positive_f64)]
    pub fs: Option<f64>,
    /// Fit coarse envelopes first and remove their mean as a trend.
    #[arg(long)]
    pub debias: bool,
    /// Output file prefix [default: input file stem].
    #[arg(long)]
    pub prefix: Option<String>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Sample rate in Hz.
    #[arg(long, default_value_t = 10.0, value_parser = positive_f64)]
    pub fs: f64,
    /// Record length in seconds.
    #[arg(long, default_value_t = 200.0, value_parser = positive_f64)]
    pub duration: f64,
    /// Time-warp covariance `c0,c1,c2` [default: 25,500,0.001].
    #[arg(long, value_parser = gp_triple)]
    pub warp: Option<GpParams>,
    /// Magnitude covariance `c0,c1,c2` [default: 25,2500,0.0005].
    #[arg(long, value_parser = gp_triple)]
    pub mag: Option<GpParams>,
    /// Transient covariance `c0,c1,c2` [default: 0.1,10,0.00001].
    #[arg(long, value_parser = gp_triple)]
    pub transient: Option<GpParams>,
}

impl SynthArgs {
    pub fn resolve(&self, seed: u64) -> TrialSpec {
        let d = TrialSpec::default();
        TrialSpec {
            seed,
            fs_hz: self.fs,
            duration_s: self.duration,
            warp: self.warp.unwrap_or(d.warp),
            mag: self.mag.unwrap_or(d.mag),
            transient: self.transient.unwrap_or(d.transient),
        }
    }
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Number of trials; trial i uses seed `--seed + i`.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    /// Record length of each trial in seconds.
    #[arg(long, default_value_t = 200.0, value_parser = positive_f64)]
    pub duration: f64,
    /// Lengths of the Hamming lowpass baselines (odd).
    #[arg(long, value_delimiter = ',', default_values_t = [101usize, 501, 1001, 2001])]
    pub lengths: Vec<usize>,
    /// Cutoff of the lowpass baselines in Hz.
    #[arg(long, default_value_t = DEFAULT_LOWPASS_CUTOFF_HZ, value_parser = positive_f64)]
    pub cutoff: f64,
    /// Also time the solver at these lengths and write scaling.csv.
    #[arg(long, value_delimiter = ',')]
    pub scaling: Vec<usize>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
pub struct PeaksArgs {
    /// Transient CSV with header `t,value`.
    pub input: PathBuf,
    /// Sample rate in Hz; inferred from the time column when omitted.
    #[arg(long, value_parser = positive_f64)]
    pub fs: Option<f64>,
    /// Minimum spacing between beats in seconds.
    #[arg(long, default_value_t = envelofit::peaks::DEFAULT_MIN_SEPARATION_S, value_parser = positive_f64)]
    pub min_separation: f64,
    /// Minimum peak prominence [default: 0.25 x 95th percentile of |t|].
    #[arg(long)]
    pub min_prominence: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindArg {
    Lowpass,
    Bandpass,
}

impl From<KindArg> for FilterKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Lowpass => FilterKind::Lowpass,
            KindArg::Bandpass => FilterKind::Bandpass,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowArg {
    Hamming,
    Rect,
}

impl From<WindowArg> for Window {
    fn from(w: WindowArg) -> Self {
        match w {
            WindowArg::Hamming => Window::Hamming,
            WindowArg::Rect => Window::Rect,
        }
    }
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    /// Input CSV with header `t,value`.
    pub input: PathBuf,
    /// Sample rate in Hz; inferred from the time column when omitted.
    #[arg(long, value_parser = positive_f64)]
    pub fs: Option<f64>,
    /// Filter type.
    #[arg(long, value_enum, default_value_t = KindArg::Lowpass)]
    pub kind: KindArg,
    /// Cutoff in Hz, or `low,high` for a bandpass.
    #[arg(long, value_delimiter = ',', required = true)]
    pub cutoff: Vec<f64>,
    /// Number of taps (odd).
    #[arg(long, default_value_t = 501)]
    pub length: usize,
    /// Window applied to the ideal (sinc) response.
    #[arg(long, value_enum, default_value_t = WindowArg::Hamming)]
    pub window: WindowArg,
    /// Output file prefix [default: input file stem].
    #[arg(long)]
    pub prefix: Option<String>,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    /// Metadata JSON written by an earlier run.
    pub meta: PathBuf,
}

/// Resolves the parsed command line and executes it.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let (invocation, format) = match &cli.command {
        Command::Replay(args) => read_invocation(&args.meta)?,
        other => (Invocation::from_command(other, cli.seed)?, cli.format),
    };
    let ctx = RunContext {
        output_dir: cli.output_dir.clone(),
        format,
        quiet: cli.quiet,
    };
    execute(&invocation, &ctx)
}

/// Applies `ENVELOFIT_THREADS` to the global worker pool.
pub fn configure_threads(value: Option<&str>) -> Result<(), CliError> {
    let Some(raw) = value else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("ENVELOFIT_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(format!("cannot configure thread pool: {e}")))
}
