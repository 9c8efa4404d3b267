use std::path::{Path, PathBuf};

use envelofit::baseline::{design_fir, filter_zero_delay, FilterKind, Window};
use envelofit::bench::{run_mse_experiment, run_scaling, BenchConfig, ScalingSpec};
use envelofit::io::{read_json, read_signal_csv, write_json, write_rows_csv};
use envelofit::peaks::{default_prominence, detect_peaks};
use envelofit::pipeline::{decompose_basic, decompose_debiased, PipelineParams};
use envelofit::synth::{generate_trial, TrialSpec};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::output::{OutputFormat, Table};
use crate::{CliError, Command};

/// A command with every parameter resolved. This is what metadata files
/// record and what `replay` executes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Invocation {
    Decompose {
        input: PathBuf,
        fs: Option<f64>,
        debias: bool,
        prefix: String,
        params: PipelineParams,
    },
    Synth {
        spec: TrialSpec,
    },
    Bench {
        config: BenchConfig,
        scaling: Vec<usize>,
    },
    Peaks {
        input: PathBuf,
        fs: Option<f64>,
        min_separation_s: f64,
        min_prominence: Option<f64>,
    },
    Filter {
        input: PathBuf,
        fs: Option<f64>,
        kind: FilterKind,
        cutoffs_hz: Vec<f64>,
        length: usize,
        window: Window,
        prefix: String,
    },
}

#[derive(Debug, Clone)]
pub struct RunContext {
    pub output_dir: PathBuf,
    pub format: OutputFormat,
    pub quiet: bool,
}

#[derive(Serialize, Deserialize)]
struct RunMeta<T> {
    tool: String,
    version: String,
    format: OutputFormat,
    invocation: Invocation,
    results: T,
}

fn input_path(path: &Path) -> Result<PathBuf, CliError> {
    // absolute, so that replay works from any working directory
    std::fs::canonicalize(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "signal".to_string())
}

impl Invocation {
    pub fn from_command(command: &Command, seed: u64) -> Result<Self, CliError> {
        Ok(match command {
            Command::Decompose(a) => {
                let mut params = a.pipeline.resolve();
                if !a.debias {
                    params.coarse = None;
                }
                params.validate()?;
                Invocation::Decompose {
                    input: input_path(&a.input)?,
                    fs: a.fs,
                    debias: a.debias,
                    prefix: a.prefix.clone().unwrap_or_else(|| stem_of(&a.input)),
                    params,
                }
            }
            Command::Synth(a) => {
                let spec = a.resolve(seed);
                spec.validate()?;
                Invocation::Synth { spec }
            }
            Command::Bench(a) => {
                let trial = TrialSpec {
                    duration_s: a.duration,
                    ..TrialSpec::default()
                };
                let baselines = a
                    .lengths
                    .iter()
                    .map(|&len| {
                        design_fir(FilterKind::Lowpass, &[a.cutoff], trial.fs_hz, len, Window::Hamming).map(|f| f.design)
                    })
                    .collect::<envelofit::Result<Vec<_>>>()?;
                let config = BenchConfig {
                    n_trials: a.trials as usize,
                    base_seed: seed,
                    trial,
                    pipeline: a.pipeline.resolve(),
                    baselines,
                };
                config.pipeline.validate()?;
                config.trial.validate()?;
                Invocation::Bench {
                    config,
                    scaling: a.scaling.clone(),
                }
            }
            Command::Peaks(a) => Invocation::Peaks {
                input: input_path(&a.input)?,
                fs: a.fs,
                min_separation_s: a.min_separation,
                min_prominence: a.min_prominence,
            },
            Command::Filter(a) => Invocation::Filter {
                input: input_path(&a.input)?,
                fs: a.fs,
                kind: a.kind.into(),
                cutoffs_hz: a.cutoff.clone(),
                length: a.length,
                window: a.window.into(),
                prefix: a.prefix.clone().unwrap_or_else(|| stem_of(&a.input)),
            },
            Command::Replay(_) => return Err(CliError::usage("replay cannot be nested")),
        })
    }
}

/// Reads the invocation and output format from a metadata file.
pub fn read_invocation(path: &Path) -> Result<(Invocation, OutputFormat), CliError> {
    let raw: Value = read_json(path)?;
    let parse = |key: &str| {
        raw.get(key)
            .cloned()
            .ok_or_else(|| CliError::usage(format!("{}: missing `{key}`", path.display())))
    };
    let invocation = serde_json::from_value(parse("invocation")?)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let format = serde_json::from_value(parse("format")?)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    Ok((invocation, format))
}

fn write_meta<T: Serialize>(path: &Path, ctx: &RunContext, invocation: &Invocation, results: T) -> Result<(), CliError> {
    let meta = RunMeta {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        format: ctx.format,
        invocation: invocation.clone(),
        results,
    };
    write_json(path, &meta)?;
    Ok(())
}

fn say(ctx: &RunContext, line: impl AsRef<str>) {
    if !ctx.quiet {
        println!("{}", line.as_ref());
    }
}

pub fn execute(invocation: &Invocation, ctx: &RunContext) -> Result<(), CliError> {
    std::fs::create_dir_all(&ctx.output_dir)
        .map_err(|e| CliError::usage(format!("{}: {e}", ctx.output_dir.display())))?;
    match invocation {
        Invocation::Decompose {
            input,
            fs,
            debias,
            prefix,
            params,
        } => decompose(invocation, ctx, input, *fs, *debias, prefix, params),
        Invocation::Synth { spec } => synth(invocation, ctx, spec),
        Invocation::Bench { config, scaling } => bench(invocation, ctx, config, scaling),
        Invocation::Peaks {
            input,
            fs,
            min_separation_s,
            min_prominence,
        } => peaks(invocation, ctx, input, *fs, *min_separation_s, *min_prominence),
        Invocation::Filter {
            input,
            fs,
            kind,
            cutoffs_hz,
            length,
            window,
            prefix,
        } => {
            let y = read_signal_csv(input, *fs)?;
            let f = design_fir(*kind, cutoffs_hz, y.sample_rate_hz(), *length, *window)?;
            let out = filter_zero_delay(&f, &y)?;
            let path = Table::signal(&out).write(&ctx.output_dir, &format!("{prefix}_filtered"), ctx.format)?;
            write_meta(
                &ctx.output_dir.join(format!("{prefix}_filter.json")),
                ctx,
                invocation,
                json!({ "design": f.design, "group_delay": f.group_delay() }),
            )?;
            say(ctx, format!("wrote {}", path.display()));
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn decompose(
    invocation: &Invocation,
    ctx: &RunContext,
    input: &Path,
    fs: Option<f64>,
    debias: bool,
    prefix: &str,
    params: &PipelineParams,
) -> Result<(), CliError> {
    let y = read_signal_csv(input, fs)?;
    let d = if debias {
        decompose_debiased(&y, params)?
    } else {
        decompose_basic(&y, params)?
    };
    let dir = &ctx.output_dir;
    Table::signal(&d.smooth).write(dir, &format!("{prefix}_smooth"), ctx.format)?;
    Table::signal(&d.transient).write(dir, &format!("{prefix}_transient"), ctx.format)?;
    let mut env = Table::new()
        .real("t", y.times().collect())
        .real("lower", d.lower_env.samples().to_vec())
        .real("upper", d.upper_env.samples().to_vec());
    if let (Some(cl), Some(cu), Some(tr)) = (&d.coarse_lower, &d.coarse_upper, &d.trend) {
        env = env
            .real("coarse_lower", cl.samples().to_vec())
            .real("coarse_upper", cu.samples().to_vec())
            .real("trend", tr.samples().to_vec());
    }
    env.write(dir, &format!("{prefix}_envelopes"), ctx.format)?;
    let trace = Table::new()
        .index("iter", d.final_trace.iter().map(|p| p.iter as u64).collect())
        .real("residual", d.final_trace.iter().map(|p| p.residual).collect());
    trace.write(dir, &format!("{prefix}_trace"), ctx.format)?;
    write_meta(
        &dir.join(format!("{prefix}_diagnostics.json")),
        ctx,
        invocation,
        json!({
            "samples": y.len(),
            "sample_rate_hz": y.sample_rate_hz(),
            "all_converged": d.all_converged(),
            "stages": d.diagnostics,
        }),
    )?;
    for s in &d.diagnostics {
        say(
            ctx,
            format!(
                "{:<13} iters {:>6}  residual {:.3e}  tol {:.3e}  {}",
                s.stage,
                s.summary.iters,
                s.summary.residual_inf,
                s.summary.tol,
                if s.summary.converged { "ok" } else { "NOT CONVERGED" }
            ),
        );
    }
    d.ensure_converged()
        .map_err(|e| CliError::numerical(format!("{e}; outputs were written but are not at tolerance")))
}

fn synth(invocation: &Invocation, ctx: &RunContext, spec: &TrialSpec) -> Result<(), CliError> {
    let trial = generate_trial(spec)?;
    let dir = &ctx.output_dir;
    Table::signal(&trial.observation).write(dir, "observation", ctx.format)?;
    Table::signal(&trial.smooth).write(dir, "smooth_truth", ctx.format)?;
    Table::signal(&trial.transient).write(dir, "transient_truth", ctx.format)?;
    write_meta(&dir.join("spec.json"), ctx, invocation, json!({ "samples": trial.observation.len() }))?;
    say(ctx, format!("wrote {} samples (seed {}) to {}", trial.observation.len(), spec.seed, dir.display()));
    Ok(())
}

fn bench(invocation: &Invocation, ctx: &RunContext, config: &BenchConfig, scaling: &[usize]) -> Result<(), CliError> {
    let report = run_mse_experiment(config)?;
    let dir = &ctx.output_dir;
    report.write_to(dir)?;
    write_meta(&dir.join("meta.json"), ctx, invocation, report.meta())?;
    for &i in &report.ordering {
        let t = &report.trials[i];
        let best = t.best_baseline().map_or(String::from("-"), |b| format!("{} {:.5}", b.method, b.mse));
        say(ctx, format!("seed {:>4}  proposed {:.5}  best lti {best}", t.seed, t.proposed_mse));
    }
    say(
        ctx,
        format!("proposed method wins {}/{} trials", report.wins(), report.trials.len()),
    );

    if !scaling.is_empty() {
        let spec = ScalingSpec {
            solver: config.pipeline.solver,
            ..ScalingSpec::default()
        };
        let rows = run_scaling(scaling, &spec)?;
        let body: Vec<Vec<String>> = rows
            .iter()
            .map(|r| vec![r.n.to_string(), r.iters.to_string(), r.per_iter_s.to_string()])
            .collect();
        write_rows_csv(&dir.join("scaling.csv"), &["n", "iters", "per_iter_s"], &body)?;
        for r in &rows {
            say(ctx, format!("n {:>8}  {:.2} us/iter", r.n, r.per_iter_s * 1e6));
        }
    }

    if report.all_converged() {
        Ok(())
    } else {
        Err(CliError::numerical("some solves did not converge; see meta.json"))
    }
}

fn peaks(
    invocation: &Invocation,
    ctx: &RunContext,
    input: &Path,
    fs: Option<f64>,
    min_separation_s: f64,
    min_prominence: Option<f64>,
) -> Result<(), CliError> {
    let t = read_signal_csv(input, fs)?;
    let prominence = min_prominence.unwrap_or_else(|| default_prominence(&t));
    let stats = detect_peaks(&t, min_separation_s, prominence)?;
    let table = Table::new()
        .index("index", stats.peak_indices.iter().map(|&i| i as u64).collect())
        .real("time_s", stats.peak_indices.iter().map(|&i| t.time_at(i)).collect());
    table.write(&ctx.output_dir, "peaks", ctx.format)?;
    write_meta(
        &ctx.output_dir.join("stats.json"),
        ctx,
        invocation,
        json!({
            "count": stats.peak_indices.len(),
            "min_prominence": prominence,
            "mean_interval_s": stats.mean_interval_s,
            "std_interval_s": stats.std_interval_s,
        }),
    )?;
    say(
        ctx,
        format!(
            "{} peaks, mean interval {}, std {}",
            stats.peak_indices.len(),
            stats.mean_interval_s.map_or("-".into(), |v| format!("{v:.4} s")),
            stats.std_interval_s.map_or("-".into(), |v| format!("{v:.4} s")),
        ),
    );
    Ok(())
}
