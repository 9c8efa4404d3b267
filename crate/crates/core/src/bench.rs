//! Synthetic MSE comparison against LTI lowpass filters, and solver
//! scaling measurements.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{default_baselines, lti_smooth_estimate, FirDesign, FirFilter};
use crate::error::{Error, Result};
use crate::io::{write_json, write_rows_csv};
use crate::kernel::KernelSpec;
use crate::pipeline::{decompose_debiased, Decomposition, PipelineParams, StageDiagnostics};
use crate::signal::{mse, BoxConstraint, Signal};
use crate::solver::{solve_constrained_filter, SolveParams, SolverConfig, TracePoint};
use crate::synth::{TrialGenerator, TrialSpec};

/// Method name of the decomposition pipeline in reports.
pub const PROPOSED: &str = "proposed";

/// Everything needed to rerun an MSE experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n_trials: usize,
    /// Trial `i` uses seed `base_seed + i`.
    pub base_seed: u64,
    /// Signal model; its `seed` field is ignored.
    pub trial: TrialSpec,
    pub pipeline: PipelineParams,
    pub baselines: Vec<FirDesign>,
}

impl BenchConfig {
    /// Default signal model, pipeline and the four Hamming lowpass filters.
    pub fn with_defaults(n_trials: usize, base_seed: u64) -> Result<Self> {
        let trial = TrialSpec::default();
        Ok(Self {
            n_trials,
            base_seed,
            baselines: default_baselines(trial.fs_hz)?.into_iter().map(|f| f.design).collect(),
            trial,
            pipeline: PipelineParams::default(),
        })
    }

    pub fn seed_of(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMse {
    pub method: String,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    /// Smooth-component MSE of the pipeline.
    pub proposed_mse: f64,
    /// Transient-component MSE of the pipeline; equal to `proposed_mse` up
    /// to rounding.
    pub transient_mse: f64,
    pub baselines: Vec<MethodMse>,
    pub stages: Vec<StageDiagnostics>,
    pub final_trace: Vec<TracePoint>,
    /// Largest violation of `l <= y <= u` and `l <= x* <= u`.
    pub sandwich_violation: f64,
    /// Largest per-stage absolute residual tolerance.
    pub max_tol: f64,
    /// Wall time of the decomposition; excluded from deterministic outputs.
    #[serde(skip)]
    pub elapsed_s: f64,
}

impl TrialRecord {
    pub fn best_baseline(&self) -> Option<&MethodMse> {
        self.baselines.iter().min_by(|a, b| a.mse.total_cmp(&b.mse))
    }

    pub fn proposed_wins(&self) -> bool {
        self.best_baseline().is_none_or(|b| self.proposed_mse < b.mse)
    }

    pub fn converged(&self) -> bool {
        self.stages.iter().all(|s| s.summary.converged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub trials: Vec<TrialRecord>,
    /// Trial indices sorted by increasing proposed-method MSE.
    pub ordering: Vec<usize>,
}

impl BenchReport {
    pub fn wins(&self) -> usize {
        self.trials.iter().filter(|t| t.proposed_wins()).count()
    }

    pub fn all_converged(&self) -> bool {
        self.trials.iter().all(TrialRecord::converged)
    }

    /// `(trial, seed, method, mse)` rows, proposed method first per trial.
    pub fn mse_rows(&self) -> Vec<(usize, u64, &str, f64)> {
        self.trials
            .iter()
            .flat_map(|t| {
                std::iter::once((t.trial, t.seed, PROPOSED, t.proposed_mse))
                    .chain(t.baselines.iter().map(|b| (t.trial, t.seed, b.method.as_str(), b.mse)))
            })
            .collect()
    }
}

/// Largest amount by which the envelopes fail to sandwich `y` and `x*`.
pub fn sandwich_violation(y: &Signal, d: &Decomposition) -> f64 {
    let (l, u, x) = (d.lower_env.samples(), d.upper_env.samples(), d.smooth.samples());
    y.samples()
        .iter()
        .enumerate()
        .map(|(i, &yi)| {
            (l[i] - yi)
                .max(yi - u[i])
                .max(l[i] - x[i])
                .max(x[i] - u[i])
        })
        .fold(0.0, f64::max)
}

fn run_trial(cfg: &BenchConfig, gen: &TrialGenerator, filters: &[FirFilter], index: usize) -> Result<TrialRecord> {
    let seed = cfg.seed_of(index);
    let trial = gen.generate(seed)?;
    let y = &trial.observation;

    let start = Instant::now();
    let d = decompose_debiased(y, &cfg.pipeline)?;
    let elapsed_s = start.elapsed().as_secs_f64();

    let baselines = filters
        .iter()
        .map(|f| {
            let (smooth, _) = lti_smooth_estimate(y, f)?;
            Ok(MethodMse {
                method: f.label(),
                mse: mse(trial.smooth.samples(), smooth.samples())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(TrialRecord {
        trial: index,
        seed,
        proposed_mse: mse(trial.smooth.samples(), d.smooth.samples())?,
        transient_mse: mse(trial.transient.samples(), d.transient.samples())?,
        baselines,
        sandwich_violation: sandwich_violation(y, &d),
        max_tol: d.max_tol(),
        stages: d.diagnostics,
        final_trace: d.final_trace,
        elapsed_s,
    })
}

/// Runs `n_trials` independent trials in parallel. The report does not
/// depend on scheduling apart from the timing fields.
pub fn run_mse_experiment(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.n_trials == 0 {
        return Err(Error::param("n_trials", 0.0, "must be at least 1"));
    }
    cfg.pipeline.validate()?;
    let gen = TrialGenerator::new(&cfg.trial)?;
    let filters = cfg.baselines.iter().map(FirDesign::build).collect::<Result<Vec<_>>>()?;

    let trials = (0..cfg.n_trials)
        .into_par_iter()
        .map(|i| {
            run_trial(cfg, &gen, &filters, i).map_err(|e| Error::Trial {
                seed: cfg.seed_of(i),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ordering: Vec<usize> = (0..trials.len()).collect();
    ordering.sort_by(|&a, &b| trials[a].proposed_mse.total_cmp(&trials[b].proposed_mse).then(a.cmp(&b)));
    Ok(BenchReport {
        config: cfg.clone(),
        trials,
        ordering,
    })
}

/// Deterministic summary written next to the CSV tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchMeta {
    pub config: BenchConfig,
    pub ordering: Vec<usize>,
    pub wins: usize,
    pub all_converged: bool,
    pub trials: Vec<TrialRecordSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecordSummary {
    pub trial: usize,
    pub seed: u64,
    pub proposed_mse: f64,
    pub best_baseline: Option<String>,
    pub sandwich_violation: f64,
    pub stages: Vec<StageDiagnostics>,
}

impl BenchReport {
    pub fn meta(&self) -> BenchMeta {
        BenchMeta {
            config: self.config.clone(),
            ordering: self.ordering.clone(),
            wins: self.wins(),
            all_converged: self.all_converged(),
            trials: self
                .trials
                .iter()
                .map(|t| TrialRecordSummary {
                    trial: t.trial,
                    seed: t.seed,
                    proposed_mse: t.proposed_mse,
                    best_baseline: t.best_baseline().map(|b| b.method.clone()),
                    sandwich_violation: t.sandwich_violation,
                    stages: t.stages.clone(),
                })
                .collect(),
        }
    }

    /// Writes `mse.csv`, `traces.csv` and `meta.json` (all deterministic)
    /// and `timing.csv` (wall-clock, not reproducible) into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let mse_rows: Vec<Vec<String>> = self
            .mse_rows()
            .into_iter()
            .map(|(trial, seed, method, mse)| {
                vec![trial.to_string(), seed.to_string(), method.to_string(), mse.to_string()]
            })
            .collect();
        write_rows_csv(&dir.join("mse.csv"), &["trial", "seed", "method", "mse"], &mse_rows)?;

        let trace_rows: Vec<Vec<String>> = self
            .trials
            .iter()
            .flat_map(|t| {
                t.final_trace
                    .iter()
                    .map(move |p| vec![t.trial.to_string(), t.seed.to_string(), p.iter.to_string(), p.residual.to_string()])
            })
            .collect();
        write_rows_csv(&dir.join("traces.csv"), &["trial", "seed", "iter", "residual"], &trace_rows)?;

        let timing_rows: Vec<Vec<String>> = self
            .trials
            .iter()
            .map(|t| {
                let iters: usize = t.stages.iter().map(|s| s.summary.iters).sum();
                vec![t.trial.to_string(), t.seed.to_string(), t.elapsed_s.to_string(), iters.to_string()]
            })
            .collect();
        write_rows_csv(&dir.join("timing.csv"), &["trial", "seed", "elapsed_s", "total_iters"], &timing_rows)?;

        write_json(&dir.join("meta.json"), &self.meta())
    }
}

/// Problem used for timing: a fixed kernel and a two-sided box around a
/// pseudo-random signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingSpec {
    pub sigma: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub iters: usize,
    pub repeats: usize,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for ScalingSpec {
    fn default() -> Self {
        Self {
            sigma: 20.0,
            lambda: 0.5,
            epsilon: 0.05,
            iters: 400,
            repeats: 7,
            seed: 0,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub iters: usize,
    /// Fastest repeat's wall time divided by iterations. The minimum is the
    /// least affected by other load on the machine.
    pub per_iter_s: f64,
}

fn scaling_problem(n: usize, spec: &ScalingSpec) -> Result<SolveParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let y: Vec<f64> = (0..n)
        .map(|i| (i as f64 * 0.05).sin() + 0.3 * rng.random_range(-1.0..1.0))
        .collect();
    let lower: Vec<f64> = y.iter().map(|v| v - 0.2).collect();
    let upper: Vec<f64> = y.iter().map(|v| v + 0.2).collect();
    Ok(SolveParams {
        y: Signal::new(y, 1.0)?,
        lambda: spec.lambda,
        kernel: KernelSpec::with_params(spec.sigma, crate::kernel::DEFAULT_TAU, spec.epsilon)?,
        bounds: BoxConstraint::between(&lower, &upper)?,
        config: SolverConfig {
            max_iters: spec.iters,
            // never reached, so every run performs exactly `iters` steps
            tol: f64::MIN_POSITIVE,
            trace_every: 0,
            ..spec.solver
        },
    })
}

/// Per-iteration solver time for each length in `n_list`, best of
/// `spec.repeats` runs. Repeats cycle through all lengths so that slow
/// phases of a shared machine hit every length alike.
pub fn run_scaling(n_list: &[usize], spec: &ScalingSpec) -> Result<Vec<ScalingRow>> {
    if spec.iters == 0 || spec.repeats == 0 {
        return Err(Error::param("iters", spec.iters as f64, "iterations and repeats must be at least 1"));
    }
    let problems = n_list
        .iter()
        .map(|&n| scaling_problem(n, spec))
        .collect::<Result<Vec<_>>>()?;
    // warm-up builds FFT plans and touches the caches
    for p in &problems {
        solve_constrained_filter(p)?;
    }
    let mut best = vec![f64::INFINITY; problems.len()];
    for _ in 0..spec.repeats {
        for (p, b) in problems.iter().zip(&mut best) {
            let start = Instant::now();
            let r = solve_constrained_filter(p)?;
            *b = b.min(start.elapsed().as_secs_f64() / r.iters.max(1) as f64);
        }
    }
    Ok(n_list
        .iter()
        .zip(best)
        .map(|(&n, per_iter_s)| ScalingRow {
            n,
            iters: spec.iters,
            per_iter_s,
        })
        .collect())
}
