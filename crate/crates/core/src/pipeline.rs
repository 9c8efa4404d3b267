//! Envelope-sandwich decomposition.
//!
//! Two tight envelopes are fitted around the observation (heavy data fit,
//! narrow kernel), then the smoothest signal lying between them is taken as
//! the smooth component (weak data fit, wider kernel). The transient is the
//! remainder.
//!
//! The debiased variant first fits two very smooth coarse envelopes and
//! uses them as offsets, so that each tight-envelope problem sees a
//! single-signed signal: the zero-mean prior then pulls the envelope towards
//! the data instead of away from it. The coarse envelopes themselves are
//! fitted after a DC offset (the record max/min), and their average is the
//! trend. The final stage runs on the detrended signal.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};
use crate::kernel::{KernelSpec, DEFAULT_TAU};
use crate::signal::{BoxConstraint, Signal};
pub use crate::peaks::{detect_peaks, BeatStats};
use crate::solver::{solve_constrained_filter, SolveParams, SolveSummary, SolverConfig, TracePoint};

/// Diagonal jitter used by the pipeline stages. The truncated kernel is
/// slightly indefinite at `epsilon = 0` (its smallest circulant eigenvalue
/// is about `-0.02` at `sigma = 100`), which stalls the dual iteration.
pub const DEFAULT_PIPELINE_EPSILON: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoarseParams {
    pub lambda: f64,
    pub sigma: f64,
}

impl Default for CoarseParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            sigma: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    /// Data-fit weight of the tight envelopes.
    pub lambda0: f64,
    /// Data-fit weight of the final smoothing stage.
    pub lambda1: f64,
    /// Kernel width (samples) of the tight envelopes.
    pub sigma0: f64,
    /// Kernel width (samples) of the final smoothing stage.
    pub sigma1: f64,
    /// Coarse envelopes; required by [`decompose_debiased`].
    pub coarse: Option<CoarseParams>,
    pub tau: f64,
    pub epsilon: f64,
    pub solver: SolverConfig,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            lambda0: 50.0,
            lambda1: 0.5,
            sigma0: 5.0,
            sigma1: 20.0,
            coarse: Some(CoarseParams::default()),
            tau: DEFAULT_TAU,
            epsilon: DEFAULT_PIPELINE_EPSILON,
            solver: SolverConfig::default(),
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("lambda0", self.lambda0)?;
        check_positive("lambda1", self.lambda1)?;
        check_positive("sigma0", self.sigma0)?;
        check_positive("sigma1", self.sigma1)?;
        if self.lambda1 >= self.lambda0 {
            return Err(Error::param("lambda1", self.lambda1, "must be < lambda0"));
        }
        if self.sigma0 > self.sigma1 {
            return Err(Error::param("sigma0", self.sigma0, "must be <= sigma1"));
        }
        if let Some(c) = &self.coarse {
            check_positive("coarse.lambda", c.lambda)?;
            check_positive("coarse.sigma", c.sigma)?;
            if self.sigma1 > c.sigma {
                return Err(Error::param("coarse.sigma", c.sigma, "must be >= sigma1"));
            }
        }
        self.kernel(self.sigma0)?;
        self.solver.validate()
    }

    fn kernel(&self, sigma: f64) -> Result<KernelSpec> {
        KernelSpec::with_params(sigma, self.tau, self.epsilon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDiagnostics {
    pub stage: String,
    pub lambda: f64,
    pub sigma: f64,
    #[serde(flatten)]
    pub summary: SolveSummary,
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub smooth: Signal,
    pub transient: Signal,
    pub lower_env: Signal,
    pub upper_env: Signal,
    pub coarse_lower: Option<Signal>,
    pub coarse_upper: Option<Signal>,
    pub trend: Option<Signal>,
    pub diagnostics: Vec<StageDiagnostics>,
    /// Residual trace of the final smoothing solve.
    pub final_trace: Vec<TracePoint>,
}

impl Decomposition {
    pub fn all_converged(&self) -> bool {
        self.diagnostics.iter().all(|d| d.summary.converged)
    }

    /// First stage that did not converge, as an error.
    pub fn ensure_converged(&self) -> Result<()> {
        match self.diagnostics.iter().find(|d| !d.summary.converged) {
            None => Ok(()),
            Some(d) => Err(Error::NoConvergence {
                iters: d.summary.iters,
                residual: d.summary.residual_inf,
                tol: d.summary.tol,
            }),
        }
    }

    /// Largest relative solver tolerance across stages, in signal units.
    pub fn max_tol(&self) -> f64 {
        self.diagnostics.iter().fold(0.0, |m, d| m.max(d.summary.tol))
    }
}

struct Stage {
    x: Vec<f64>,
    diag: StageDiagnostics,
    trace: Vec<TracePoint>,
}

fn solve_stage(
    name: &str,
    template: &Signal,
    y: Vec<f64>,
    lambda: f64,
    sigma: f64,
    bounds: BoxConstraint,
    p: &PipelineParams,
) -> Result<Stage> {
    let params = SolveParams {
        y: template.like(y)?,
        lambda,
        kernel: p.kernel(sigma)?,
        bounds,
        config: p.solver,
    };
    let r = solve_constrained_filter(&params)?;
    Ok(Stage {
        diag: StageDiagnostics {
            stage: name.to_string(),
            lambda,
            sigma,
            summary: r.summary(),
        },
        trace: r.residual_trace,
        x: r.x_hat.into_samples(),
    })
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn shift(a: &[f64], c: f64) -> Vec<f64> {
    a.iter().map(|x| x + c).collect()
}

fn extremum(v: &[f64], max: bool) -> f64 {
    if max {
        v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    } else {
        v.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Bounds `[min(l, u), max(l, u)]`, absorbing solver-tolerance crossings.
fn ordered_bounds(lower: &[f64], upper: &[f64]) -> Result<BoxConstraint> {
    let a: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| l.min(*u)).collect();
    let b: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| l.max(*u)).collect();
    BoxConstraint::between(&a, &b)
}

/// Envelopes and final smoothing with the record extrema as outer bounds.
pub fn decompose_basic(y: &Signal, p: &PipelineParams) -> Result<Decomposition> {
    p.validate()?;
    let ys = y.samples();
    let (lo, hi) = (y.min(), y.max());
    let (lower, upper) = rayon::join(
        || solve_stage("lower", y, ys.to_vec(), p.lambda0, p.sigma0, BoxConstraint::scalar_below(lo, ys)?, p),
        || solve_stage("upper", y, ys.to_vec(), p.lambda0, p.sigma0, BoxConstraint::scalar_above(ys, hi)?, p),
    );
    let (lower, upper) = (lower?, upper?);
    let bounds = ordered_bounds(&lower.x, &upper.x)?;
    let smooth = solve_stage("smooth", y, ys.to_vec(), p.lambda1, p.sigma1, bounds, p)?;
    let transient = sub(ys, &smooth.x);
    Ok(Decomposition {
        smooth: y.like(smooth.x)?,
        transient: y.like(transient)?,
        lower_env: y.like(lower.x)?,
        upper_env: y.like(upper.x)?,
        coarse_lower: None,
        coarse_upper: None,
        trend: None,
        diagnostics: vec![lower.diag, upper.diag, smooth.diag],
        final_trace: smooth.trace,
    })
}

/// Decomposition with coarse-envelope debiasing and trend removal.
pub fn decompose_debiased(y: &Signal, p: &PipelineParams) -> Result<Decomposition> {
    p.validate()?;
    let coarse = p
        .coarse
        .ok_or(Error::param("coarse.sigma", f64::NAN, "coarse envelope parameters are required"))?;
    let ys = y.samples();

    // coarse lower: (-inf, y], fitted on y - max(y) <= 0
    // coarse upper: [y, +inf), fitted on y - min(y) >= 0
    let (hi, lo) = (y.max(), y.min());
    let (cl, cu) = rayon::join(
        || {
            let shifted = shift(ys, -hi);
            let b = BoxConstraint::at_most(&shifted)?;
            solve_stage("coarse_lower", y, shifted, coarse.lambda, coarse.sigma, b, p)
        },
        || {
            let shifted = shift(ys, -lo);
            let b = BoxConstraint::at_least(&shifted)?;
            solve_stage("coarse_upper", y, shifted, coarse.lambda, coarse.sigma, b, p)
        },
    );
    let (cl, cu) = (cl?, cu?);
    let coarse_lower = shift(&cl.x, hi);
    let coarse_upper = shift(&cu.x, lo);

    // tight lower on y - u0 <= 0, tight upper on y - l0 >= 0
    let (lower, upper) = rayon::join(
        || {
            let below = sub(ys, &coarse_upper);
            let b = BoxConstraint::scalar_below(extremum(&below, false), &below)?;
            solve_stage("lower", y, below, p.lambda0, p.sigma0, b, p)
        },
        || {
            let above = sub(ys, &coarse_lower);
            let b = BoxConstraint::scalar_above(&above, extremum(&above, true))?;
            solve_stage("upper", y, above, p.lambda0, p.sigma0, b, p)
        },
    );
    let (lower, upper) = (lower?, upper?);
    let lower_env = add(&coarse_upper, &lower.x);
    let upper_env = add(&coarse_lower, &upper.x);

    let trend: Vec<f64> = coarse_lower
        .iter()
        .zip(&coarse_upper)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let bounds = ordered_bounds(&sub(&lower_env, &trend), &sub(&upper_env, &trend))?;
    let smooth = solve_stage("smooth", y, sub(ys, &trend), p.lambda1, p.sigma1, bounds, p)?;
    let smooth_x = add(&smooth.x, &trend);
    let transient = sub(ys, &smooth_x);

    Ok(Decomposition {
        smooth: y.like(smooth_x)?,
        transient: y.like(transient)?,
        lower_env: y.like(lower_env)?,
        upper_env: y.like(upper_env)?,
        coarse_lower: Some(y.like(coarse_lower)?),
        coarse_upper: Some(y.like(coarse_upper)?),
        trend: Some(y.like(trend)?),
        diagnostics: vec![cl.diag, cu.diag, lower.diag, upper.diag, smooth.diag],
        final_trace: smooth.trace,
    })
}
