//! Douglas-Rachford solver for the box-constrained filtering problem.
//!
//! The primal problem
//!
//! ```text
//! minimize  lambda/2 |y - x|^2 + 1/2 x' C^{-1} x   subject to  x in B
//! ```
//!
//! needs `C^{-1}`, which has no usable structure. Its dual needs only `C`:
//!
//! ```text
//! minimize  1/2 z' C z + lambda/2 <2w - P_B(w), P_B(w)>,   w = y - z/lambda
//! ```
//!
//! with the primal recovered as `x = P_B(y - z/lambda)`. Embedding `C` in
//! the smallest circulant `C~` and adding a padding variable `z~` pinned to
//! zero turns the quadratic into something FFT-diagonal, so each iteration
//! costs one forward/inverse FFT pair plus elementwise work:
//!
//! ```text
//! [t; t~] = (2 (I + alpha C~)^{-1} - I) [u; u~]
//! t_n     = reflected prox of the dual data term (see `prox`)
//! u       = gamma u + (1 - gamma) t
//! u~      = gamma u~ - (1 - gamma) t~
//! ```
//!
//! On exit `[z; z~] = (I + alpha C~)^{-1} [u; u~]`. The stopping rule is the
//! dual fixed-point residual `|C z - P_B(y - z/lambda)|_inf`, which is zero
//! exactly at the optimum.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, check_positive, Error, Result};
use crate::kernel::{
    build_band, embed_circulant, embed_circulant_sized, fast_fft_size, toeplitz_into,
    CirculantOperator, KernelSpec, ToeplitzBand,
};
use crate::prox::ProxParams;
use crate::signal::{BoxConstraint, Signal};

/// Largest problem accepted by [`solve_reference_dense`].
pub const DENSE_LIMIT: usize = 2048;

/// Size of the circulant embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSize {
    /// `N + K`, the smallest circulant containing the band.
    Minimal,
    /// Smallest even 5-smooth size `>= N + K`. FFT cost at awkward lengths
    /// (large prime factors) is several times higher than at nearby
    /// smooth ones, so this is the default.
    #[default]
    FastFft,
}

/// What to do when `1 + alpha * eigenvalue` is not bounded away from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumPolicy {
    #[default]
    Error,
    /// Replace negative circulant eigenvalues by zero.
    ClampToZero,
}

/// Douglas-Rachford hyperparameters shared by every solve of a pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub max_iters: usize,
    /// Residual tolerance relative to `|y|_inf`.
    pub tol: f64,
    /// Residual is evaluated every `trace_every` iterations; 0 checks only
    /// at exit.
    pub trace_every: usize,
    pub embedding: EmbeddingSize,
    pub spectrum: SpectrumPolicy,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            alpha: 1.0,
            max_iters: 20_000,
            tol: 1e-6,
            trace_every: 25,
            embedding: EmbeddingSize::default(),
            spectrum: SpectrumPolicy::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::param("gamma", self.gamma, "must lie in (0, 1)"));
        }
        check_positive("alpha", self.alpha)?;
        check_positive("tol", self.tol)?;
        Ok(())
    }
}

/// One constrained filtering problem: data `y`, weight `lambda`, kernel and
/// box.
#[derive(Debug, Clone)]
pub struct SolveParams {
    pub y: Signal,
    pub lambda: f64,
    pub kernel: KernelSpec,
    pub bounds: BoxConstraint,
    pub config: SolverConfig,
}

impl SolveParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("lambda", self.lambda)?;
        self.kernel.validate()?;
        self.config.validate()?;
        check_len("bounds", self.y.len(), self.bounds.len())
    }

    /// Absolute residual tolerance, `tol * |y|_inf` (or `tol` for `y = 0`).
    pub fn abs_tol(&self) -> f64 {
        let scale = self.y.max_abs();
        if scale > 0.0 {
            self.config.tol * scale
        } else {
            self.config.tol
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iter: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Primal solution; lies in the box exactly.
    pub x_hat: Signal,
    /// Dual solution.
    pub z: Vec<f64>,
    pub iters: usize,
    /// `|C z - P_B(y - z/lambda)|_inf` at exit.
    pub residual_inf: f64,
    /// `|C z - x_hat|_inf`, evaluated with the banded product.
    pub primal_gap: f64,
    pub tol: f64,
    pub residual_trace: Vec<TracePoint>,
    pub converged: bool,
}

impl SolveResult {
    /// Turns a non-converged result into [`Error::NoConvergence`].
    pub fn ensure_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::NoConvergence {
                iters: self.iters,
                residual: self.residual_inf,
                tol: self.tol,
            })
        }
    }

    pub fn summary(&self) -> SolveSummary {
        SolveSummary {
            iters: self.iters,
            residual_inf: self.residual_inf,
            primal_gap: self.primal_gap,
            tol: self.tol,
            converged: self.converged,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub iters: usize,
    pub residual_inf: f64,
    pub primal_gap: f64,
    pub tol: f64,
    pub converged: bool,
}

/// `|C z - P_B(y - z/lambda)|_inf`.
pub fn residual(z: &[f64], p: &SolveParams) -> Result<f64> {
    check_len("dual vector", p.y.len(), z.len())?;
    p.validate()?;
    let band = build_band(&p.kernel, p.y.len())?;
    let x = primal_from_dual(z, p);
    Ok(gap(&band, z, &x))
}

fn primal_from_dual(z: &[f64], p: &SolveParams) -> Vec<f64> {
    p.y.samples()
        .iter()
        .zip(z)
        .enumerate()
        .map(|(i, (yn, zn))| p.bounds.clamp_at(i, yn - zn / p.lambda))
        .collect()
}

fn gap(band: &ToeplitzBand, z: &[f64], x: &[f64]) -> f64 {
    let mut cz = vec![0.0; z.len()];
    toeplitz_into(band, z, &mut cz);
    cz.iter().zip(x).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

struct DrState {
    n: usize,
    resolvent: crate::kernel::Resolvent,
}

impl DrState {
    /// Writes `(I + alpha C~)^{-1} u` into `out`.
    fn resolve(&mut self, u: &[f64], out: &mut [f64]) {
        self.resolvent.apply(u, out).expect("DR buffers have the operator size");
    }
}

fn circulant_for(band: &ToeplitzBand, config: &SolverConfig) -> Result<CirculantOperator> {
    let op = match config.embedding {
        EmbeddingSize::Minimal => embed_circulant(band),
        EmbeddingSize::FastFft => {
            embed_circulant_sized(band, fast_fft_size(band.n() + band.half_width()))?
        }
    };
    Ok(match config.spectrum {
        SpectrumPolicy::Error => op,
        SpectrumPolicy::ClampToZero => op.clamp_spectrum(),
    })
}

/// Solves the constrained filtering problem with Douglas-Rachford splitting
/// on the circulant-embedded dual.
///
/// A run that exhausts `max_iters` still returns `Ok` with
/// `converged == false`; see [`SolveResult::ensure_converged`].
pub fn solve_constrained_filter(p: &SolveParams) -> Result<SolveResult> {
    p.validate()?;
    let n = p.y.len();
    let cfg = &p.config;
    let band = build_band(&p.kernel, n)?;
    let op = circulant_for(&band, cfg)?;
    let m = op.size();
    let prox = ProxParams::new(p.lambda, cfg.alpha, p.y.samples(), &p.bounds)?;
    let tol = p.abs_tol();

    let mut state = DrState {
        n,
        resolvent: op.resolvent(cfg.alpha)?,
    };
    let mut u = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mut x = vec![0.0; n];
    let gamma = cfg.gamma;

    let check = |state: &mut DrState, u: &[f64], w: &mut [f64], x: &mut Vec<f64>| -> f64 {
        state.resolve(u, w);
        *x = primal_from_dual(&w[..state.n], p);
        gap(&band, &w[..state.n], x)
    };

    let mut trace = Vec::new();
    let mut res = check(&mut state, &u, &mut w, &mut x);
    trace.push(TracePoint { iter: 0, residual: res });
    let mut iters = 0;
    let mut converged = res < tol;

    while !converged && iters < cfg.max_iters {
        iters += 1;
        state.resolve(&u, &mut w);
        let (u_data, u_pad) = u.split_at_mut(n);
        for (i, (ui, wi)) in u_data.iter_mut().zip(&w[..n]).enumerate() {
            let t = 2.0 * wi - *ui;
            *ui = gamma * *ui + (1.0 - gamma) * prox.reflect_at(i, t);
        }
        for (ui, wi) in u_pad.iter_mut().zip(&w[n..]) {
            let t = 2.0 * wi - *ui;
            *ui = gamma * *ui - (1.0 - gamma) * t;
        }
        let due = cfg.trace_every > 0 && iters % cfg.trace_every == 0;
        if due || iters == cfg.max_iters {
            res = check(&mut state, &u, &mut w, &mut x);
            trace.push(TracePoint { iter: iters, residual: res });
            converged = res < tol;
        }
    }

    // `w` holds the resolvent of the final `u` from the last check.
    let z = w[..n].to_vec();
    let primal_gap = gap(&band, &z, &x);
    Ok(SolveResult {
        x_hat: p.y.like(x)?,
        z,
        iters,
        residual_inf: res,
        primal_gap,
        tol,
        residual_trace: trace,
        converged,
    })
}

/// Dense primal active-set solver for small instances. Used as an
/// independent oracle for [`solve_constrained_filter`]; forms `C^{-1}`
/// explicitly, so it needs a positive definite `C`.
pub fn solve_reference_dense(p: &SolveParams) -> Result<SolveResult> {
    p.validate()?;
    let n = p.y.len();
    if n > DENSE_LIMIT {
        return Err(Error::length("dense reference solver size limit", DENSE_LIMIT, n));
    }
    let band = build_band(&p.kernel, n)?;
    let c = DMatrix::from_fn(n, n, |i, j| band.entry(i, j));
    let c_inv = c
        .clone()
        .cholesky()
        .ok_or(Error::SpectrumNotPositive {
            index: 0,
            value: c.symmetric_eigenvalues().min(),
        })?
        .inverse();
    let h = DMatrix::identity(n, n) * p.lambda + &c_inv;
    let f = DVector::from_column_slice(p.y.samples()) * p.lambda;
    let (x, iters) = box_qp_active_set(&h, &f, &p.bounds)?;
    let z = (&c_inv * DVector::from_column_slice(&x)).as_slice().to_vec();
    let res = gap(&band, &z, &primal_from_dual(&z, p));
    let primal_gap = gap(&band, &z, &x);
    let tol = p.abs_tol();
    Ok(SolveResult {
        x_hat: p.y.like(x)?,
        z,
        iters,
        residual_inf: res,
        primal_gap,
        tol,
        residual_trace: vec![TracePoint { iter: iters, residual: res }],
        converged: true,
    })
}

#[derive(Clone, Copy, PartialEq)]
enum Active {
    Free,
    Lower,
    Upper,
}

/// Minimizes `x'Hx/2 - f'x` over the box for symmetric positive definite
/// `H` with a primal active-set method. Returns the minimizer and the
/// number of working-set changes.
fn box_qp_active_set(h: &DMatrix<f64>, f: &DVector<f64>, bounds: &BoxConstraint) -> Result<(Vec<f64>, usize)> {
    let n = f.len();
    let lo = bounds.lower();
    let hi = bounds.upper();
    let mut x: Vec<f64> = (0..n).map(|i| bounds.clamp_at(i, f[i] / h[(i, i)])).collect();
    let mut state = vec![Active::Free; n];
    let max_steps = 50 * n + 100;

    for step in 0..max_steps {
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == Active::Free).collect();
        let xv = DVector::from_column_slice(&x);
        let grad = h * &xv - f;
        let mut direction = vec![0.0; n];
        if !free.is_empty() {
            let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| -grad[i]));
            let pf = hff
                .cholesky()
                .ok_or(Error::SpectrumNotPositive { index: 0, value: 0.0 })?
                .solve(&gf);
            for (a, &i) in free.iter().enumerate() {
                direction[i] = pf[a];
            }
        }

        let mut step_len = 1.0;
        let mut blocking = None;
        for &i in &free {
            let d = direction[i];
            let limit = if d < 0.0 {
                lo[i].map(|l| ((l - x[i]) / d, Active::Lower))
            } else if d > 0.0 {
                hi[i].map(|u| ((u - x[i]) / d, Active::Upper))
            } else {
                None
            };
            if let Some((s, side)) = limit {
                if s < step_len {
                    step_len = s.max(0.0);
                    blocking = Some((i, side));
                }
            }
        }
        for &i in &free {
            x[i] += step_len * direction[i];
        }
        if let Some((i, side)) = blocking {
            x[i] = match side {
                Active::Lower => lo[i].unwrap(),
                _ => hi[i].unwrap(),
            };
            state[i] = side;
            continue;
        }

        // x now minimizes over the current face; check the multipliers.
        let grad = h * DVector::from_column_slice(&x) - f;
        let scale = 1e-12 * (1.0 + f.amax());
        let worst = (0..n)
            .filter_map(|i| match state[i] {
                Active::Lower if grad[i] < -scale => Some((i, -grad[i])),
                Active::Upper if grad[i] > scale => Some((i, grad[i])),
                _ => None,
            })
            .max_by(|a, b| a.1.total_cmp(&b.1));
        match worst {
            Some((i, _)) => state[i] = Active::Free,
            None => return Ok((x, step)),
        }
    }
    Err(Error::NoConvergence {
        iters: max_steps,
        residual: f64::NAN,
        tol: 0.0,
    })
}
