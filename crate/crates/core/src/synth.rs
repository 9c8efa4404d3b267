//! Synthetic smooth + transient test signals.
//!
//! The smooth component is a randomly time-warped cosine with a slowly
//! varying gain, the transient is a Gaussian-process draw pushed through a
//! squashing nonlinearity. All randomness comes from a single
//! `ChaCha8Rng` seeded with the trial seed, drawn in the fixed order warp,
//! magnitude, transient, so a trial is bitwise reproducible from its seed.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, check_positive, Error, Result};
use crate::signal::Signal;

/// Largest grid the dense sampler accepts.
pub const MAX_GP_SAMPLES: usize = 4096;

/// Stationary covariance `c0 exp(-(t - t')^2 / c1) + c2 delta(t - t')`, with
/// `t` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl GpParams {
    pub const WARP: GpParams = GpParams {
        c0: 25.0,
        c1: 500.0,
        c2: 1e-3,
    };
    pub const MAGNITUDE: GpParams = GpParams {
        c0: 25.0,
        c1: 2500.0,
        c2: 5e-4,
    };
    pub const TRANSIENT: GpParams = GpParams {
        c0: 0.1,
        c1: 10.0,
        c2: 1e-5,
    };

    pub fn validate(&self) -> Result<()> {
        check_positive("c0", self.c0)?;
        check_positive("c1", self.c1)?;
        if !(self.c2.is_finite() && self.c2 >= 0.0) {
            return Err(Error::param("c2", self.c2, "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn covariance(&self, dt: f64) -> f64 {
        let mut v = self.c0 * (-(dt * dt) / self.c1).exp();
        if dt == 0.0 {
            v += self.c2;
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialSpec {
    pub seed: u64,
    pub fs_hz: f64,
    pub duration_s: f64,
    pub warp: GpParams,
    pub mag: GpParams,
    pub transient: GpParams,
}

impl Default for TrialSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            fs_hz: 10.0,
            duration_s: 200.0,
            warp: GpParams::WARP,
            mag: GpParams::MAGNITUDE,
            transient: GpParams::TRANSIENT,
        }
    }
}

impl TrialSpec {
    pub fn samples(&self) -> usize {
        (self.duration_s * self.fs_hz).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("fs_hz", self.fs_hz)?;
        check_positive("duration_s", self.duration_s)?;
        if self.samples() == 0 {
            return Err(Error::EmptySignal);
        }
        self.warp.validate()?;
        self.mag.validate()?;
        self.transient.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    /// Latent warp `s` and magnitude `m` draws behind `smooth`.
    pub warp: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub smooth: Signal,
    pub transient: Signal,
    pub observation: Signal,
}

/// Cholesky factor of a GP covariance on a fixed grid; draws are `L xi`.
#[derive(Debug, Clone)]
pub struct GpSampler {
    factor: DMatrix<f64>,
}

impl GpSampler {
    pub fn new(params: &GpParams, n: usize, fs: f64) -> Result<Self> {
        params.validate()?;
        check_positive("fs", fs)?;
        if n == 0 {
            return Err(Error::EmptySignal);
        }
        if n > MAX_GP_SAMPLES {
            return Err(Error::length("dense GP sampler size limit", MAX_GP_SAMPLES, n));
        }
        let cov = DMatrix::from_fn(n, n, |i, j| params.covariance((i as f64 - j as f64) / fs));
        let chol = cov.cholesky().ok_or(Error::SpectrumNotPositive {
            index: 0,
            value: params.c2,
        })?;
        Ok(Self { factor: chol.unpack() })
    }

    pub fn len(&self) -> usize {
        self.factor.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.factor.nrows() == 0
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.len();
        let xi: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let draw = &self.factor * DVector::from_vec(xi);
        draw.as_slice().to_vec()
    }
}

/// One draw of length `n` on the grid `t_i = i / fs`.
pub fn sample_gp(params: &GpParams, n: usize, fs: f64, seed: u64) -> Result<Vec<f64>> {
    let sampler = GpSampler::new(params, n, fs)?;
    Ok(sampler.sample(&mut ChaCha8Rng::seed_from_u64(seed)))
}

/// `x_i = cos(pi/2 (t_i + s_i)) (0.05 m_i + 1)` with `t_i = i / fs`.
pub fn make_smooth(warp: &[f64], magnitude: &[f64], fs: f64) -> Result<Vec<f64>> {
    check_len("magnitude", warp.len(), magnitude.len())?;
    check_positive("fs", fs)?;
    Ok(warp
        .iter()
        .zip(magnitude)
        .enumerate()
        .map(|(i, (s, m))| {
            let t = i as f64 / fs;
            (0.5 * std::f64::consts::PI * (t + s)).cos() * (0.05 * m + 1.0)
        })
        .collect())
}

/// Identity outside `[-1, 1]`, signed square inside.
pub fn nonlinearity_q(u: f64) -> f64 {
    if u.abs() > 1.0 {
        u
    } else if u >= 0.0 {
        u * u
    } else {
        -u * u
    }
}

/// Trial generator with the three GP factors cached, so many seeds can be
/// drawn for one grid without refactoring.
#[derive(Debug, Clone)]
pub struct TrialGenerator {
    spec: TrialSpec,
    warp: GpSampler,
    mag: GpSampler,
    transient: GpSampler,
}

impl TrialGenerator {
    pub fn new(spec: &TrialSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.samples();
        Ok(Self {
            spec: *spec,
            warp: GpSampler::new(&spec.warp, n, spec.fs_hz)?,
            mag: GpSampler::new(&spec.mag, n, spec.fs_hz)?,
            transient: GpSampler::new(&spec.transient, n, spec.fs_hz)?,
        })
    }

    pub fn spec(&self) -> &TrialSpec {
        &self.spec
    }

    pub fn generate(&self, seed: u64) -> Result<Trial> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = self.warp.sample(&mut rng);
        let m = self.mag.sample(&mut rng);
        let f = self.transient.sample(&mut rng);
        let fs = self.spec.fs_hz;
        let smooth = make_smooth(&s, &m, fs)?;
        let transient: Vec<f64> = f.into_iter().map(nonlinearity_q).collect();
        let observation = smooth.iter().zip(&transient).map(|(a, b)| a + b).collect();
        Ok(Trial {
            warp: s,
            magnitude: m,
            smooth: Signal::new(smooth, fs)?,
            transient: Signal::new(transient, fs)?,
            observation: Signal::new(observation, fs)?,
        })
    }
}

pub fn generate_trial(spec: &TrialSpec) -> Result<Trial> {
    TrialGenerator::new(spec)?.generate(spec.seed)
}
