//! Uniformly sampled signals, per-sample box constraints, and the two
//! elementary operations everything else is built from: projection onto a
//! box and mean squared error.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, check_positive, Error, Result};

/// A uniformly sampled, finite, non-empty real sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SignalRepr")]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    t0: f64,
}

#[derive(Deserialize)]
struct SignalRepr {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    #[serde(default)]
    t0: f64,
}

impl TryFrom<SignalRepr> for Signal {
    type Error = Error;

    fn try_from(r: SignalRepr) -> Result<Self> {
        Signal::with_start(r.samples, r.sample_rate_hz, r.t0)
    }
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        Self::with_start(samples, sample_rate_hz, 0.0)
    }

    pub fn with_start(samples: Vec<f64>, sample_rate_hz: f64, t0: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySignal);
        }
        check_positive("sample_rate_hz", sample_rate_hz)?;
        if !t0.is_finite() {
            return Err(Error::param("t0", t0, "must be finite"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!(
                "sample {i} is not finite ({})",
                samples[i]
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            t0,
        })
    }

    /// Builds a signal with the same timing as `self`.
    pub fn like(&self, samples: Vec<f64>) -> Result<Self> {
        check_len("signal", self.len(), samples.len())?;
        Self::with_start(samples, self.sample_rate_hz, self.t0)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false; kept for API symmetry with slices.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_at(&self, index: usize) -> f64 {
        self.t0 + index as f64 / self.sample_rate_hz
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.time_at(i))
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Per-sample interval `[lower[n], upper[n]]`. `None` marks an unbounded
/// side: minus infinity for `lower`, plus infinity for `upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxConstraint {
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
}

impl BoxConstraint {
    pub fn new(lower: Vec<Option<f64>>, upper: Vec<Option<f64>>) -> Result<Self> {
        check_len("box upper bounds", lower.len(), upper.len())?;
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            for v in lo.iter().chain(hi) {
                if !v.is_finite() {
                    return Err(Error::Format(format!(
                        "bound at sample {i} is not finite; use an unbounded side instead"
                    )));
                }
            }
            if let (Some(lo), Some(hi)) = (lo, hi) {
                if lo > hi {
                    return Err(Error::InfeasibleBounds {
                        index: i,
                        lower: *lo,
                        upper: *hi,
                    });
                }
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![None; n],
            upper: vec![None; n],
        }
    }

    /// `[lower[n], upper[n]]` with both sides finite.
    pub fn between(lower: &[f64], upper: &[f64]) -> Result<Self> {
        Self::new(
            lower.iter().copied().map(Some).collect(),
            upper.iter().copied().map(Some).collect(),
        )
    }

    /// `(-inf, upper[n]]`.
    pub fn at_most(upper: &[f64]) -> Result<Self> {
        Self::new(vec![None; upper.len()], upper.iter().copied().map(Some).collect())
    }

    /// `[lower[n], +inf)`.
    pub fn at_least(lower: &[f64]) -> Result<Self> {
        Self::new(lower.iter().copied().map(Some).collect(), vec![None; lower.len()])
    }

    /// Uniform scalar lower bound with per-sample upper bound.
    pub fn scalar_below(lower: f64, upper: &[f64]) -> Result<Self> {
        Self::new(
            vec![Some(lower); upper.len()],
            upper.iter().copied().map(Some).collect(),
        )
    }

    /// Per-sample lower bound with uniform scalar upper bound.
    pub fn scalar_above(lower: &[f64], upper: f64) -> Result<Self> {
        Self::new(
            lower.iter().copied().map(Some).collect(),
            vec![Some(upper); lower.len()],
        )
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn lower(&self) -> &[Option<f64>] {
        &self.lower
    }

    pub fn upper(&self) -> &[Option<f64>] {
        &self.upper
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.len()
            && v.iter().enumerate().all(|(i, &x)| {
                self.lower[i].is_none_or(|lo| x >= lo) && self.upper[i].is_none_or(|hi| x <= hi)
            })
    }

    #[inline]
    pub(crate) fn clamp_at(&self, i: usize, mut v: f64) -> f64 {
        if let Some(lo) = self.lower[i] {
            v = v.max(lo);
        }
        if let Some(hi) = self.upper[i] {
            v = v.min(hi);
        }
        v
    }
}

/// Mean of squared sample differences.
pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len("mse operands", a.len(), b.len())?;
    if a.is_empty() {
        return Err(Error::EmptySignal);
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.len() as f64)
}

/// Elementwise clamp of `v` into the box; unbounded sides do not clamp.
pub fn project_box(v: &[f64], bounds: &BoxConstraint) -> Result<Vec<f64>> {
    check_len("projection input", bounds.len(), v.len())?;
    Ok(v.iter()
        .enumerate()
        .map(|(i, &x)| bounds.clamp_at(i, x))
        .collect())
}
