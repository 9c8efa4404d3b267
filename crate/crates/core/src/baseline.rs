//! Linear time-invariant comparators: windowed-sinc FIR design and
//! zero-delay application.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};
use crate::signal::Signal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Lowpass,
    Bandpass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Hamming,
    Rect,
}

impl Window {
    fn weight(self, k: usize, length: usize) -> f64 {
        match self {
            _ if length == 1 => 1.0,
            Window::Rect => 1.0,
            Window::Hamming => {
                // centred form keeps the taps exactly symmetric
                let m = (length - 1) as f64;
                0.54 + 0.46 * (2.0 * PI * (k as f64 - 0.5 * m) / m).cos()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirDesign {
    pub kind: FilterKind,
    pub cutoffs_hz: Vec<f64>,
    pub fs_hz: f64,
    pub length: usize,
    pub window: Window,
}

impl FirDesign {
    pub fn build(&self) -> Result<FirFilter> {
        design_fir(self.kind, &self.cutoffs_hz, self.fs_hz, self.length, self.window)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    pub design: FirDesign,
}

impl FirFilter {
    /// Identity filter (`taps = [1]`).
    pub fn identity(fs_hz: f64) -> Self {
        Self {
            taps: vec![1.0],
            design: FirDesign {
                kind: FilterKind::Lowpass,
                cutoffs_hz: vec![0.25 * fs_hz],
                fs_hz,
                length: 1,
                window: Window::Rect,
            },
        }
    }

    pub fn group_delay(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    /// `|H(f)|` of the taps, evaluated directly from the DTFT sum.
    pub fn gain_at(&self, f_hz: f64) -> f64 {
        let w = 2.0 * PI * f_hz / self.design.fs_hz;
        let (re, im) = self
            .taps
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (k, h)| {
                let a = w * k as f64;
                (re + h * a.cos(), im - h * a.sin())
            });
        re.hypot(im)
    }

    /// Short label such as `hamming_lp_501`.
    pub fn label(&self) -> String {
        let window = match self.design.window {
            Window::Hamming => "hamming",
            Window::Rect => "rect",
        };
        let kind = match self.design.kind {
            FilterKind::Lowpass => "lp",
            FilterKind::Bandpass => "bp",
        };
        format!("{window}_{kind}_{}", self.taps.len())
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Ideal lowpass impulse response at integer offset `n` for normalized
/// cutoff `fc / fs`.
fn ideal_lowpass(cut: f64, n: f64) -> f64 {
    2.0 * cut * sinc(2.0 * cut * n)
}

/// Windowed-sinc design. Lowpass taps are scaled to unit DC gain, bandpass
/// taps to unit gain at the band centre.
pub fn design_fir(kind: FilterKind, cutoffs_hz: &[f64], fs_hz: f64, length: usize, window: Window) -> Result<FirFilter> {
    check_positive("fs_hz", fs_hz)?;
    if length == 0 || length.is_multiple_of(2) {
        return Err(Error::param("length", length as f64, "must be odd"));
    }
    let nyquist = 0.5 * fs_hz;
    let expected = match kind {
        FilterKind::Lowpass => 1,
        FilterKind::Bandpass => 2,
    };
    if cutoffs_hz.len() != expected {
        return Err(Error::length("filter cutoffs", expected, cutoffs_hz.len()));
    }
    for &c in cutoffs_hz {
        if !(c > 0.0 && c < nyquist) {
            return Err(Error::param("cutoff_hz", c, "must lie in (0, fs/2)"));
        }
    }
    if kind == FilterKind::Bandpass && cutoffs_hz[0] >= cutoffs_hz[1] {
        return Err(Error::param("cutoff_hz", cutoffs_hz[1], "band edges must be increasing"));
    }

    let centre = (length - 1) as f64 / 2.0;
    let ideal = |n: f64| match kind {
        FilterKind::Lowpass => ideal_lowpass(cutoffs_hz[0] / fs_hz, n),
        FilterKind::Bandpass => {
            ideal_lowpass(cutoffs_hz[1] / fs_hz, n) - ideal_lowpass(cutoffs_hz[0] / fs_hz, n)
        }
    };
    let taps: Vec<f64> = (0..length)
        .map(|k| ideal(k as f64 - centre) * window.weight(k, length))
        .collect();
    let mut filter = FirFilter {
        taps,
        design: FirDesign {
            kind,
            cutoffs_hz: cutoffs_hz.to_vec(),
            fs_hz,
            length,
            window,
        },
    };
    let gain = match kind {
        FilterKind::Lowpass => filter.taps.iter().sum::<f64>(),
        FilterKind::Bandpass => filter.gain_at(0.5 * (cutoffs_hz[0] + cutoffs_hz[1])),
    };
    if gain.abs() < f64::EPSILON {
        return Err(Error::param("length", length as f64, "filter gain vanishes"));
    }
    filter.taps.iter_mut().for_each(|h| *h /= gain);
    Ok(filter)
}

/// Linear-phase filtering with the group delay removed. The record is
/// extended at both ends by mirroring about the edge samples.
pub fn filter_zero_delay(f: &FirFilter, x: &Signal) -> Result<Signal> {
    let n = x.len();
    let half = f.group_delay();
    if n <= half {
        return Err(Error::length("signal must be longer than the filter group delay", half + 1, n));
    }
    let xs = x.samples();
    let last = (n - 1) as isize;
    let at = |i: isize| {
        let j = if i < 0 {
            -i
        } else if i > last {
            2 * last - i
        } else {
            i
        };
        xs[j as usize]
    };
    let out = (0..n as isize)
        .map(|i| {
            f.taps
                .iter()
                .enumerate()
                .map(|(k, h)| h * at(i + half as isize - k as isize))
                .sum()
        })
        .collect();
    x.like(out)
}

/// Smooth estimate by lowpass filtering; the transient is the remainder.
pub fn lti_smooth_estimate(y: &Signal, f: &FirFilter) -> Result<(Signal, Signal)> {
    let smooth = filter_zero_delay(f, y)?;
    let transient: Vec<f64> = y.samples().iter().zip(smooth.samples()).map(|(a, b)| a - b).collect();
    Ok((smooth, y.like(transient)?))
}

/// Lowpass comparators used by the synthetic benchmark.
pub const DEFAULT_LOWPASS_CUTOFF_HZ: f64 = 0.45;
pub const DEFAULT_LOWPASS_LENGTHS: [usize; 4] = [101, 501, 1001, 2001];

pub fn default_baselines(fs_hz: f64) -> Result<Vec<FirFilter>> {
    DEFAULT_LOWPASS_LENGTHS
        .iter()
        .map(|&len| design_fir(FilterKind::Lowpass, &[DEFAULT_LOWPASS_CUTOFF_HZ], fs_hz, len, Window::Hamming))
        .collect()
}
