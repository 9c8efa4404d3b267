//! Beat detection on the transient component.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};
use crate::signal::Signal;

/// Default minimum peak separation (caps the rate at about 180 per minute).
pub const DEFAULT_MIN_SEPARATION_S: f64 = 0.33;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatStats {
    pub peak_indices: Vec<usize>,
    pub intervals_s: Vec<f64>,
    /// `None` when fewer than two peaks survive.
    pub mean_interval_s: Option<f64>,
    /// Sample standard deviation; `None` with fewer than two intervals.
    pub std_interval_s: Option<f64>,
}

/// Local maxima, as `(index, value)`. A flat top counts once, at its middle.
fn local_maxima(x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i] > x[i - 1] {
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] {
                peaks.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Height of a peak above the higher of its two bases, where a base is the
/// lowest point between the peak and the nearest strictly higher sample
/// (or the record edge) on that side.
fn prominence(x: &[f64], p: usize) -> f64 {
    let v = x[p];
    let mut left_min = v;
    for &s in x[..p].iter().rev() {
        if s > v {
            break;
        }
        left_min = left_min.min(s);
    }
    let mut right_min = v;
    for &s in &x[p + 1..] {
        if s > v {
            break;
        }
        right_min = right_min.min(s);
    }
    v - left_min.max(right_min)
}

/// `0.25` times the 95th percentile of `|t|`.
pub fn default_prominence(t: &Signal) -> f64 {
    let mut mags: Vec<f64> = t.samples().iter().map(|v| v.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let idx = ((mags.len() - 1) as f64 * 0.95).round() as usize;
    0.25 * mags[idx]
}

/// Prominent local maxima, thinned greedily (highest first) so that no two
/// survivors are closer than `min_separation_s`.
pub fn detect_peaks(t: &Signal, min_separation_s: f64, min_prominence: f64) -> Result<BeatStats> {
    check_positive("min_separation_s", min_separation_s)?;
    if !(min_prominence.is_finite() && min_prominence >= 0.0) {
        return Err(Error::param("min_prominence", min_prominence, "must be finite and >= 0"));
    }
    if t.is_empty() {
        return Err(Error::EmptySignal);
    }
    let x = t.samples();
    let fs = t.sample_rate_hz();
    let mut candidates: Vec<usize> = local_maxima(x)
        .into_iter()
        .filter(|&p| prominence(x, p) >= min_prominence)
        .collect();
    candidates.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));

    let mut kept: Vec<usize> = Vec::new();
    for p in candidates {
        if kept.iter().all(|&q| p.abs_diff(q) as f64 / fs >= min_separation_s) {
            kept.push(p);
        }
    }
    kept.sort_unstable();

    let intervals_s: Vec<f64> = kept.windows(2).map(|w| (w[1] - w[0]) as f64 / fs).collect();
    let mean = (!intervals_s.is_empty()).then(|| intervals_s.iter().sum::<f64>() / intervals_s.len() as f64);
    let std = mean.filter(|_| intervals_s.len() >= 2).map(|m| {
        let ss: f64 = intervals_s.iter().map(|v| (v - m) * (v - m)).sum();
        (ss / (intervals_s.len() - 1) as f64).sqrt()
    });
    Ok(BeatStats {
        peak_indices: kept,
        intervals_s,
        mean_interval_s: mean,
        std_interval_s: std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoid_peaks() {
        let fs = 10.0;
        let x: Vec<f64> = (0..100).map(|i| (2.0 * std::f64::consts::PI * i as f64 / fs).sin()).collect();
        // analytic maxima at t = 0.25 + k
        let s = Signal::new(x, fs).unwrap();
        let stats = detect_peaks(&s, 0.5, 0.0).unwrap();
        assert_eq!(stats.peak_indices.len(), 10);
        for (k, &p) in stats.peak_indices.iter().enumerate() {
            let t = p as f64 / fs;
            assert!((t - (0.25 + k as f64)).abs() <= 1.0 / fs);
        }
        assert!((stats.mean_interval_s.unwrap() - 1.0).abs() <= 1.0 / fs);
    }

    #[test]
    fn constant_has_no_peaks() {
        let s = Signal::new(vec![0.3; 50], 10.0).unwrap();
        let stats = detect_peaks(&s, 0.5, 0.0).unwrap();
        assert!(stats.peak_indices.is_empty());
        assert_eq!(stats.mean_interval_s, None);
        assert_eq!(stats.std_interval_s, None);
    }

    #[test]
    fn close_peaks_are_thinned() {
        let mut x = vec![0.0; 30];
        x[10] = 1.0;
        x[13] = 1.0;
        let s = Signal::new(x, 10.0).unwrap();
        let stats = detect_peaks(&s, 0.5, 0.1).unwrap();
        assert_eq!(stats.peak_indices, vec![10]);
        let stats = detect_peaks(&s, 0.2, 0.1).unwrap();
        assert_eq!(stats.peak_indices, vec![10, 13]);
        assert!(detect_peaks(&s, 0.0, 0.1).is_err());
    }

    #[test]
    fn prominence_filters_ripples() {
        // big bump with a small ripple on its flank
        let x = [0.0, 1.0, 2.0, 3.0, 2.9, 2.95, 2.0, 0.0, 0.0];
        let s = Signal::new(x.to_vec(), 1.0).unwrap();
        assert_eq!(prominence(&x, 3), 3.0);
        assert!((prominence(&x, 5) - 0.05).abs() < 1e-12);
        let stats = detect_peaks(&s, 1.0, 0.5).unwrap();
        assert_eq!(stats.peak_indices, vec![3]);
    }

    #[test]
    fn plateau_counts_once() {
        let x = [0.0, 1.0, 1.0, 1.0, 0.0, 2.0, 0.0];
        assert_eq!(local_maxima(&x), vec![2, 5]);
    }
}
