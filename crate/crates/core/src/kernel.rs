//! Truncated squared-exponential covariance, its banded Toeplitz form, and
//! the minimal circulant embedding used to apply it (and its resolvent) with
//! FFTs.
//!
//! DFT convention: unnormalized forward transform, `1/M` on the inverse. The
//! circulant eigenvalues are the forward DFT of its first row.

use std::fmt;
use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, check_positive, Error, Result};

pub const DEFAULT_TAU: f64 = 1e-3;

/// Smallest admissible value of `1 + alpha * eigenvalue` for the resolvent.
pub const SPECTRUM_FLOOR: f64 = 1e-12;

/// Kernel width `sigma` (in samples), truncation threshold `tau` and
/// diagonal jitter `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub sigma: f64,
    pub tau: f64,
    pub epsilon: f64,
}

impl KernelSpec {
    pub fn new(sigma: f64) -> Result<Self> {
        Self::with_params(sigma, DEFAULT_TAU, 0.0)
    }

    pub fn with_params(sigma: f64, tau: f64, epsilon: f64) -> Result<Self> {
        let spec = Self {
            sigma,
            tau,
            epsilon,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("sigma", self.sigma)?;
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::param("tau", self.tau, "must lie in (0, 1]"));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::param("epsilon", self.epsilon, "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Kernel value at integer lag `k`, before truncation and jitter.
    pub fn value(&self, k: usize) -> f64 {
        let k = k as f64;
        (-(k * k) / (self.sigma * self.sigma)).exp()
    }
}

/// Largest lag `k` with `exp(-k^2 / sigma^2) >= tau`.
pub fn band_half_width(spec: &KernelSpec) -> Result<usize> {
    spec.validate()?;
    let mut k = 0usize;
    while spec.value(k + 1) >= spec.tau {
        k += 1;
    }
    Ok(k)
}

/// Symmetric banded Toeplitz matrix described by its first row
/// `r[0..=K]`; entries beyond lag `K` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzBand {
    first_row: Vec<f64>,
    n: usize,
}

pub fn build_band(spec: &KernelSpec, n: usize) -> Result<ToeplitzBand> {
    if n == 0 {
        return Err(Error::EmptySignal);
    }
    let k = band_half_width(spec)?;
    if k >= n {
        return Err(Error::length("kernel band half-width must be < signal length", n, k));
    }
    let mut first_row: Vec<f64> = (0..=k).map(|lag| spec.value(lag)).collect();
    first_row[0] = 1.0 + spec.epsilon;
    Ok(ToeplitzBand { first_row, n })
}

impl ToeplitzBand {
    /// Band from an explicit first row; used for hand-built test operators.
    pub fn from_first_row(first_row: Vec<f64>, n: usize) -> Result<Self> {
        if first_row.is_empty() || n == 0 {
            return Err(Error::EmptySignal);
        }
        if first_row.len() > n {
            return Err(Error::length("band first row longer than n", n, first_row.len()));
        }
        Ok(Self { first_row, n })
    }

    pub fn first_row(&self) -> &[f64] {
        &self.first_row
    }

    pub fn half_width(&self) -> usize {
        self.first_row.len() - 1
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.first_row.get(i.abs_diff(j)).copied().unwrap_or(0.0)
    }

    /// Dense `n x n` copy, row-major.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.entry(i, j)).collect())
            .collect()
    }
}

/// `C z` by direct summation over the band.
pub fn apply_toeplitz(band: &ToeplitzBand, z: &[f64]) -> Result<Vec<f64>> {
    check_len("toeplitz operand", band.n, z.len())?;
    let mut out = vec![0.0; band.n];
    toeplitz_into(band, z, &mut out);
    Ok(out)
}

pub(crate) fn toeplitz_into(band: &ToeplitzBand, z: &[f64], out: &mut [f64]) {
    let n = band.n;
    let k = band.half_width();
    let r = &band.first_row;
    for (i, o) in out.iter_mut().enumerate() {
        let lo = i.saturating_sub(k);
        let hi = (i + k).min(n - 1);
        let mut acc = 0.0;
        for (j, zj) in z.iter().enumerate().take(hi + 1).skip(lo) {
            acc += r[i.abs_diff(j)] * zj;
        }
        *o = acc;
    }
}

/// A real symmetric circulant matrix, stored as its eigenvalues together
/// with FFT plans of matching size.
#[derive(Clone)]
pub struct CirculantOperator {
    first_row: Vec<f64>,
    eigenvalues: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for CirculantOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CirculantOperator")
            .field("size", &self.size())
            .field("min_eigenvalue", &self.min_eigenvalue())
            .finish()
    }
}

/// Smallest circulant (size `N + K`) whose leading `N x N` block is the band.
pub fn embed_circulant(band: &ToeplitzBand) -> CirculantOperator {
    let m = band.n + band.half_width();
    embed_circulant_sized(band, m).expect("minimal embedding size is always admissible")
}

/// Circulant embedding of size `m >= N + K`; the extra zeros sit in the
/// middle of the first row so the leading block is unchanged.
pub fn embed_circulant_sized(band: &ToeplitzBand, m: usize) -> Result<CirculantOperator> {
    let k = band.half_width();
    let min = band.n + k;
    if m < min {
        return Err(Error::length("circulant size must be >= N + K", min, m));
    }
    let mut row = vec![0.0; m];
    row[0] = band.first_row[0];
    for lag in 1..=k {
        row[lag] = band.first_row[lag];
        row[m - lag] = band.first_row[lag];
    }
    Ok(CirculantOperator::from_first_row(row))
}

/// Smallest even `m >= n` whose only prime factors are 2, 3 and 5. Even
/// lengths let the real-input transforms run at half size.
pub fn fast_fft_size(n: usize) -> usize {
    let mut m = n.max(2).next_multiple_of(2);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 2;
    }
}

impl CirculantOperator {
    /// The first row must be even-symmetric (`row[k] == row[m - k]`).
    pub fn from_first_row(first_row: Vec<f64>) -> Self {
        let m = first_row.len();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let mut buf: Vec<Complex<f64>> = first_row.iter().map(|&v| Complex::new(v, 0.0)).collect();
        forward.process(&mut buf);
        let eigenvalues = buf.iter().map(|c| c.re).collect();
        Self {
            first_row,
            eigenvalues,
            forward,
            inverse,
        }
    }

    pub fn size(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn first_row(&self) -> &[f64] {
        &self.first_row
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Copy with negative eigenvalues replaced by zero. The leading block
    /// then no longer matches the Toeplitz band exactly.
    pub fn clamp_spectrum(&self) -> Self {
        let mut out = self.clone();
        for e in &mut out.eigenvalues {
            *e = e.max(0.0);
        }
        out
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let m = self.size();
        self.first_row[(j + m - i % m) % m]
    }

    /// `C~ v` computed spectrally.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("circulant operand", self.size(), v.len())?;
        let mut buf = to_complex(v);
        self.filter_in_place(&mut buf, &self.eigenvalues);
        Ok(buf.iter().map(|c| c.re).collect())
    }

    /// `(I + alpha C~)^{-1} v` computed spectrally.
    pub fn apply_resolvent(&self, alpha: f64, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.size()];
        self.resolvent(alpha)?.apply(v, &mut out)?;
        Ok(out)
    }

    /// Precomputed spectral multipliers `1 / (1 + alpha * eigenvalue)`.
    pub fn resolvent(&self, alpha: f64) -> Result<Resolvent> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::param("alpha", alpha, "must be finite and >= 0"));
        }
        let m = self.size();
        for (index, e) in self.eigenvalues.iter().enumerate() {
            let value = 1.0 + alpha * e;
            if value <= SPECTRUM_FLOOR {
                return Err(Error::SpectrumNotPositive { index, value });
            }
        }
        // real input: bins 0..=M/2 determine the rest by symmetry
        let multipliers = self.eigenvalues[..m / 2 + 1]
            .iter()
            .map(|e| 1.0 / ((1.0 + alpha * e) * m as f64))
            .collect();
        let mut planner = RealFftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let scratch_len = forward.get_scratch_len().max(inverse.get_scratch_len());
        Ok(Resolvent {
            multipliers,
            input: forward.make_input_vec(),
            spectrum: forward.make_output_vec(),
            scratch: vec![Complex::new(0.0, 0.0); scratch_len],
            forward,
            inverse,
        })
    }

    /// `C z` for `z` of length `N <= M`, via zero-padding and truncation.
    pub fn apply_leading_block(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() > self.size() {
            return Err(Error::length("leading block operand", self.size(), z.len()));
        }
        let mut padded = z.to_vec();
        padded.resize(self.size(), 0.0);
        let mut out = self.apply(&padded)?;
        out.truncate(z.len());
        Ok(out)
    }

    fn scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }

    fn filter_in_place(&self, buf: &mut [Complex<f64>], multipliers: &[f64]) {
        let mut scratch = vec![Complex::new(0.0, 0.0); self.scratch_len()];
        filter_with(self, buf, multipliers, &mut scratch);
    }
}

fn filter_with(
    op: &CirculantOperator,
    buf: &mut [Complex<f64>],
    multipliers: &[f64],
    scratch: &mut [Complex<f64>],
) {
    let scale = 1.0 / op.size() as f64;
    op.forward.process_with_scratch(buf, scratch);
    for (c, m) in buf.iter_mut().zip(multipliers) {
        *c *= m * scale;
    }
    op.inverse.process_with_scratch(buf, scratch);
}

fn to_complex(v: &[f64]) -> Vec<Complex<f64>> {
    v.iter().map(|&x| Complex::new(x, 0.0)).collect()
}

/// Reusable spectral resolvent for one operator and one step size, using
/// real-to-complex transforms of size `M`.
pub struct Resolvent {
    multipliers: Vec<f64>,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
    input: Vec<f64>,
    spectrum: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl Resolvent {
    pub fn size(&self) -> usize {
        self.input.len()
    }

    /// Writes `(I + alpha C~)^{-1} v` into `out`.
    pub fn apply(&mut self, v: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("resolvent operand", self.size(), v.len())?;
        check_len("resolvent output", self.size(), out.len())?;
        self.input.copy_from_slice(v);
        self.forward
            .process_with_scratch(&mut self.input, &mut self.spectrum, &mut self.scratch)
            .expect("buffer sizes match the plan");
        for (c, m) in self.spectrum.iter_mut().zip(&self.multipliers) {
            *c *= *m;
        }
        // bins that must be real for a real inverse; zero up to round-off
        self.spectrum[0].im = 0.0;
        let m = self.size();
        if m.is_multiple_of(2) {
            self.spectrum[m / 2].im = 0.0;
        }
        self.inverse
            .process_with_scratch(&mut self.spectrum, out, &mut self.scratch)
            .expect("buffer sizes match the plan");
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_circulant(op: &CirculantOperator) -> DMatrix<f64> {
        let m = op.size();
        DMatrix::from_fn(m, m, |i, j| op.entry(i, j))
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        num / den.max(f64::MIN_POSITIVE)
    }

    /// Independent enumeration of the truncation rule.
    fn enumerate_half_width(sigma: f64, tau: f64) -> usize {
        (0..100_000usize)
            .take_while(|&k| (-((k * k) as f64) / (sigma * sigma)).exp() >= tau)
            .last()
            .unwrap()
    }

    #[test]
    fn half_width_examples() {
        let hw = |s, t| band_half_width(&KernelSpec::with_params(s, t, 0.0).unwrap()).unwrap();
        assert_eq!(enumerate_half_width(10.0, 0.01), 21);
        assert_eq!(hw(10.0, 0.01), 21);
        assert_eq!(hw(10.0, 1.0), 0);
        assert_eq!(hw(1.0, 0.5), 0);
        // closed form when tau < 1
        assert_eq!(hw(10.0, 0.01), (10.0 * (1.0f64 / 0.01).ln().sqrt()).floor() as usize);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(KernelSpec::with_params(0.0, 0.1, 0.0).is_err());
        assert!(KernelSpec::with_params(1.0, 0.0, 0.0).is_err());
        assert!(KernelSpec::with_params(1.0, 1.5, 0.0).is_err());
        assert!(KernelSpec::with_params(1.0, 0.5, -1.0).is_err());
    }

    #[test]
    fn build_band_examples() {
        let b = build_band(&KernelSpec::with_params(1.0, 0.5, 0.01).unwrap(), 8).unwrap();
        assert_eq!(b.first_row(), &[1.01]);
        let b = build_band(&KernelSpec::with_params(10.0, 0.01, 0.0).unwrap(), 100).unwrap();
        assert_eq!(b.first_row().len(), 22);
        assert_eq!(b.first_row()[1], (-0.01f64).exp());
        assert!(b.first_row().iter().all(|&r| r >= 0.01));
        let err = build_band(&KernelSpec::with_params(10.0, 0.01, 0.0).unwrap(), 10).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { .. }));
    }

    #[test]
    fn embedding_of_small_band() {
        let band = ToeplitzBand::from_first_row(vec![1.0, 0.5], 4).unwrap();
        let op = embed_circulant(&band);
        assert_eq!(op.size(), 5);
        assert_eq!(op.first_row(), &[1.0, 0.5, 0.0, 0.0, 0.5]);
        let dense = dense_circulant(&op);
        let mut expected = dense.symmetric_eigenvalues().as_slice().to_vec();
        let mut got = op.eigenvalues().to_vec();
        expected.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12, "{got:?} vs {expected:?}");
        }
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(op.entry(i, j), band.entry(i, j));
            }
        }
    }

    #[test]
    fn apply_examples() {
        let op = CirculantOperator::from_first_row(vec![1.0, 0.5, 0.0, 0.0, 0.5]);
        let e0 = [1.0, 0.0, 0.0, 0.0, 0.0];
        let col = op.apply(&e0).unwrap();
        for (c, e) in col.iter().zip([1.0, 0.5, 0.0, 0.0, 0.5]) {
            assert!((c - e).abs() < 1e-15);
        }
        for v in op.apply(&[1.0; 5]).unwrap() {
            assert!((v - 2.0).abs() < 1e-14);
        }
        for v in op.apply_resolvent(1.0, &[1.0; 5]).unwrap() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let v = [0.3, -1.0, 2.0, 0.0, 5.0];
        let same = op.apply_resolvent(0.0, &v).unwrap();
        for (a, b) in same.iter().zip(v) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(op.apply(&[1.0; 4]).is_err());
    }

    #[test]
    fn resolvent_guards_spectrum() {
        let op = CirculantOperator::from_first_row(vec![1.0, -2.0, 0.0, -2.0]);
        assert!(op.min_eigenvalue() < 0.0);
        let err = op.resolvent(1.0 / 3.0).err().unwrap();
        assert!(matches!(err, Error::SpectrumNotPositive { .. }));
        assert!(op.clamp_spectrum().resolvent(1.0 / 3.0).is_ok());
        let _ = op.apply_resolvent(0.25, &[1.0; 4]).unwrap();
    }

    #[test]
    fn toeplitz_examples() {
        let spec = KernelSpec::with_params(2.0, 0.01, 0.0).unwrap();
        let band = build_band(&spec, 10).unwrap();
        let mut e0 = vec![0.0; 10];
        e0[0] = 1.0;
        let col = apply_toeplitz(&band, &e0).unwrap();
        for (i, c) in col.iter().enumerate() {
            assert_eq!(*c, band.entry(i, 0));
        }
        let identity = build_band(&KernelSpec::with_params(1.0, 1.0, 0.0).unwrap(), 5).unwrap();
        let v = [1.0, -2.0, 3.0, 0.5, 7.0];
        assert_eq!(apply_toeplitz(&identity, &v).unwrap(), v.to_vec());
    }

    #[test]
    fn spectral_matches_dense_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..120 {
            let sigma = rng.random_range(0.3..8.0);
            let tau = rng.random_range(1e-4..0.9);
            let eps = if trial % 3 == 0 { 0.0 } else { rng.random_range(0.0..0.5) };
            let spec = KernelSpec::with_params(sigma, tau, eps).unwrap();
            let k = band_half_width(&spec).unwrap();
            let n = rng.random_range(k + 1..=(k + 1).max(200));
            let band = build_band(&spec, n).unwrap();
            let op = embed_circulant(&band);
            assert!(op.size() <= 512);
            let dense = dense_circulant(&op);
            let v: Vec<f64> = (0..op.size()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let dv = &dense * DVector::from_column_slice(&v);
            assert!(rel_err(&op.apply(&v).unwrap(), dv.as_slice()) < 1e-10);

            let alpha = rng.random_range(0.05..3.0);
            if op.min_eigenvalue() * alpha > -0.5 {
                let sys = DMatrix::identity(op.size(), op.size()) + &dense * alpha;
                let x = sys.lu().solve(&DVector::from_column_slice(&v)).unwrap();
                assert!(rel_err(&op.apply_resolvent(alpha, &v).unwrap(), x.as_slice()) < 1e-8);
            }

            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let td = DMatrix::from_fn(n, n, |i, j| band.entry(i, j)) * DVector::from_column_slice(&z);
            let banded = apply_toeplitz(&band, &z).unwrap();
            for (a, b) in banded.iter().zip(td.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!(rel_err(&op.apply_leading_block(&z).unwrap(), td.as_slice()) < 1e-10);
        }
    }

    #[test]
    fn padded_embedding_keeps_leading_block() {
        let band = build_band(&KernelSpec::new(3.0).unwrap(), 37).unwrap();
        let m = fast_fft_size(37 + band.half_width());
        assert_eq!(m, 48);
        let op = embed_circulant_sized(&band, m).unwrap();
        for i in 0..37 {
            for j in 0..37 {
                assert_eq!(op.entry(i, j), band.entry(i, j));
            }
        }
        assert!(embed_circulant_sized(&band, 43).is_err());
    }

    #[test]
    fn fast_sizes_are_even_and_smooth() {
        assert_eq!(fast_fft_size(0), 2);
        assert_eq!(fast_fft_size(7), 8);
        assert_eq!(fast_fft_size(4148), 4320);
        assert_eq!(fast_fft_size(16436), 17280);
        for n in 1..500 {
            let m = fast_fft_size(n);
            let smooth = |k: usize| {
                let mut r = k;
                for p in [2, 3, 5] {
                    while r.is_multiple_of(p) {
                        r /= p;
                    }
                }
                r == 1
            };
            assert!(m >= n && m.is_multiple_of(2) && smooth(m));
            assert!((n..m).all(|k| !k.is_multiple_of(2) || !smooth(k)));
        }
    }

    proptest! {
        #[test]
        fn embedding_is_exact(sigma in 0.2..12.0f64, tau in 1e-5..1.0f64, extra in 1usize..80) {
            let spec = KernelSpec::with_params(sigma, tau, 0.0).unwrap();
            let k = band_half_width(&spec).unwrap();
            let band = build_band(&spec, k + extra).unwrap();
            let op = embed_circulant(&band);
            prop_assert_eq!(op.size(), band.n() + k);
            for i in 0..band.n() {
                for j in 0..band.n() {
                    prop_assert_eq!(op.entry(i, j), band.entry(i, j));
                }
            }
            prop_assert!(op.eigenvalues().iter().all(|e| e.is_finite()));
        }

        #[test]
        fn half_width_monotone(s1 in 0.1..30.0f64, ds in 0.0..10.0f64, t1 in 1e-4..1.0f64, dt in 0.0..0.5f64) {
            let hw = |s: f64, t: f64| band_half_width(&KernelSpec::with_params(s, t, 0.0).unwrap()).unwrap();
            let t2 = (t1 + dt).min(1.0);
            prop_assert!(hw(s1, t1) <= hw(s1 + ds, t1));
            prop_assert!(hw(s1, t2) <= hw(s1, t1));
        }

        #[test]
        fn resolvent_contracts(v in prop::collection::vec(-5.0..5.0f64, 6), alpha in 0.0..10.0f64) {
            // eigenvalues of this row are 3, 1, 0 and 1
            let op = CirculantOperator::from_first_row(vec![1.0, 0.5, 0.5, 0.0, 0.5, 0.5]);
            prop_assume!(op.min_eigenvalue() >= -1e-12);
            let r = op.apply_resolvent(alpha, &v).unwrap();
            let n_in: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let n_out: f64 = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(n_out <= n_in * (1.0 + 1e-12) + 1e-12);
        }
    }
}
