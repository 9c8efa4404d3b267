//! Closed-form proximity operators for the separable part of the dual
//! objective.
//!
//! For an interval `[a, b]` let `q(s) = (2s - P(s)) P(s) / 2`, where `P` is
//! the clamp onto the interval. The dual data term is
//! `sum_n lambda * q_n(y_n - z_n / lambda)`; its proximity operator and the
//! matching reflection `2 J - I` act sample by sample through the thresholds
//!
//! ```text
//! c_n = lambda (y_n - (1 + alpha/lambda) a_n)     (+inf when a_n = -inf)
//! d_n = lambda (y_n - (1 + alpha/lambda) b_n)     (-inf when b_n = +inf)
//! ```
//!
//! Since `a_n <= b_n` we always have `d_n <= c_n`, and the quadratic middle
//! branch applies for `d_n <= t_n <= c_n`. Ties go to the middle branch; the
//! maps are continuous there.

use crate::error::{check_len, check_positive, Error, Result};
use crate::signal::BoxConstraint;

/// `argmin_x (x - s)^2 / 2 + alpha q(x)` for the interval `[a, b]`
/// (`None` is an unbounded side).
pub fn prox_scalar_q(s: f64, a: Option<f64>, b: Option<f64>, alpha: f64) -> Result<f64> {
    check_positive("alpha", alpha)?;
    if let (Some(lo), Some(hi)) = (a, b) {
        if lo > hi {
            return Err(Error::InfeasibleBounds {
                index: 0,
                lower: lo,
                upper: hi,
            });
        }
    }
    let scale = 1.0 + alpha;
    if let Some(lo) = a {
        if s < scale * lo {
            return Ok(s - alpha * lo);
        }
    }
    if let Some(hi) = b {
        if s > scale * hi {
            return Ok(s - alpha * hi);
        }
    }
    Ok(s / scale)
}

/// Per-sample data and thresholds of the separable dual term.
#[derive(Debug, Clone)]
pub struct ProxParams {
    lambda: f64,
    alpha: f64,
    c: Vec<Option<f64>>,
    d: Vec<Option<f64>>,
    samples: Vec<Sample>,
}

/// Everything the per-sample maps read, packed together. Unbounded sides
/// have an infinite threshold, so their branch is never taken.
#[derive(Debug, Clone, Copy)]
struct Sample {
    y: f64,
    lower: f64,
    upper: f64,
    c: f64,
    d: f64,
}

impl ProxParams {
    pub fn new(lambda: f64, alpha: f64, y: &[f64], bounds: &BoxConstraint) -> Result<Self> {
        check_positive("lambda", lambda)?;
        check_positive("alpha", alpha)?;
        check_len("prox bounds", y.len(), bounds.len())?;
        let scale = 1.0 + alpha / lambda;
        let c: Vec<Option<f64>> = y
            .iter()
            .zip(bounds.lower())
            .map(|(&yn, a)| a.map(|a| lambda * (yn - scale * a)))
            .collect();
        let d: Vec<Option<f64>> = y
            .iter()
            .zip(bounds.upper())
            .map(|(&yn, b)| b.map(|b| lambda * (yn - scale * b)))
            .collect();
        let samples = (0..y.len())
            .map(|n| Sample {
                y: y[n],
                lower: bounds.lower()[n].unwrap_or(0.0),
                upper: bounds.upper()[n].unwrap_or(0.0),
                c: c[n].unwrap_or(f64::INFINITY),
                d: d[n].unwrap_or(f64::NEG_INFINITY),
            })
            .collect();
        Ok(Self {
            lambda,
            alpha,
            c,
            d,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Upper threshold `c_n`; `None` is `+inf`.
    pub fn c(&self) -> &[Option<f64>] {
        &self.c
    }

    /// Lower threshold `d_n`; `None` is `-inf`.
    pub fn d(&self) -> &[Option<f64>] {
        &self.d
    }

    /// Proximity operator at sample `n`.
    #[inline]
    pub fn prox_at(&self, n: usize, t: f64) -> f64 {
        let s = &self.samples[n];
        if t < s.d {
            t + self.alpha * s.upper
        } else if t > s.c {
            t + self.alpha * s.lower
        } else {
            (self.alpha * s.y + t) / (1.0 + self.alpha / self.lambda)
        }
    }

    /// Reflected proximity operator `2 J - I` at sample `n`. All three
    /// branches are evaluated and one is selected, which keeps the loop in
    /// the solver free of data-dependent jumps.
    #[inline]
    pub fn reflect_at(&self, n: usize, t: f64) -> f64 {
        let s = &self.samples[n];
        let ratio = self.alpha / self.lambda;
        let middle = (2.0 * self.alpha * s.y + (1.0 - ratio) * t) / (1.0 + ratio);
        let upper = t + 2.0 * self.alpha * s.upper;
        let lower = t + 2.0 * self.alpha * s.lower;
        let v = if t > s.c { lower } else { middle };
        if t < s.d {
            upper
        } else {
            v
        }
    }
}

/// Proximity operator of `alpha * sum_n lambda q_n(y_n - t_n / lambda)`.
pub fn prox_r(t: &[f64], p: &ProxParams) -> Result<Vec<f64>> {
    check_len("prox input", p.len(), t.len())?;
    Ok(t.iter().enumerate().map(|(n, &tn)| p.prox_at(n, tn)).collect())
}

/// Reflected operator `2 J - I` on the stacked variable `(t, t~)`. The
/// padding block is reflected about the indicator of `{0}`, so `v~ = -t~`.
pub fn reflect_g(t: &[f64], t_tilde: &[f64], p: &ProxParams) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len("reflection input", p.len(), t.len())?;
    let v = t.iter().enumerate().map(|(n, &tn)| p.reflect_at(n, tn)).collect();
    let v_tilde = t_tilde.iter().map(|x| -x).collect();
    Ok((v, v_tilde))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn q(x: f64, a: Option<f64>, b: Option<f64>) -> f64 {
        let p = clamp(x, a, b);
        0.5 * (2.0 * x - p) * p
    }

    fn clamp(x: f64, a: Option<f64>, b: Option<f64>) -> f64 {
        x.max(a.unwrap_or(f64::NEG_INFINITY)).min(b.unwrap_or(f64::INFINITY))
    }

    /// Brute-force minimizer of a convex, C^1 1-D objective: grid scan and
    /// golden-section search locate the minimum, then bisection on the sign
    /// of the derivative `df` polishes it past the resolution that function
    /// values alone allow.
    fn brute_argmin(f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, center: f64, radius: f64) -> f64 {
        let steps = 2000;
        let h = 2.0 * radius / steps as f64;
        let mut best = center - radius;
        let mut best_val = f(best);
        for i in 1..=steps {
            let x = center - radius + i as f64 * h;
            let v = f(x);
            if v < best_val {
                best = x;
                best_val = v;
            }
        }
        let (mut lo, mut hi) = (best - h, best + h);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let (mut f1, mut f2) = (f(x1), f(x2));
        while hi - lo > 1e-6 * (1.0 + radius) {
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = f(x2);
            }
        }
        // widen until the derivative brackets a sign change
        let mut width = hi - lo;
        while df(lo) > 0.0 || df(hi) < 0.0 {
            width *= 2.0;
            lo -= width;
            hi += width;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if df(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Scalar prox oracle; `q' = clamp`.
    fn oracle_scalar(s: f64, a: Option<f64>, b: Option<f64>, alpha: f64) -> f64 {
        brute_argmin(
            |x| 0.5 * (x - s) * (x - s) + alpha * q(x, a, b),
            |x| x - s + alpha * clamp(x, a, b),
            s,
            2.0 * (s.abs() + a.map_or(0.0, f64::abs) + b.map_or(0.0, f64::abs) + 1.0),
        )
    }

    #[test]
    fn scalar_examples() {
        assert_eq!(prox_scalar_q(0.0, Some(-1.0), Some(1.0), 1.0).unwrap(), 0.0);
        assert_eq!(prox_scalar_q(3.0, Some(-1.0), Some(1.0), 1.0).unwrap(), 2.0);
        assert_eq!(prox_scalar_q(1.0, Some(-1.0), Some(1.0), 1.0).unwrap(), 0.5);
        for (s, expected) in [(3.0, 2.0), (1.0, 0.5)] {
            let oracle = oracle_scalar(s, Some(-1.0), Some(1.0), 1.0);
            assert!((oracle - expected).abs() < 1e-8);
        }
        assert!(prox_scalar_q(0.0, Some(1.0), Some(0.0), 1.0).is_err());
        assert!(prox_scalar_q(0.0, None, None, 0.0).is_err());
    }

    fn unit_params(t: f64) -> (ProxParams, Vec<f64>) {
        let b = BoxConstraint::between(&[-1.0], &[1.0]).unwrap();
        (ProxParams::new(1.0, 1.0, &[0.0], &b).unwrap(), vec![t])
    }

    #[test]
    fn prox_r_examples() {
        let (p, _) = unit_params(0.0);
        assert_eq!(p.c(), &[Some(2.0)]);
        assert_eq!(p.d(), &[Some(-2.0)]);
        assert_eq!(prox_r(&[0.0], &p).unwrap(), vec![0.0]);
        assert_eq!(prox_r(&[5.0], &p).unwrap(), vec![4.0]);
        assert_eq!(prox_r(&[-5.0], &p).unwrap(), vec![-4.0]);
        // the same values through the change of variables and the scalar prox
        for (t, expected) in [(5.0, 4.0), (-5.0, -4.0)] {
            let w = prox_scalar_q(0.0 - t / 1.0, Some(-1.0), Some(1.0), 1.0).unwrap();
            assert_eq!(1.0 * (0.0 - w), expected);
        }
        assert!(prox_r(&[0.0, 1.0], &p).is_err());
    }

    #[test]
    fn reflect_examples() {
        let (p, _) = unit_params(0.0);
        let (v, vt) = reflect_g(&[0.0], &[7.0], &p).unwrap();
        assert_eq!(v, vec![0.0]);
        assert_eq!(vt, vec![-7.0]);
        let (v, _) = reflect_g(&[5.0], &[], &p).unwrap();
        assert_eq!(v, vec![3.0]);
        assert_eq!(v[0], 2.0 * prox_r(&[5.0], &p).unwrap()[0] - 5.0);
    }

    #[test]
    fn ties_are_continuous() {
        let b = BoxConstraint::between(&[-0.7], &[1.3]).unwrap();
        let p = ProxParams::new(2.5, 0.8, &[0.4], &b).unwrap();
        for thr in [p.c()[0].unwrap(), p.d()[0].unwrap()] {
            let at = p.prox_at(0, thr);
            for delta in [1e-9, -1e-9] {
                assert!((p.prox_at(0, thr + delta) - at).abs() < 1e-8);
                assert!((p.reflect_at(0, thr + delta) - p.reflect_at(0, thr)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn pinned_interval_forces_value() {
        // a = b: c and d coincide and the middle branch shrinks to a point.
        let b = BoxConstraint::between(&[0.5], &[0.5]).unwrap();
        let p = ProxParams::new(2.0, 1.0, &[1.0], &b).unwrap();
        assert_eq!(p.c(), p.d());
        for t in [-10.0, -0.3, 0.0, 2.0, 50.0] {
            let r = p.prox_at(0, t);
            let oracle = oracle_prox_r(t, 1.0, Some(0.5), Some(0.5), 2.0, 1.0);
            assert!((r - oracle).abs() < 1e-8, "t={t}: {r} vs {oracle}");
        }
    }

    /// `r = lambda (y - argmin_w { lambda^2/2 (w - (y - t/lambda))^2 + alpha lambda q(w) })`.
    fn oracle_prox_r(t: f64, y: f64, a: Option<f64>, b: Option<f64>, lambda: f64, alpha: f64) -> f64 {
        let w0 = y - t / lambda;
        let w = brute_argmin(
            |w| 0.5 * lambda * lambda * (w - w0) * (w - w0) + alpha * lambda * q(w, a, b),
            |w| lambda * lambda * (w - w0) + alpha * lambda * clamp(w, a, b),
            w0,
            2.0 * (w0.abs() + a.map_or(0.0, f64::abs) + b.map_or(0.0, f64::abs) + 1.0),
        );
        lambda * (y - w)
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..1000 {
            let lambda = 10f64.powf(rng.random_range(-1.0..1.5));
            let alpha = 10f64.powf(rng.random_range(-1.0..1.0));
            let y = rng.random_range(-3.0..3.0);
            let lo = rng.random_range(-3.0..3.0);
            let hi = lo + rng.random_range(0.0..3.0);
            let a = (i % 4 != 1).then_some(lo);
            let b = (i % 4 != 2).then_some(hi);
            let t = rng.random_range(-5.0..5.0) * lambda;
            let bounds = BoxConstraint::new(vec![a], vec![b]).unwrap();
            let p = ProxParams::new(lambda, alpha, &[y], &bounds).unwrap();
            let got = p.prox_at(0, t);
            let want = oracle_prox_r(t, y, a, b, lambda, alpha);
            assert!((got - want).abs() < 1e-8 * (1.0 + lambda), "case {i}: {got} vs {want}");

            let s = rng.random_range(-6.0..6.0);
            let j = prox_scalar_q(s, a, b, alpha).unwrap();
            let oracle = oracle_scalar(s, a, b, alpha);
            assert!((j - oracle).abs() < 1e-8, "scalar case {i}: {j} vs {oracle}");
        }
    }

    proptest! {
        #[test]
        fn reflection_is_two_prox_minus_identity(
            rows in prop::collection::vec(
                (-4.0..4.0f64, prop::option::of(-3.0..0.0f64), prop::option::of(0.0..3.0f64), -30.0..30.0f64),
                1..30),
            lambda in 0.1..50.0f64,
            alpha in 0.05..5.0f64,
        ) {
            let y: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let bounds = BoxConstraint::new(rows.iter().map(|r| r.1).collect(), rows.iter().map(|r| r.2).collect()).unwrap();
            let t: Vec<f64> = rows.iter().map(|r| r.3).collect();
            let p = ProxParams::new(lambda, alpha, &y, &bounds).unwrap();
            let r = prox_r(&t, &p).unwrap();
            let (v, _) = reflect_g(&t, &[], &p).unwrap();
            for n in 0..t.len() {
                let want = 2.0 * r[n] - t[n];
                prop_assert!((v[n] - want).abs() <= 1e-12 * (1.0 + want.abs()));
                if let (Some(c), Some(d)) = (p.c()[n], p.d()[n]) {
                    prop_assert!(d <= c);
                }
            }
        }

        #[test]
        fn scalar_prox_is_nonexpansive(
            s1 in -20.0..20.0f64, s2 in -20.0..20.0f64,
            a in prop::option::of(-5.0..0.0f64), b in prop::option::of(0.0..5.0f64),
            alpha in 0.01..10.0f64,
        ) {
            let j1 = prox_scalar_q(s1, a, b, alpha).unwrap();
            let j2 = prox_scalar_q(s2, a, b, alpha).unwrap();
            prop_assert!((j1 - j2).abs() <= (s1 - s2).abs() + 1e-12);
        }

        #[test]
        fn unbounded_prox_is_scaling(s in -100.0..100.0f64, alpha in 0.01..10.0f64) {
            prop_assert_eq!(prox_scalar_q(s, None, None, alpha).unwrap(), s / (1.0 + alpha));
        }
    }
}
