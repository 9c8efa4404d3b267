use envelofit::kernel::KernelSpec;
use envelofit::pipeline::{decompose_basic, decompose_debiased, Decomposition, PipelineParams};
use envelofit::solver::{solve_reference_dense, SolveParams};
use envelofit::synth::{generate_trial, TrialSpec};
use envelofit::{BoxConstraint, Signal};

fn short_trial(seed: u64, duration_s: f64) -> Signal {
    generate_trial(&TrialSpec {
        seed,
        duration_s,
        ..TrialSpec::default()
    })
    .unwrap()
    .observation
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn assert_sandwich(y: &Signal, d: &Decomposition) {
    let slack = 10.0 * d.max_tol();
    let (l, u, x) = (d.lower_env.samples(), d.upper_env.samples(), d.smooth.samples());
    for (i, &yi) in y.samples().iter().enumerate() {
        assert!(l[i] - yi <= slack, "lower envelope above y at {i}");
        assert!(yi - u[i] <= slack, "upper envelope below y at {i}");
        assert!(l[i] - x[i] <= slack && x[i] - u[i] <= slack, "smooth outside envelopes at {i}");
    }
    if let (Some(cl), Some(cu)) = (&d.coarse_lower, &d.coarse_upper) {
        for (i, &yi) in y.samples().iter().enumerate() {
            assert!(cl.samples()[i] - yi <= slack && yi - cu.samples()[i] <= slack);
        }
    }
}

fn assert_additive(y: &Signal, d: &Decomposition) {
    for i in 0..y.len() {
        let (yi, xi, ti) = (y.samples()[i], d.smooth.samples()[i], d.transient.samples()[i]);
        assert_eq!(ti, yi - xi);
        let ulp = f64::EPSILON * xi.abs().max(ti.abs());
        assert!((xi + ti - yi).abs() <= ulp, "sample {i}");
    }
}

#[test]
fn constant_signal_collapses() {
    let y = Signal::new(vec![0.7; 300], 10.0).unwrap();
    let p = PipelineParams::default();
    for d in [decompose_basic(&y, &p).unwrap(), decompose_debiased(&y, &p).unwrap()] {
        assert!(d.all_converged());
        let tol = 10.0 * d.max_tol();
        for s in [&d.smooth, &d.lower_env, &d.upper_env] {
            assert!(s.samples().iter().all(|v| (v - 0.7).abs() <= tol));
        }
        assert!(d.transient.samples().iter().all(|v| v.abs() <= tol));
        if let Some(trend) = &d.trend {
            assert!(trend.samples().iter().all(|v| (v - 0.7).abs() <= tol));
        }
    }
}

#[test]
fn invariants_on_synthetic_trials() {
    let p = PipelineParams::default();
    for seed in 0..3 {
        let y = short_trial(seed, 60.0);
        let basic = decompose_basic(&y, &p).unwrap();
        let debiased = decompose_debiased(&y, &p).unwrap();
        for d in [&basic, &debiased] {
            assert!(d.all_converged());
            d.ensure_converged().unwrap();
            assert_sandwich(&y, d);
            assert_additive(&y, d);
            for s in &d.diagnostics {
                assert!(s.summary.residual_inf < s.summary.tol);
            }
        }
        assert_eq!(debiased.diagnostics.len(), 5);
        assert_eq!(basic.diagnostics.len(), 3);
    }
}

#[test]
fn debiased_is_shift_equivariant() {
    let p = PipelineParams::default();
    let y = short_trial(11, 60.0);
    let base = decompose_debiased(&y, &p).unwrap();
    for c in [3.0, -12.5] {
        let shifted = y.like(y.samples().iter().map(|v| v + c).collect()).unwrap();
        let d = decompose_debiased(&shifted, &p).unwrap();
        let tol = 100.0 * base.max_tol().max(d.max_tol());
        let expected: Vec<f64> = base.smooth.samples().iter().map(|v| v + c).collect();
        let diff = max_abs_diff(d.smooth.samples(), &expected);
        assert!(diff <= tol, "shift {c}: {diff} > {tol}");
    }
}

#[test]
fn trend_follows_added_ramp() {
    let p = PipelineParams::default();
    let y = short_trial(4, 100.0);
    let n = y.len();
    let ramp: Vec<f64> = (0..n).map(|i| 4.0 * i as f64 / n as f64).collect();
    let ramped = y.like(y.samples().iter().zip(&ramp).map(|(a, b)| a + b).collect()).unwrap();
    let d = decompose_debiased(&ramped, &p).unwrap();
    let trend = d.trend.unwrap();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mt, mr) = (mean(trend.samples()), mean(&ramp));
    let cov: f64 = trend.samples().iter().zip(&ramp).map(|(a, b)| (a - mt) * (b - mr)).sum();
    let vt: f64 = trend.samples().iter().map(|a| (a - mt).powi(2)).sum();
    let vr: f64 = ramp.iter().map(|b| (b - mr).powi(2)).sum();
    let corr = cov / (vt * vr).sqrt();
    assert!(corr > 0.9, "correlation {corr}");
}

#[test]
fn basic_pipeline_matches_dense_stages() {
    // every stage recomputed with the dense reference solver
    let p = PipelineParams::default();
    let y = short_trial(21, 25.0);
    let d = decompose_basic(&y, &p).unwrap();
    let stage = |lambda: f64, sigma: f64, bounds: BoxConstraint| {
        let sp = SolveParams {
            y: y.clone(),
            lambda,
            kernel: KernelSpec::with_params(sigma, p.tau, p.epsilon).unwrap(),
            bounds,
            config: p.solver,
        };
        solve_reference_dense(&sp).unwrap().x_hat
    };
    let ys = y.samples();
    let lower = stage(p.lambda0, p.sigma0, BoxConstraint::scalar_below(y.min(), ys).unwrap());
    let upper = stage(p.lambda0, p.sigma0, BoxConstraint::scalar_above(ys, y.max()).unwrap());
    let smooth = stage(p.lambda1, p.sigma1, BoxConstraint::between(lower.samples(), upper.samples()).unwrap());
    assert!(max_abs_diff(d.lower_env.samples(), lower.samples()) < 1e-4);
    assert!(max_abs_diff(d.upper_env.samples(), upper.samples()) < 1e-4);
    assert!(max_abs_diff(d.smooth.samples(), smooth.samples()) < 1e-4);
}

#[test]
fn parameter_preconditions() {
    let y = short_trial(0, 20.0);
    let mut p = PipelineParams {
        lambda1: 60.0,
        ..PipelineParams::default()
    };
    assert!(decompose_basic(&y, &p).is_err());
    p.lambda1 = 0.5;
    p.sigma0 = 30.0;
    assert!(decompose_basic(&y, &p).is_err());
    p.sigma0 = 5.0;
    p.coarse = None;
    assert!(decompose_debiased(&y, &p).is_err());
    assert!(decompose_basic(&y, &p).is_ok());
}
