use diffvar::bandwidth::BandwidthGrid;
use diffvar::diffseq::{standard_sequence, SequenceKind};
use diffvar::estimator::{pseudoresiduals, Sample};
use diffvar::simlab::{
    generate_sample, global_risk, pointwise_risk, risk_report, BandwidthRule, ErrorLaw, EstimatorSpec, FunctionSpec,
    HoelderClassSpec, RiskGrid, RiskOptions, Scenario, SequenceChoice,
};

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn local(h: f64) -> EstimatorSpec {
    EstimatorSpec::local(SequenceChoice::default(), 1, BandwidthRule::Fixed { h })
}

#[test]
fn generated_moments_match_the_model() {
    let reps = 100_000;
    for law in [ErrorLaw::Gaussian, ErrorLaw::ScaledUniform, ErrorLaw::StudentT { df: 9.0 }] {
        let s = Scenario::smooth_default(8).with_error_law(law);
        let i = 2;
        let x = s.design_points()[i];
        let draws: Vec<f64> = (0..reps)
            .map(|seed| generate_sample(&s, seed).unwrap().ys()[i])
            .collect();
        let (m, v) = mean_var(&draws);
        let (g, var) = (s.mean_at(x), s.variance_at(x));
        let se_mean = (var / reps as f64).sqrt();
        let se_var = var * ((law.fourth_moment() - 1.0) / reps as f64).sqrt();
        assert!((m - g).abs() < 4.0 * se_mean, "{law:?}: mean {m} vs {g}");
        assert!((v - var).abs() < 4.0 * se_var, "{law:?}: variance {v} vs {var}");
    }
}

#[test]
fn rice_risk_shrinks_like_one_over_n() {
    let r500 = pointwise_risk(&Scenario::homoscedastic(500, 1.0, 1.0), &EstimatorSpec::Rice, 0.5, 2000, 21).unwrap();
    let r2000 = pointwise_risk(&Scenario::homoscedastic(2000, 1.0, 1.0), &EstimatorSpec::Rice, 0.5, 2000, 21).unwrap();
    let ratio = r500.risk / r2000.risk;
    assert!((ratio - 4.0).abs() < 0.3 * 4.0, "ratio {ratio}");
}

#[test]
fn doubling_replications_halves_squared_standard_error() {
    let s = Scenario::homoscedastic(300, 0.0, 1.0);
    let a = pointwise_risk(&s, &EstimatorSpec::Rice, 0.5, 2000, 5).unwrap();
    let b = pointwise_risk(&s, &EstimatorSpec::Rice, 0.5, 4000, 6).unwrap();
    let ratio = b.std_error.powi(2) / a.std_error.powi(2);
    assert!((0.4..0.6).contains(&ratio), "ratio {ratio}");
}

#[test]
fn trapezoid_grid_refinement() {
    let s = Scenario::smooth_default(1000);
    let spec = local(0.15);
    let coarse = global_risk(&s, &spec, &RiskGrid::default(), 20, 8).unwrap();
    let fine = global_risk(&s, &spec, &RiskGrid::new(0.05, 0.95, 1001).unwrap(), 20, 8).unwrap();
    assert!((coarse.risk / fine.risk - 1.0).abs() < 0.01, "{} vs {}", coarse.risk, fine.risk);
}

#[test]
fn homoscedastic_estimate_is_unbiased() {
    let s = Scenario::homoscedastic(500, 1.0, 2.0);
    let opts = RiskOptions {
        grid: RiskGrid::default(),
        points: vec![0.5],
    };
    let report = risk_report(&s, &local(0.2), &opts, 2000, 4).unwrap();
    assert_eq!(report.global.failures, 0);
    let draws = diffvar_draws(&s, 0.2, 2000, 4);
    let (m, v) = mean_var(&draws);
    assert!((m - 2.0).abs() < 3.0 * (v / draws.len() as f64).sqrt(), "mean {m}");
    let mse: f64 = draws.iter().map(|d| (d - 2.0).powi(2)).sum::<f64>() / draws.len() as f64;
    assert!((mse - report.pointwise[0].risk.risk).abs() < 1e-12 * mse);
}

fn diffvar_draws(s: &Scenario, h: f64, reps: usize, seed: u64) -> Vec<f64> {
    diffvar::simlab::normality_experiment(s, &local(h), 0.5, reps, seed)
        .unwrap()
        .draws
}

#[test]
fn distant_pseudoresiduals_are_uncorrelated() {
    let s = Scenario::homoscedastic(5000, 0.0, 1.0);
    let seq = standard_sequence(SequenceKind::Gsjs);
    let r = seq.order();
    let reps = 500;
    let lag_corr = |z: &[f64], lag: usize| {
        let a = &z[..z.len() - lag];
        let b = &z[lag..];
        let (ma, va) = mean_var(a);
        let (mb, vb) = mean_var(b);
        let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() - 1) as f64;
        cov / (va * vb).sqrt()
    };
    let mut far = 0.0;
    let mut near = 0.0;
    for seed in 0..reps {
        let z = pseudoresiduals(&generate_sample(&s, seed).unwrap(), &seq).unwrap().squares();
        far += lag_corr(&z, r + 1);
        near += lag_corr(&z, 1);
    }
    far /= reps as f64;
    near /= reps as f64;
    assert!(far.abs() < 3.0 / (reps as f64).sqrt(), "lag r+1 correlation {far}");
    // neighbouring contrasts overlap, so their squares are positively correlated
    assert!(near > 0.2, "lag 1 correlation {near}");
}

#[test]
fn pseudoresidual_variance_tracks_the_variance_function() {
    let seq = standard_sequence(SequenceKind::FirstDifference);
    let mut deviations = Vec::new();
    for n in [500usize, 2000] {
        let s = Scenario::smooth_default(n);
        let xs = s.design_points();
        let i = n / 2;
        // exact variance of Δ_i from the model
        let exact: f64 = seq
            .coeffs()
            .iter()
            .enumerate()
            .map(|(j, d)| d * d * s.variance_at(xs[i + j]))
            .sum();
        deviations.push((exact - s.variance_at(xs[i])).abs());
        let reps = 20_000;
        let draws: Vec<f64> = (0..reps)
            .map(|seed| pseudoresiduals(&generate_sample(&s, seed).unwrap(), &seq).unwrap().values[i])
            .collect();
        let (_, v) = mean_var(&draws);
        assert!((v - exact).abs() < 4.0 * exact * (2.0 / reps as f64).sqrt(), "n={n}: {v} vs {exact}");
    }
    let shrink = deviations[0] / deviations[1];
    assert!((3.5..4.5).contains(&shrink), "deviation shrank by {shrink}");
}

#[test]
fn rough_mean_contrasts_decay_like_n_to_minus_beta() {
    let beta = 0.3;
    let seq = standard_sequence(SequenceKind::Gsjs);
    let sup = |n: usize| {
        // noise-free sample: the contrasts are exactly E Δ_i
        let xs = diffvar::estimator::equispaced_design(n);
        let ys = xs.iter().map(|x| (x - 0.5f64).abs().powf(beta)).collect();
        let pr = pseudoresiduals(&Sample::new(xs, ys).unwrap(), &seq).unwrap();
        pr.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    };
    let ns = [256usize, 512, 1024, 2048, 4096, 8192];
    let c = sup(ns[0]) * (ns[0] as f64).powf(beta);
    for &n in &ns[1..] {
        let s = sup(n);
        assert!(s <= 1.05 * c * (n as f64).powf(-beta), "n={n}: {s}");
        assert!(s >= 0.5 * c * (n as f64).powf(-beta), "n={n}: {s} decays faster than expected");
    }
}

#[test]
fn shifting_the_mean_leaves_risk_unchanged() {
    let a = Scenario::smooth_default(400);
    let b = a
        .clone()
        .with_mean(FunctionSpec::Constant { value: 5.0 }, HoelderClassSpec::new(2.0, 1.0, 5.0));
    let a = a.with_mean(FunctionSpec::Constant { value: 0.0 }, HoelderClassSpec::new(2.0, 1.0, 1.0));
    let ra = global_risk(&a, &local(0.2), &RiskGrid::default(), 50, 2).unwrap();
    let rb = global_risk(&b, &local(0.2), &RiskGrid::default(), 50, 2).unwrap();
    assert!((ra.risk - rb.risk).abs() < 1e-9 * ra.risk);
}

#[test]
fn cross_validation_is_close_to_the_best_candidate() {
    let s = Scenario::smooth_default(2048);
    let reps = 200;
    let seed = 99;
    let grid = BandwidthGrid::default_for(&s.design_points()).unwrap();
    let risk_grid = RiskGrid::default();
    let best = grid
        .candidates()
        .iter()
        .filter_map(|&h| global_risk(&s, &local(h), &risk_grid, reps, seed).ok())
        .map(|r| r.risk)
        .fold(f64::INFINITY, f64::min);
    let cv = EstimatorSpec::local(SequenceChoice::default(), 1, BandwidthRule::Cv { folds: 5, grid: None });
    let cv_risk = global_risk(&s, &cv, &risk_grid, reps, seed).unwrap();
    assert_eq!(cv_risk.failures, 0);
    let ratio = cv_risk.risk / best;
    assert!(ratio <= 1.5, "CV risk {} vs best {best}: ratio {ratio}", cv_risk.risk);
}

#[test]
fn reports_are_reproducible() {
    let s = Scenario::smooth_default(300).with_error_law(ErrorLaw::StudentT { df: 10.0 });
    let a = risk_report(&s, &local(0.2), &RiskOptions::default(), 30, 17).unwrap();
    let b = risk_report(&s, &local(0.2), &RiskOptions::default(), 30, 17).unwrap();
    assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    let c = risk_report(&s, &local(0.2), &RiskOptions::default(), 30, 18).unwrap();
    assert_ne!(a.global.risk, c.global.risk);
}
