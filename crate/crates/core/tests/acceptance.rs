//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line each and exits non-zero if any fails.

use std::time::Instant;

use diffvar::diffseq::{min_constant, optimal_sequence, standard_sequence, variance_factor, SequenceKind};
use diffvar::estimator::{gsjs_estimate, hkt_estimate, rice_estimate, Sample};
use diffvar::io::to_json_bytes;
use diffvar::simlab::{
    bias_variance_experiment, mean_effect_experiment, normality_experiment, rate_experiment, risk_report,
    BandwidthRule, BiasVarianceExperiment, ErrorLaw, EstimatorSpec, RateExperiment, RiskGrid, RiskOptions, Scenario,
    SequenceChoice,
};
use diffvar::smoother::{effective_weights, fit_at, Kernel, SmootherConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// fixed before any acceptance run
const SEED: u64 = 20261016;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn optimal_constants() -> Outcome {
    let mut worst: f64 = 0.0;
    for r in 1..=6 {
        let seq = optimal_sequence(r, 1e-9).map_err(|e| e.to_string())?;
        let gap = (variance_factor(&seq) - min_constant(r as i64).unwrap()).abs();
        worst = worst.max(gap);
    }
    check(worst < 1e-6, format!("max |C - (2r+1)/r| = {worst:.2e}"))
}

fn estimator_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let fd = standard_sequence(SequenceKind::FirstDifference);
    let gs = standard_sequence(SequenceKind::Gsjs);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(3..400);
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let ys: Vec<f64> = (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let s = Sample::equispaced(ys).unwrap();
        let rice = rice_estimate(&s).unwrap();
        let gsjs = gsjs_estimate(&s).unwrap();
        worst = worst.max((rice - hkt_estimate(&s, &fd).unwrap()).abs() / rice.max(1.0));
        worst = worst.max((gsjs - hkt_estimate(&s, &gs).unwrap()).abs() / gsjs.max(1.0));
    }
    check(worst <= 1e-12, format!("max relative gap over 1000 inputs = {worst:.2e}"))
}

fn smoother_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 3);
    let kernels = [Kernel::Epanechnikov, Kernel::Uniform, Kernel::Triangular, Kernel::Biweight];
    let mut worst_moment: f64 = 0.0;
    let mut worst_repro: f64 = 0.0;
    let mut cases = 0;
    for trial in 0..2000 {
        let n = rng.random_range(30..200);
        let mut xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let p = trial % 5;
        let cfg = SmootherConfig::new(rng.random_range(0.1..0.5))
            .with_kernel(kernels[rng.random_range(0..4)])
            .with_degree(p);
        let x = match trial % 4 {
            0 => 0.0,
            1 => 1.0,
            2 => xs[0],
            _ => rng.random(),
        };
        let Ok((w, h)) = effective_weights(&xs, &cfg, x) else {
            continue;
        };
        cases += 1;
        worst_moment = worst_moment.max((w.sum() - 1.0).abs());
        for q in 1..=p as i32 {
            worst_moment = worst_moment.max((w.moment(&xs, q) / h.powi(q)).abs());
        }
        let coeffs: Vec<f64> = (0..=p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let poly = |t: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * (2.0 * t - 1.0) + c);
        let zs: Vec<f64> = xs.iter().map(|&t| poly(t)).collect();
        let target = poly(x);
        let fit = fit_at(&xs, &zs, &cfg, x).map_err(|e| e.to_string())?;
        worst_repro = worst_repro.max((fit.value() - target).abs() / (1.0 + target.abs()));
    }
    check(
        worst_moment < 1e-9 && worst_repro < 1e-9 && cases > 1500,
        format!("{cases} fits, moment error {worst_moment:.2e}, reproduction error {worst_repro:.2e}"),
    )
}

fn unbiased_homoscedastic() -> Outcome {
    let s = Scenario::homoscedastic(500, 1.0, 2.0);
    let spec = EstimatorSpec::local(SequenceChoice::default(), 1, BandwidthRule::Fixed { h: 0.2 });
    let rep = normality_experiment(&s, &spec, 0.5, 2000, SEED).map_err(|e| e.to_string())?;
    let r = rep.draws.len() as f64;
    let mean = rep.draws.iter().sum::<f64>() / r;
    let sd = (rep.draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt();
    let z = (mean - 2.0) / (sd / r.sqrt());
    check(z.abs() <= 3.0, format!("mean {mean:.5}, z = {z:.2}"))
}

fn rates() -> (Outcome, Outcome) {
    let exp = RateExperiment {
        scenario: Scenario::smooth_default(512),
        ns: vec![512, 1024, 2048, 4096, 8192],
        estimator: EstimatorSpec::local(SequenceChoice::default(), 3, BandwidthRule::Rate { gamma: 2.0, scale: 1.0 }),
        gamma: 2.0,
        replications: 100,
        seed: SEED,
        grid: RiskGrid::default(),
        x0: 0.5,
    };
    match rate_experiment(&exp) {
        Err(e) => (Err(e.to_string()), Err(e.to_string())),
        Ok(rep) => {
            let g = rep.slope.unwrap_or(f64::NAN);
            let p = rep.pointwise_slope.unwrap_or(f64::NAN);
            (
                check((g + 0.8).abs() <= 0.15, format!("global slope {g:.3}")),
                check((p + 0.8).abs() <= 0.2, format!("pointwise slope {p:.3}")),
            )
        }
    }
}

fn bias_variance() -> Outcome {
    let hs: Vec<f64> = (0..8).map(|i| 0.025 * 10f64.powf(i as f64 / 7.0)).collect();
    let exp = BiasVarianceExperiment {
        scenario: Scenario::smooth_default(4096),
        sequence: SequenceChoice::default(),
        kernel: Kernel::Epanechnikov,
        degree: 1,
        bandwidths: hs,
        x0: 0.75,
        replications: 400_000,
        seed: SEED,
    };
    let rep = bias_variance_experiment(&exp).map_err(|e| e.to_string())?;
    let b = rep.bias_slope.map_or(f64::NAN, |f| f.slope);
    let v = rep.variance_slope.map_or(f64::NAN, |f| f.slope);
    check(
        (3.4..=4.6).contains(&b) && (-1.3..=-0.7).contains(&v),
        format!("squared-bias slope {b:.3}, variance slope {v:.3}"),
    )
}

fn normality() -> Outcome {
    let spec = EstimatorSpec::Local {
        sequence: SequenceChoice::Optimal { order: 2 },
        kernel: Kernel::Uniform,
        degree: 1,
        bandwidth: BandwidthRule::Power { scale: 4.4, exponent: 0.3 },
        expand_to_minimum: false,
    };
    let mut ok = true;
    let mut detail = Vec::new();
    for (n, law) in [(2000, ErrorLaw::Gaussian), (4000, ErrorLaw::StudentT { df: 9.0 })] {
        let s = Scenario::smooth_default(n).with_error_law(law);
        let r = normality_experiment(&s, &spec, 0.5, 1000, SEED).map_err(|e| e.to_string())?;
        ok &= r.skewness.abs() <= 0.15 && r.excess_kurtosis.abs() <= 0.3 && r.ks_distance <= 0.05;
        detail.push(format!(
            "n={n}: skew {:.3}, ex.kurt {:.3}, KS {:.4}",
            r.skewness, r.excess_kurtosis, r.ks_distance
        ));
    }
    check(ok, detail.join("; "))
}

fn mean_effect() -> Outcome {
    let rep = mean_effect_experiment(2.0, 0.3, &[1024, 2048, 4096], 200, SEED).map_err(|e| e.to_string())?;
    let last = rep.rows.last().unwrap();
    let ratios: Vec<String> = rep.rows.iter().map(|r| format!("{:.5}", r.ratio)).collect();
    check(
        last.ratio <= 1.5 && rep.non_increasing,
        format!("ratios {} (n=4096 ± {:.5})", ratios.join(", "), last.ratio_std_error),
    )
}

fn determinism() -> Outcome {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let s = Scenario::smooth_default(600).with_error_law(ErrorLaw::StudentT { df: 12.0 });
            let cv = EstimatorSpec::local(SequenceChoice::default(), 1, BandwidthRule::Cv { folds: 5, grid: None });
            let a = risk_report(&s, &cv, &RiskOptions::default(), 40, SEED).unwrap();
            let b = mean_effect_experiment(2.0, 0.3, &[256, 512], 20, SEED).unwrap();
            (to_json_bytes(&a), to_json_bytes(&b))
        })
    };
    let one = run(1);
    let three = run(3);
    let again = run(3);
    check(
        one == three && three == again,
        format!("{} + {} JSON bytes compared across 1 and 3 threads", one.0.len(), one.1.len()),
    )
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 optimal-sequence constants", optimal_constants()),
        ("2 estimator algebra", estimator_algebra()),
        ("3 smoother exactness", smoother_exactness()),
        ("4 unbiased under homoscedasticity", unbiased_homoscedastic()),
    ];
    let (global, pointwise) = rates();
    results.push(("5 global rate", global));
    results.push(("6 pointwise rate", pointwise));
    results.push(("7 bias/variance structure", bias_variance()));
    results.push(("8 normality", normality()));
    results.push(("9 mean insensitivity", mean_effect()));
    results.push(("10 determinism", determinism()));

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(d) => println!("PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d}");
            }
        }
    }
    println!("{} of {} criteria passed in {:.1?}", results.len() - failed, results.len(), started.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
