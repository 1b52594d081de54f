use diffvar::diffseq::{
    min_constant, optimal_sequence, standard_sequence, validate, variance_factor, DifferenceSequence, SequenceKind,
};
use diffvar::estimator::{
    estimate_variance, gsjs_estimate, hkt_estimate, pseudoresiduals, rice_estimate, Sample, VariancePlan,
};
use diffvar::smoother::{effective_weights, fit_at, Kernel, SmootherConfig};
use proptest::collection::vec;
use proptest::prelude::*;

fn sequence_from(raw: &[f64]) -> Option<DifferenceSequence> {
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let c: Vec<f64> = raw.iter().map(|v| v - mean).collect();
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-3 {
        return None;
    }
    validate(&c.iter().map(|v| v / norm).collect::<Vec<_>>()).ok()
}

macro_rules! minimality {
    ($name:ident, $r:expr) => {
        proptest! {
            #![proptest_config(ProptestConfig::with_cases(10_000))]
            #[test]
            fn $name(raw in vec(-1.0f64..1.0, $r + 1)) {
                let seq = sequence_from(&raw);
                prop_assume!(seq.is_some());
                let seq = seq.unwrap();
                prop_assert!(variance_factor(&seq) >= min_constant($r).unwrap() - 1e-9);
            }
        }
    };
}

minimality!(variance_factor_at_least_minimum_r1, 1);
minimality!(variance_factor_at_least_minimum_r2, 2);
minimality!(variance_factor_at_least_minimum_r3, 3);
minimality!(variance_factor_at_least_minimum_r4, 4);
minimality!(variance_factor_at_least_minimum_r5, 5);

proptest! {
    #[test]
    fn variance_factor_sign_and_reversal_invariant(raw in vec(-1.0f64..1.0, 2..8)) {
        let seq = sequence_from(&raw);
        prop_assume!(seq.is_some());
        let seq = seq.unwrap();
        let c = variance_factor(&seq);
        prop_assert!((variance_factor(&seq.negated()) - c).abs() < 1e-12);
        prop_assert!((variance_factor(&seq.reversed()) - c).abs() < 1e-12);
    }
}

#[test]
fn optimal_sequences_validate_and_attain_the_minimum() {
    for r in 1..=6 {
        let seq = optimal_sequence(r, 1e-9).unwrap();
        assert!(validate(seq.coeffs()).is_ok());
        assert_eq!(seq.order(), r);
        assert!((variance_factor(&seq) - min_constant(r as i64).unwrap()).abs() < 1e-6);
    }
}

fn sorted_design(raw: Vec<f64>) -> Vec<f64> {
    let mut xs = raw;
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

fn kernel_of(i: usize) -> Kernel {
    [Kernel::Epanechnikov, Kernel::Uniform, Kernel::Triangular, Kernel::Biweight][i]
}

fn poly(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn moment_conditions_and_reproduction(
        raw in vec(0.001f64..0.999, 30..150),
        kernel in 0usize..4,
        p in 0usize..=4,
        h in 0.08f64..0.5,
        where_ in 0usize..4,
        xr in 0.0f64..1.0,
        coeffs in vec(-1.0f64..1.0, 5),
    ) {
        let xs = sorted_design(raw);
        // boundary, first design point, interior
        let x = [0.0, 1.0, xs[0], xr][where_];
        let cfg = SmootherConfig::new(h).with_kernel(kernel_of(kernel)).with_degree(p);
        let Ok((w, h_used)) = effective_weights(&xs, &cfg, x) else {
            return Ok(());
        };
        prop_assert!((w.sum() - 1.0).abs() < 1e-9);
        for q in 1..=p as i32 {
            prop_assert!((w.moment(&xs, q) / h_used.powi(q)).abs() < 1e-9, "q = {}", q);
        }
        for (i, &xi) in xs.iter().enumerate() {
            if (x - xi).abs() > h_used {
                prop_assert_eq!(w.get(i), 0.0);
            }
        }
        // polynomial of degree p in the scaled abscissa
        let c = &coeffs[..=p];
        let zs: Vec<f64> = xs.iter().map(|xi| poly(c, (xi - 0.5) / 0.5)).collect();
        let fit = fit_at(&xs, &zs, &cfg, x).unwrap();
        let target = poly(c, (x - 0.5) / 0.5);
        prop_assert!((fit.value() - target).abs() < 1e-9 * (1.0 + target.abs()));
        let inner = w.dot(&zs);
        prop_assert!((fit.value() - inner).abs() <= 1e-10 * fit.value().abs().max(1e-3));
    }

    #[test]
    fn scalar_estimators_agree_with_hkt(ys in vec(-10.0f64..10.0, 3..200)) {
        let s = Sample::equispaced(ys).unwrap();
        let rice = rice_estimate(&s).unwrap();
        let hkt1 = hkt_estimate(&s, &standard_sequence(SequenceKind::FirstDifference)).unwrap();
        prop_assert!((rice - hkt1).abs() <= 1e-12 * rice.max(1.0));
        let gsjs = gsjs_estimate(&s).unwrap();
        let hkt2 = hkt_estimate(&s, &standard_sequence(SequenceKind::Gsjs)).unwrap();
        prop_assert!((gsjs - hkt2).abs() <= 1e-12 * gsjs.max(1.0));
    }

    #[test]
    fn shift_and_scale(
        ys in vec(-5.0f64..5.0, 40..120),
        shift in -100.0f64..100.0,
        scale in 0.1f64..10.0,
        gsjs in any::<bool>(),
    ) {
        let seq = standard_sequence(if gsjs { SequenceKind::Gsjs } else { SequenceKind::FirstDifference });
        let cfg = SmootherConfig::new(0.3);
        let grid = [0.1, 0.5, 0.9];
        let base = Sample::equispaced(ys.clone()).unwrap();
        let shifted = Sample::equispaced(ys.iter().map(|y| y + shift).collect()).unwrap();
        let scaled = Sample::equispaced(ys.iter().map(|y| y * scale).collect()).unwrap();
        let a = estimate_variance(&base, &seq, &cfg, &grid).unwrap();
        let b = estimate_variance(&shifted, &seq, &cfg, &grid).unwrap();
        let c = estimate_variance(&scaled, &seq, &cfg, &grid).unwrap();
        let ha = hkt_estimate(&base, &seq).unwrap();
        prop_assert!((hkt_estimate(&shifted, &seq).unwrap() - ha).abs() < 1e-8 * (1.0 + ha));
        prop_assert!((hkt_estimate(&scaled, &seq).unwrap() - scale * scale * ha).abs() < 1e-10 * (1.0 + scale * scale * ha));
        for i in 0..grid.len() {
            let v = a.values[i];
            let tol = 1e-8 * (1.0 + v.abs() + shift.abs());
            prop_assert!((b.values[i] - v).abs() < tol);
            prop_assert!((c.values[i] - scale * scale * v).abs() < 1e-10 * (1.0 + (scale * scale * v).abs()));
        }
    }

    #[test]
    fn estimate_is_a_weighted_sum_of_squares(ys in vec(-3.0f64..3.0, 50..150), p in 0usize..=3, h in 0.2f64..0.5) {
        let s = Sample::equispaced(ys).unwrap();
        let seq = standard_sequence(SequenceKind::Gsjs);
        let cfg = SmootherConfig::new(h).with_degree(p);
        let grid = [0.0, 0.3, 0.77, 1.0];
        let est = estimate_variance(&s, &seq, &cfg, &grid).unwrap();
        let plan = VariancePlan::new(s.xs(), &seq, &cfg, &grid).unwrap();
        let z = pseudoresiduals(&s, &seq).unwrap().squares();
        for (v, w) in est.values.iter().zip(plan.weights()) {
            let inner = w.dot(&z);
            prop_assert!((v - inner).abs() <= 1e-10 * v.abs().max(1e-6));
        }
    }

    #[test]
    fn zero_first_moment_sequences_annihilate_lines(a in -5.0f64..5.0, b in -5.0f64..5.0, n in 5usize..60) {
        let ys: Vec<f64> = (0..n).map(|i| a + b * i as f64).collect();
        let s = Sample::equispaced(ys).unwrap();
        let pr = pseudoresiduals(&s, &standard_sequence(SequenceKind::Gsjs)).unwrap();
        prop_assert!(pr.values.iter().all(|v| v.abs() < 1e-10 * (1.0 + b.abs() * n as f64)));
    }
}
