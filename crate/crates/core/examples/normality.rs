//! Sampling distribution of V̂(0.5) under an undersmoothed bandwidth, compared
//! with the standard normal.

use diffvar::simlab::{normality_experiment, BandwidthRule, ErrorLaw, EstimatorSpec, Scenario, SequenceChoice};
use diffvar::smoother::Kernel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = EstimatorSpec::Local {
        sequence: SequenceChoice::Optimal { order: 2 },
        kernel: Kernel::Uniform,
        degree: 1,
        bandwidth: BandwidthRule::Power { scale: 4.4, exponent: 0.3 },
        expand_to_minimum: false,
    };
    for law in [ErrorLaw::Gaussian, ErrorLaw::ScaledUniform, ErrorLaw::StudentT { df: 9.0 }] {
        let s = Scenario::smooth_default(2000).with_error_law(law);
        let r = normality_experiment(&s, &spec, 0.5, 1000, 5)?;
        println!(
            "{law:?}: mean {:.4} (V = {:.4})  skew {:+.3}  excess kurtosis {:+.3}  KS {:.4}",
            r.mean, r.true_value, r.skewness, r.excess_kurtosis, r.ks_distance
        );
    }
    Ok(())
}
