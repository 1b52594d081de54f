//! Squared bias and variance of V̂(x0) across bandwidths, Monte Carlo next to
//! the exact values.

use diffvar::simlab::{bias_variance_experiment, BiasVarianceExperiment, Scenario, SequenceChoice};
use diffvar::smoother::Kernel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bandwidths: Vec<f64> = (0..6).map(|i| 0.03 * 10f64.powf(i as f64 / 6.0)).collect();
    let exp = BiasVarianceExperiment {
        scenario: Scenario::smooth_default(4096),
        sequence: SequenceChoice::default(),
        kernel: Kernel::Epanechnikov,
        degree: 1,
        bandwidths,
        x0: 0.75,
        replications: 50_000,
        seed: 2,
    };
    let rep = bias_variance_experiment(&exp)?;
    println!("{:>7}  {:>10}  {:>10}  {:>10}  {:>10}", "h", "bias^2", "exact", "variance", "exact");
    for r in &rep.rows {
        println!(
            "{:>7.4}  {:>10.3e}  {:>10.3e}  {:>10.3e}  {:>10.3e}",
            r.h,
            r.squared_bias,
            r.exact_bias.powi(2),
            r.variance,
            r.exact_variance
        );
    }
    if let (Some(b), Some(v)) = (&rep.bias_slope, &rep.variance_slope) {
        println!("log-log slopes: bias^2 {:.2}, variance {:.2}", b.slope, v.slope);
    }
    Ok(())
}
