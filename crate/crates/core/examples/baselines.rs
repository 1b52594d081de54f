//! Scalar estimators under homoscedastic noise. Each is a special case of the
//! general difference-based estimator.

use diffvar::diffseq::optimal_sequence;
use diffvar::estimator::{gsjs_estimate, hkt_estimate, rice_estimate};
use diffvar::simlab::{generate_sample, FunctionSpec, HoelderClassSpec, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = Scenario::homoscedastic(1000, 0.0, 0.25).with_mean(
        FunctionSpec::Sine { offset: 0.0, amplitude: 3.0, frequency: 1.0 },
        HoelderClassSpec::new(2.0, 1.0, 3.0 * 4.0 * std::f64::consts::PI.powi(2)),
    );
    let sample = generate_sample(&scenario, 8)?;
    println!("true variance 0.25");
    println!("Rice          {:.4}", rice_estimate(&sample)?);
    println!("GSJS          {:.4}", gsjs_estimate(&sample)?);
    for r in [2, 4] {
        println!("optimal r={r}   {:.4}", hkt_estimate(&sample, &optimal_sequence(r, 1e-9)?)?);
    }
    Ok(())
}
