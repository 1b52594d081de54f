//! Monte Carlo convergence rate of the global and pointwise risk for the
//! default smooth scenario. Pass a replication count to run longer.

use diffvar::simlab::{rate_experiment, BandwidthRule, EstimatorSpec, RateExperiment, RiskGrid, Scenario, SequenceChoice};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let replications = std::env::args().nth(1).map_or(Ok(40), |s| s.parse())?;
    let exp = RateExperiment {
        scenario: Scenario::smooth_default(512),
        ns: vec![512, 1024, 2048, 4096],
        estimator: EstimatorSpec::local(SequenceChoice::default(), 3, BandwidthRule::Rate { gamma: 2.0, scale: 1.0 }),
        gamma: 2.0,
        replications,
        seed: 1,
        grid: RiskGrid::default(),
        x0: 0.5,
    };
    let rep = rate_experiment(&exp)?;
    for row in &rep.rows {
        println!(
            "n = {:>5}  h = {:.4}  global {:.3e} ± {:.1e}  at x0 {:.3e}",
            row.n,
            row.bandwidth.unwrap_or(f64::NAN),
            row.global.risk,
            row.global.std_error,
            row.pointwise.risk
        );
    }
    println!(
        "slope {:.3} (pointwise {:.3}), theory {:.3}",
        rep.slope.unwrap_or(f64::NAN),
        rep.pointwise_slope.unwrap_or(f64::NAN),
        rep.theoretical_slope
    );
    Ok(())
}
