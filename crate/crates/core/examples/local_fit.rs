//! Local polynomial smoothing on its own: a noisy sine, fitted with two kernels
//! and two degrees, plus the effective weights at the left boundary.

use diffvar::estimator::equispaced_design;
use diffvar::smoother::{effective_weights, fit_on_grid, Kernel, SmootherConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let xs = equispaced_design(200);
    // deterministic wiggle in place of noise
    let zs: Vec<f64> = xs
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * std::f64::consts::PI * x).sin() + 0.1 * ((i * 7919 % 13) as f64 / 6.0 - 1.0))
        .collect();
    let grid = [0.0, 0.25, 0.5, 0.75, 1.0];

    for (kernel, degree) in [(Kernel::Epanechnikov, 1), (Kernel::Epanechnikov, 3), (Kernel::Uniform, 0)] {
        let cfg = SmootherConfig::new(0.15).with_kernel(kernel).with_degree(degree);
        let fits = fit_on_grid(&xs, &zs, &cfg, &grid)?;
        let row: Vec<String> = fits.iter().map(|f| format!("{:+.3}", f.value())).collect();
        println!("{kernel:?} p={degree}: {}", row.join("  "));
    }

    let cfg = SmootherConfig::new(0.15).with_degree(1);
    let (w, h) = effective_weights(&xs, &cfg, 0.0)?;
    println!(
        "boundary weights at x=0: sum {:.12}, first moment {:.2e}, support {:?}, h {h}",
        w.sum(),
        w.moment(&xs, 1),
        w.indices()
    );
    Ok(())
}
