//! Optimal difference sequences for orders 1 to 6 next to the classical ones.

use diffvar::diffseq::{min_constant, optimal_sequence, standard_sequence, variance_factor, SequenceKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>2}  {:>8}  {:>8}  coefficients", "r", "C", "C_min");
    for r in 1..=6 {
        let seq = optimal_sequence(r, 1e-9)?;
        let coeffs: Vec<String> = seq.coeffs().iter().map(|d| format!("{d:+.5}")).collect();
        println!(
            "{r:>2}  {:>8.5}  {:>8.5}  [{}]",
            variance_factor(&seq),
            min_constant(r as i64)?,
            coeffs.join(", ")
        );
    }

    // the Rice and Gasser–Sroka–Jennen-Steinmetz sequences pay more
    for kind in [SequenceKind::FirstDifference, SequenceKind::Gsjs] {
        let seq = standard_sequence(kind);
        println!("{kind:?}: C = {:.5} vs minimum {:.5}", variance_factor(&seq), min_constant(seq.order() as i64)?);
    }
    Ok(())
}
