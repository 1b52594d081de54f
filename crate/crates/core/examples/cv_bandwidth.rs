//! Choosing the bandwidth by blocked K-fold cross-validation on squared
//! pseudoresiduals.

use diffvar::bandwidth::{cv_select, BandwidthGrid};
use diffvar::diffseq::{standard_sequence, SequenceKind};
use diffvar::simlab::{generate_sample, Scenario};
use diffvar::smoother::SmootherConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sample = generate_sample(&Scenario::smooth_default(1500), 3)?;
    let seq = standard_sequence(SequenceKind::Gsjs);
    let grid = BandwidthGrid::default_for(sample.xs())?;
    let base = SmootherConfig::new(0.1).with_degree(1);

    let report = cv_select(&sample, &seq, &base, &grid, 5, 11)?;
    for s in &report.scores {
        let mark = if s.h == report.selected { "  <-" } else { "" };
        println!("h = {:.4}  score = {:.4}{mark}", s.h, s.cv_score);
    }
    for d in &report.disqualified {
        println!("h = {:.4} dropped on fold {}: {}", d.h, d.fold, d.reason);
    }
    println!("{} folds, blocks of {} pseudoresiduals", report.folds, report.block_len);
    Ok(())
}
