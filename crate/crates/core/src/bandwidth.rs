//! Bandwidth choice: the rate-optimal schedule `h ∝ n^{-1/(2γ+1)}` and
//! K-fold cross-validation on squared pseudoresiduals.
//!
//! Adjacent squared pseudoresiduals are dependent up to lag `r`, so folds
//! are built from contiguous blocks of pseudoresidual indices rather than
//! by interleaving single points. Blocks are dealt to folds in a seeded
//! random order; only the `O(r)` pairs straddling a block edge couple
//! training and held-out data.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffseq::DifferenceSequence;
use crate::estimator::{max_gap, pseudoresiduals, EstimatorError, Sample};
use crate::smoother::{effective_weights, EffectiveWeights, SmootherConfig};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_GRID_SIZE: usize = 12;
pub const DEFAULT_GRID_MAX: f64 = 0.4;
pub const MAX_BANDWIDTH: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BandwidthError {
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("bandwidth grid must be non-empty, strictly increasing and inside (0, 0.5]")]
    BadGrid,
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("{blocks} blocks of pseudoresiduals cannot fill {folds} folds")]
    TooFewBlocks { blocks: usize, folds: usize },
    #[error("every bandwidth candidate failed on some fold")]
    AllCandidatesFailed { disqualified: Vec<Disqualified> },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// `scale · n^{-1/(2γ+1)}`, capped at 0.5.
pub fn rate_optimal_bandwidth(n: usize, gamma: f64, scale: f64) -> Result<f64, BandwidthError> {
    if n < 2 {
        return Err(BandwidthError::BadParameter(format!("n must be at least 2, got {n}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(BandwidthError::BadParameter(format!("gamma must be positive, got {gamma}")));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(BandwidthError::BadParameter(format!("scale must be positive, got {scale}")));
    }
    let h = scale * (n as f64).powf(-1.0 / (2.0 * gamma + 1.0));
    Ok(h.min(MAX_BANDWIDTH))
}

/// Sorted candidate bandwidths in `(0, 0.5]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BandwidthGrid {
    candidates: Vec<f64>,
}

impl BandwidthGrid {
    pub fn new(candidates: Vec<f64>) -> Result<Self, BandwidthError> {
        let ok = !candidates.is_empty()
            && candidates.iter().all(|h| *h > 0.0 && *h <= MAX_BANDWIDTH)
            && candidates.windows(2).all(|w| w[1] > w[0]);
        if ok {
            Ok(Self { candidates })
        } else {
            Err(BandwidthError::BadGrid)
        }
    }

    /// `count` geometrically spaced values from `lo` to `hi`.
    pub fn geometric(lo: f64, hi: f64, count: usize) -> Result<Self, BandwidthError> {
        if count == 0 || !(lo > 0.0 && hi >= lo) {
            return Err(BandwidthError::BadGrid);
        }
        if count == 1 {
            return Self::new(vec![lo]);
        }
        let ratio = (hi / lo).powf(1.0 / (count - 1) as f64);
        let mut c: Vec<f64> = (0..count).map(|i| lo * ratio.powi(i as i32)).collect();
        c[count - 1] = hi;
        Self::new(c)
    }

    /// Twelve geometric values from four times the largest design gap to 0.4.
    pub fn default_for(xs: &[f64]) -> Result<Self, BandwidthError> {
        Self::geometric(4.0 * max_gap(xs), DEFAULT_GRID_MAX, DEFAULT_GRID_SIZE)
    }

    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }
}

impl TryFrom<Vec<f64>> for BandwidthGrid {
    type Error = BandwidthError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<BandwidthGrid> for Vec<f64> {
    fn from(g: BandwidthGrid) -> Self {
        g.candidates
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub h: f64,
    pub cv_score: f64,
}

/// A candidate excluded because some fold could not be fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disqualified {
    pub h: f64,
    pub fold: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub scores: Vec<CvScore>,
    pub disqualified: Vec<Disqualified>,
    pub selected: f64,
    pub folds: usize,
    pub fold_assignment_seed: u64,
    pub block_len: usize,
}

/// Fold layout over `m` pseudoresidual indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldAssignment {
    pub folds: usize,
    pub block_len: usize,
    /// Fold label of each pseudoresidual.
    pub labels: Vec<usize>,
}

impl FoldAssignment {
    /// Default block length: at least `4(r+1)` and about 20 blocks per fold.
    pub fn default_block_len(m: usize, order: usize, folds: usize) -> usize {
        (4 * (order + 1)).max(m.div_ceil(20 * folds))
    }

    pub fn new(m: usize, folds: usize, block_len: usize, seed: u64) -> Result<Self, BandwidthError> {
        if folds < 2 {
            return Err(BandwidthError::TooFewFolds(folds));
        }
        if block_len == 0 {
            return Err(BandwidthError::BadParameter("block length must be positive".into()));
        }
        let blocks = m.div_ceil(block_len);
        if blocks < folds {
            return Err(BandwidthError::TooFewBlocks { blocks, folds });
        }
        let mut order: Vec<usize> = (0..blocks).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut block_fold = vec![0; blocks];
        for (pos, b) in order.into_iter().enumerate() {
            block_fold[b] = pos % folds;
        }
        let labels = (0..m).map(|i| block_fold[i / block_len]).collect();
        Ok(Self {
            folds,
            block_len,
            labels,
        })
    }
}

/// Options for [`cv_select_with`] beyond the fold count and seed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CvOptions {
    /// Overrides [`FoldAssignment::default_block_len`].
    pub block_len: Option<usize>,
}

struct FoldPlan {
    train: Vec<usize>,
    /// Held-out index and its prediction weights over `train`.
    held_out: Vec<(usize, EffectiveWeights)>,
}

enum CandidatePlan {
    Ready { h: f64, folds: Vec<FoldPlan> },
    Failed(Disqualified),
}

/// Design-only cross-validation plan; reusable across response vectors
/// observed on the same design.
pub struct CvPlan {
    assignment: FoldAssignment,
    seed: u64,
    candidates: Vec<CandidatePlan>,
}

impl CvPlan {
    /// `centers` are the pseudoresidual design points (sorted).
    pub fn new(
        centers: &[f64],
        order: usize,
        config_base: &SmootherConfig,
        grid: &BandwidthGrid,
        folds: usize,
        seed: u64,
        options: CvOptions,
    ) -> Result<Self, BandwidthError> {
        let m = centers.len();
        let block_len = options
            .block_len
            .unwrap_or_else(|| FoldAssignment::default_block_len(m, order, folds));
        let assignment = FoldAssignment::new(m, folds, block_len, seed)?;
        let candidates = grid
            .candidates()
            .par_iter()
            .map(|&h| plan_candidate(centers, &assignment, &config_base.with_bandwidth(h)))
            .collect();
        Ok(Self {
            assignment,
            seed,
            candidates,
        })
    }

    pub fn assignment(&self) -> &FoldAssignment {
        &self.assignment
    }

    /// Scores every candidate on the squared pseudoresiduals `z`.
    pub fn evaluate(&self, z: &[f64]) -> Result<CvReport, BandwidthError> {
        assert_eq!(z.len(), self.assignment.labels.len(), "response length does not match plan");
        let mut scores = Vec::new();
        let mut disqualified = Vec::new();
        let mut train_z = Vec::new();
        for c in &self.candidates {
            match c {
                CandidatePlan::Failed(d) => disqualified.push(d.clone()),
                CandidatePlan::Ready { h, folds } => {
                    let mut score = 0.0;
                    for f in folds {
                        train_z.clear();
                        train_z.extend(f.train.iter().map(|&i| z[i]));
                        for (i, w) in &f.held_out {
                            let resid = z[*i] - w.dot(&train_z);
                            score += resid * resid;
                        }
                    }
                    scores.push(CvScore { h: *h, cv_score: score });
                }
            }
        }
        let Some(selected) = select_smallest_minimizer(&scores) else {
            return Err(BandwidthError::AllCandidatesFailed { disqualified });
        };
        Ok(CvReport {
            scores,
            disqualified,
            selected,
            folds: self.assignment.folds,
            fold_assignment_seed: self.seed,
            block_len: self.assignment.block_len,
        })
    }
}

/// Argmin over finite scores; candidates are increasing in `h`, so keeping
/// the first minimum breaks ties toward the smaller bandwidth.
fn select_smallest_minimizer(scores: &[CvScore]) -> Option<f64> {
    scores
        .iter()
        .filter(|s| s.cv_score.is_finite())
        .fold(None::<CvScore>, |acc, s| match acc {
            Some(a) if a.cv_score <= s.cv_score => Some(a),
            _ => Some(*s),
        })
        .map(|s| s.h)
}

fn plan_candidate(centers: &[f64], assignment: &FoldAssignment, config: &SmootherConfig) -> CandidatePlan {
    let mut folds = Vec::with_capacity(assignment.folds);
    for k in 0..assignment.folds {
        let train: Vec<usize> = (0..centers.len()).filter(|&i| assignment.labels[i] != k).collect();
        let train_x: Vec<f64> = train.iter().map(|&i| centers[i]).collect();
        let mut held_out = Vec::new();
        for i in (0..centers.len()).filter(|&i| assignment.labels[i] == k) {
            match effective_weights(&train_x, config, centers[i]) {
                Ok((w, _)) => held_out.push((i, w)),
                Err(e) => {
                    return CandidatePlan::Failed(Disqualified {
                        h: config.bandwidth,
                        fold: k,
                        reason: e.to_string(),
                    })
                }
            }
        }
        folds.push(FoldPlan { train, held_out });
    }
    CandidatePlan::Ready {
        h: config.bandwidth,
        folds,
    }
}

/// K-fold cross-validated bandwidth for the variance estimator.
///
/// Each candidate's score is `Σ_folds Σ_{i held out} (Δ_i² − V̂_{−fold,h}(x_i))²`.
/// Candidates whose fits fail on any fold are listed as disqualified; the
/// selection is the minimizing candidate, ties going to the smaller `h`.
pub fn cv_select(
    sample: &Sample,
    seq: &DifferenceSequence,
    config_base: &SmootherConfig,
    grid: &BandwidthGrid,
    folds: usize,
    seed: u64,
) -> Result<CvReport, BandwidthError> {
    cv_select_with(sample, seq, config_base, grid, folds, seed, CvOptions::default())
}

pub fn cv_select_with(
    sample: &Sample,
    seq: &DifferenceSequence,
    config_base: &SmootherConfig,
    grid: &BandwidthGrid,
    folds: usize,
    seed: u64,
    options: CvOptions,
) -> Result<CvReport, BandwidthError> {
    let pr = pseudoresiduals(sample, seq)?;
    let plan = CvPlan::new(&pr.center_xs, seq.order(), config_base, grid, folds, seed, options)?;
    plan.evaluate(&pr.squares())
}
