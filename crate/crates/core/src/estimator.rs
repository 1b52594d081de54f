//! Pseudoresiduals, the kernel variance-function estimator and the classical
//! scalar difference-based estimators.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffseq::{standard_sequence, DifferenceSequence, SequenceKind};
use crate::smoother::{self, EffectiveWeights, SmootherConfig, SmootherError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("xs and ys differ in length ({xs} vs {ys})")]
    LengthMismatch { xs: usize, ys: usize },
    #[error("design points must be strictly increasing (violated at index {0})")]
    NotIncreasing(usize),
    #[error("design point {value} at index {index} is outside (0, 1)")]
    OutOfRange { index: usize, value: f64 },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Smoother(#[from] SmootherError),
}

/// Fixed-design observations `(x_i, y_i)` with `0 < x_1 < … < x_n < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSample")]
pub struct Sample {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSample {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl TryFrom<RawSample> for Sample {
    type Error = EstimatorError;

    fn try_from(r: RawSample) -> Result<Self, Self::Error> {
        Sample::new(r.xs, r.ys)
    }
}

impl Sample {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, EstimatorError> {
        if xs.len() != ys.len() {
            return Err(EstimatorError::LengthMismatch {
                xs: xs.len(),
                ys: ys.len(),
            });
        }
        if xs.len() < 2 {
            return Err(EstimatorError::TooFewObservations {
                needed: 2,
                got: xs.len(),
            });
        }
        check_design(&xs)?;
        if let Some(i) = ys.iter().position(|y| !y.is_finite()) {
            return Err(EstimatorError::NonFinite(i));
        }
        Ok(Self { xs, ys })
    }

    /// Sample on the equispaced design `x_i = i/(n+1)`.
    pub fn equispaced(ys: Vec<f64>) -> Result<Self, EstimatorError> {
        let n = ys.len();
        Self::new(equispaced_design(n), ys)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    /// Largest spacing including the implicit endpoints `x_0 = 0` and
    /// `x_{n+1} = 1`.
    pub fn max_gap(&self) -> f64 {
        max_gap(&self.xs)
    }
}

/// `x_i = i/(n+1)`, `i = 1..n`.
pub fn equispaced_design(n: usize) -> Vec<f64> {
    let d = (n + 1) as f64;
    (1..=n).map(|i| i as f64 / d).collect()
}

pub(crate) fn max_gap(xs: &[f64]) -> f64 {
    let mut prev = 0.0;
    let mut gap = 0.0_f64;
    for &x in xs.iter().chain(std::iter::once(&1.0)) {
        gap = gap.max(x - prev);
        prev = x;
    }
    gap
}

pub(crate) fn check_design(xs: &[f64]) -> Result<(), EstimatorError> {
    for (i, &x) in xs.iter().enumerate() {
        if !x.is_finite() {
            return Err(EstimatorError::NonFinite(i));
        }
        if !(x > 0.0 && x < 1.0) {
            return Err(EstimatorError::OutOfRange { index: i, value: x });
        }
        if i > 0 && x <= xs[i - 1] {
            return Err(EstimatorError::NotIncreasing(i));
        }
    }
    Ok(())
}

/// Order-`r` pseudoresiduals.
///
/// `values[k] = Σ_j d_j y_{k+j}` (0-based) is attached to the design point
/// `center_xs[k] = x_{k + ⌊r/2⌋}`; with 1-based indexing this is
/// `Δ_i = Σ_j d_j y_{j+i−⌊r/2⌋}` for `i = ⌊r/2⌋+1, …, n+⌊r/2⌋−r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoresidualSeries {
    pub order: usize,
    /// 1-based index of the first pseudoresidual, `⌊r/2⌋ + 1`.
    pub first_index: usize,
    pub values: Vec<f64>,
    pub center_xs: Vec<f64>,
}

impl PseudoresidualSeries {
    pub fn squares(&self) -> Vec<f64> {
        self.values.iter().map(|v| v * v).collect()
    }
}

fn require(n: usize, needed: usize) -> Result<(), EstimatorError> {
    if n < needed {
        Err(EstimatorError::TooFewObservations { needed, got: n })
    } else {
        Ok(())
    }
}

/// `Δ_k = Σ_j d_j y_{k+j}` for `k = 0..n−r` into `out`.
pub(crate) fn contrasts_into(ys: &[f64], seq: &DifferenceSequence, out: &mut Vec<f64>) {
    let r = seq.order();
    out.clear();
    out.extend(ys.windows(r + 1).map(|w| seq.apply(w)));
}

pub fn pseudoresiduals(
    sample: &Sample,
    seq: &DifferenceSequence,
) -> Result<PseudoresidualSeries, EstimatorError> {
    let r = seq.order();
    let n = sample.len();
    require(n, r + 1)?;
    let mut values = Vec::with_capacity(n - r);
    contrasts_into(sample.ys(), seq, &mut values);
    let off = r / 2;
    let center_xs = sample.xs()[off..off + (n - r)].to_vec();
    Ok(PseudoresidualSeries {
        order: r,
        first_index: off + 1,
        values,
        center_xs,
    })
}

/// Where a fitted curve came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sequence: DifferenceSequence,
    pub config: SmootherConfig,
    /// Grid points where the bandwidth was expanded, with the bandwidth used.
    #[serde(default)]
    pub expansions: Vec<(f64, f64)>,
    /// Number of grid points with a negative estimate before any clipping.
    #[serde(default)]
    pub negative_count: usize,
    #[serde(default)]
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl VarianceEstimate {
    /// Replaces negative values by zero and marks the provenance. Local
    /// polynomial fits are not sign-constrained, so this is opt-in.
    pub fn clip_at_zero(mut self) -> Self {
        for v in &mut self.values {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        self.provenance.clipped = true;
        self
    }

    pub fn has_negative_values(&self) -> bool {
        self.provenance.negative_count > 0
    }
}

/// Local polynomial regression of squared pseudoresiduals on their design
/// points, evaluated at each grid point.
pub fn estimate_variance(
    sample: &Sample,
    seq: &DifferenceSequence,
    config: &SmootherConfig,
    grid: &[f64],
) -> Result<VarianceEstimate, EstimatorError> {
    let pr = pseudoresiduals(sample, seq)?;
    let z = pr.squares();
    let fits = smoother::fit_on_grid(&pr.center_xs, &z, config, grid)?;
    let values: Vec<f64> = fits.iter().map(|f| f.value()).collect();
    let expansions = fits
        .iter()
        .filter(|f| f.expanded)
        .map(|f| (f.weights.eval_point, f.bandwidth))
        .collect();
    Ok(VarianceEstimate {
        grid: grid.to_vec(),
        provenance: Provenance {
            sequence: seq.clone(),
            config: *config,
            expansions,
            negative_count: values.iter().filter(|v| **v < 0.0).count(),
            clipped: false,
        },
        values,
    })
}

/// Precomputed linear form of [`estimate_variance`] for a fixed design.
///
/// The effective weights depend only on the design, the sequence order and
/// the smoother, so repeated estimation on new responses reduces to inner
/// products with the squared pseudoresiduals.
#[derive(Debug, Clone)]
pub struct VariancePlan {
    design: Vec<f64>,
    sequence: DifferenceSequence,
    config: SmootherConfig,
    grid: Vec<f64>,
    weights: Vec<EffectiveWeights>,
    bandwidths: Vec<f64>,
}

impl VariancePlan {
    pub fn new(
        design: &[f64],
        seq: &DifferenceSequence,
        config: &SmootherConfig,
        grid: &[f64],
    ) -> Result<Self, EstimatorError> {
        let r = seq.order();
        require(design.len(), r + 1)?;
        check_design(design)?;
        let off = r / 2;
        let centers = &design[off..off + design.len() - r];
        let pairs = smoother::weights_on_grid(centers, config, grid)?;
        let (weights, bandwidths) = pairs.into_iter().unzip();
        Ok(Self {
            design: design.to_vec(),
            sequence: seq.clone(),
            config: *config,
            grid: grid.to_vec(),
            weights,
            bandwidths,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn weights(&self) -> &[EffectiveWeights] {
        &self.weights
    }

    pub fn sequence(&self) -> &DifferenceSequence {
        &self.sequence
    }

    pub fn config(&self) -> &SmootherConfig {
        &self.config
    }

    /// Applies the plan to responses on the plan's design, writing one value
    /// per grid point. `scratch` is reused for the squared pseudoresiduals.
    pub fn apply_into(&self, ys: &[f64], scratch: &mut Vec<f64>, out: &mut Vec<f64>) {
        assert_eq!(ys.len(), self.design.len(), "responses do not match the plan design");
        contrasts_into(ys, &self.sequence, scratch);
        for v in scratch.iter_mut() {
            *v *= *v;
        }
        out.clear();
        out.extend(self.weights.iter().map(|w| w.dot(scratch)));
    }

    pub fn apply(&self, sample: &Sample) -> Result<VarianceEstimate, EstimatorError> {
        if sample.xs() != self.design.as_slice() {
            return Err(EstimatorError::LengthMismatch {
                xs: self.design.len(),
                ys: sample.len(),
            });
        }
        let mut scratch = Vec::new();
        let mut values = Vec::new();
        self.apply_into(sample.ys(), &mut scratch, &mut values);
        let expansions = self
            .grid
            .iter()
            .zip(&self.bandwidths)
            .filter(|(_, h)| **h != self.config.bandwidth)
            .map(|(g, h)| (*g, *h))
            .collect();
        Ok(VarianceEstimate {
            grid: self.grid.clone(),
            provenance: Provenance {
                sequence: self.sequence.clone(),
                config: self.config,
                expansions,
                negative_count: values.iter().filter(|v| **v < 0.0).count(),
                clipped: false,
            },
            values,
        })
    }
}

/// `1/(2(n−1)) Σ (y_{i+1} − y_i)²`.
pub fn rice_estimate(sample: &Sample) -> Result<f64, EstimatorError> {
    let ys = sample.ys();
    require(ys.len(), 2)?;
    let s: f64 = ys.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok(s / (2.0 * (ys.len() - 1) as f64))
}

/// `2/(3(n−2)) Σ (½y_i − y_{i+1} + ½y_{i+2})²`.
pub fn gsjs_estimate(sample: &Sample) -> Result<f64, EstimatorError> {
    let ys = sample.ys();
    require(ys.len(), 3)?;
    let s: f64 = ys
        .windows(3)
        .map(|w| (0.5 * w[0] - w[1] + 0.5 * w[2]).powi(2))
        .sum();
    Ok(2.0 * s / (3.0 * (ys.len() - 2) as f64))
}

/// `(n−r)⁻¹ Σ_i (Σ_j d_j y_{j+i})²`.
pub fn hkt_estimate(sample: &Sample, seq: &DifferenceSequence) -> Result<f64, EstimatorError> {
    let ys = sample.ys();
    let r = seq.order();
    require(ys.len(), r + 1)?;
    let s: f64 = ys.windows(r + 1).map(|w| seq.apply(w).powi(2)).sum();
    Ok(s / (ys.len() - r) as f64)
}

/// Convenience for the normalized three-point sequence.
pub fn gsjs_sequence() -> DifferenceSequence {
    standard_sequence(SequenceKind::Gsjs)
}
