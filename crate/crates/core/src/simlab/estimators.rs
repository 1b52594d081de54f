use serde::{Deserialize, Serialize};

use super::scenario::{PreparedScenario, Scenario};
use super::SimError;
use crate::bandwidth::{rate_optimal_bandwidth, BandwidthGrid, CvOptions, CvPlan, MAX_BANDWIDTH};
use crate::diffseq::{optimal_sequence, standard_sequence, DifferenceSequence, SequenceKind};
use crate::estimator::{contrasts_into, gsjs_estimate, hkt_estimate, rice_estimate, Sample, VariancePlan};
use crate::smoother::{Kernel, SmootherConfig};

/// Tolerance handed to the optimal-sequence search.
pub const OPTIMAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SequenceChoice {
    Standard { name: SequenceKind },
    Optimal { order: usize },
    Explicit { coeffs: DifferenceSequence },
}

impl SequenceChoice {
    pub fn resolve(&self) -> Result<DifferenceSequence, SimError> {
        Ok(match self {
            SequenceChoice::Standard { name } => standard_sequence(*name),
            SequenceChoice::Optimal { order } => optimal_sequence(*order, OPTIMAL_TOLERANCE)?,
            SequenceChoice::Explicit { coeffs } => coeffs.clone(),
        })
    }
}

impl Default for SequenceChoice {
    fn default() -> Self {
        SequenceChoice::Standard {
            name: SequenceKind::Gsjs,
        }
    }
}

/// How the bandwidth is chosen for a sample of size `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BandwidthRule {
    Fixed { h: f64 },
    /// `scale · n^{−1/(2γ+1)}`
    Rate { gamma: f64, scale: f64 },
    /// `scale · n^{−exponent}`, capped at 0.5. Used for undersmoothing.
    Power { scale: f64, exponent: f64 },
    /// K-fold cross-validation over `grid` (default grid when absent).
    Cv {
        folds: usize,
        #[serde(default)]
        grid: Option<BandwidthGrid>,
    },
}

impl BandwidthRule {
    /// The deterministic bandwidth for sample size `n`; `None` for CV.
    pub fn bandwidth_for(&self, n: usize) -> Result<Option<f64>, SimError> {
        match *self {
            BandwidthRule::Fixed { h } => {
                if h > 0.0 && h.is_finite() {
                    Ok(Some(h))
                } else {
                    Err(SimError::BadConfig(format!("fixed bandwidth must be positive, got {h}")))
                }
            }
            BandwidthRule::Rate { gamma, scale } => Ok(Some(rate_optimal_bandwidth(n, gamma, scale)?)),
            BandwidthRule::Power { scale, exponent } => {
                if scale > 0.0 && exponent > 0.0 && scale.is_finite() && exponent.is_finite() {
                    Ok(Some((scale * (n as f64).powf(-exponent)).min(MAX_BANDWIDTH)))
                } else {
                    Err(SimError::BadConfig(format!(
                        "power bandwidth needs positive scale and exponent, got {scale}, {exponent}"
                    )))
                }
            }
            BandwidthRule::Cv { .. } => Ok(None),
        }
    }
}

fn default_degree() -> usize {
    1
}

/// Estimator under study in a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    /// The kernel estimator on squared pseudoresiduals.
    Local {
        #[serde(default)]
        sequence: SequenceChoice,
        #[serde(default)]
        kernel: Kernel,
        #[serde(default = "default_degree")]
        degree: usize,
        bandwidth: BandwidthRule,
        #[serde(default)]
        expand_to_minimum: bool,
    },
    Rice,
    Gsjs,
    Hkt {
        #[serde(default)]
        sequence: SequenceChoice,
    },
    /// Ignores the data and returns `V(x) + offset`. For checking the
    /// risk machinery.
    Oracle {
        #[serde(default)]
        offset: f64,
    },
}

impl EstimatorSpec {
    pub fn local(sequence: SequenceChoice, degree: usize, bandwidth: BandwidthRule) -> Self {
        EstimatorSpec::Local {
            sequence,
            kernel: Kernel::Epanechnikov,
            degree,
            bandwidth,
            expand_to_minimum: false,
        }
    }

    /// Smoother configuration for a sample of size `n`, when the bandwidth
    /// does not depend on the data.
    pub fn smoother_config(&self, n: usize) -> Result<Option<SmootherConfig>, SimError> {
        let EstimatorSpec::Local {
            kernel,
            degree,
            bandwidth,
            expand_to_minimum,
            ..
        } = self
        else {
            return Ok(None);
        };
        Ok(bandwidth.bandwidth_for(n)?.map(|h| {
            SmootherConfig::new(h)
                .with_kernel(*kernel)
                .with_degree(*degree)
                .with_expansion(*expand_to_minimum)
        }))
    }
}

/// Design-dependent precomputation for one estimator on one scenario.
pub(crate) enum Prepared {
    Plan(VariancePlan),
    Cv {
        seq: DifferenceSequence,
        cv: CvPlan,
        candidates: Vec<f64>,
        plans: Vec<Option<VariancePlan>>,
    },
    Scalar {
        spec: EstimatorSpec,
        seq: DifferenceSequence,
        xs: Vec<f64>,
        points: usize,
    },
    Oracle(Vec<f64>),
}

/// Reusable per-thread buffers.
#[derive(Default)]
pub(crate) struct Workspace {
    pub ys: Vec<f64>,
    pub z: Vec<f64>,
    pub out: Vec<f64>,
}

impl Prepared {
    pub fn new(
        spec: &EstimatorSpec,
        scenario: &Scenario,
        prepared: &PreparedScenario,
        points: &[f64],
        cv_seed: u64,
    ) -> Result<Self, SimError> {
        let xs = &prepared.xs;
        match spec {
            EstimatorSpec::Local {
                sequence,
                kernel,
                degree,
                bandwidth,
                expand_to_minimum,
            } => {
                let seq = sequence.resolve()?;
                let base = SmootherConfig::new(MAX_BANDWIDTH)
                    .with_kernel(*kernel)
                    .with_degree(*degree)
                    .with_expansion(*expand_to_minimum);
                match bandwidth {
                    BandwidthRule::Cv { folds, grid } => {
                        let r = seq.order();
                        if xs.len() < r + 2 {
                            return Err(SimError::BadConfig("sample too small for cross-validation".into()));
                        }
                        let off = r / 2;
                        let centers = &xs[off..off + xs.len() - r];
                        let grid = match grid {
                            Some(g) => g.clone(),
                            None => BandwidthGrid::default_for(xs)?,
                        };
                        let cv = CvPlan::new(centers, r, &base, &grid, *folds, cv_seed, CvOptions::default())?;
                        let candidates = grid.candidates().to_vec();
                        let plans = candidates
                            .iter()
                            .map(|&h| VariancePlan::new(xs, &seq, &base.with_bandwidth(h), points).ok())
                            .collect();
                        Ok(Prepared::Cv {
                            seq,
                            cv,
                            candidates,
                            plans,
                        })
                    }
                    rule => {
                        let h = rule.bandwidth_for(xs.len())?.expect("deterministic rule");
                        Ok(Prepared::Plan(VariancePlan::new(xs, &seq, &base.with_bandwidth(h), points)?))
                    }
                }
            }
            EstimatorSpec::Rice | EstimatorSpec::Gsjs => Ok(Prepared::Scalar {
                spec: spec.clone(),
                seq: standard_sequence(SequenceKind::FirstDifference),
                xs: xs.clone(),
                points: points.len(),
            }),
            EstimatorSpec::Hkt { sequence } => Ok(Prepared::Scalar {
                spec: spec.clone(),
                seq: sequence.resolve()?,
                xs: xs.clone(),
                points: points.len(),
            }),
            EstimatorSpec::Oracle { offset } => Ok(Prepared::Oracle(
                points.iter().map(|&x| scenario.variance_at(x) + offset).collect(),
            )),
        }
    }

    /// Estimates at the prepared points from `ws.ys`, leaving them in
    /// `ws.out`. Returns the bandwidth used by local estimators.
    pub fn run(&self, ws: &mut Workspace) -> Result<Option<f64>, SimError> {
        match self {
            Prepared::Plan(plan) => {
                plan.apply_into(&ws.ys, &mut ws.z, &mut ws.out);
                Ok(Some(plan.config().bandwidth))
            }
            Prepared::Cv {
                seq,
                cv,
                candidates,
                plans,
            } => {
                contrasts_into(&ws.ys, seq, &mut ws.z);
                for v in ws.z.iter_mut() {
                    *v *= *v;
                }
                let report = cv.evaluate(&ws.z)?;
                let idx = candidates
                    .iter()
                    .position(|&h| h == report.selected)
                    .expect("selected bandwidth comes from the grid");
                let plan = plans[idx].as_ref().ok_or_else(|| {
                    SimError::Replication(format!("no final fit possible at selected h = {}", report.selected))
                })?;
                ws.out.clear();
                ws.out.extend(plan.weights().iter().map(|w| w.dot(&ws.z)));
                Ok(Some(report.selected))
            }
            Prepared::Scalar { spec, seq, xs, points } => {
                let sample = Sample::new(xs.clone(), ws.ys.clone())?;
                let v = match spec {
                    EstimatorSpec::Rice => rice_estimate(&sample)?,
                    EstimatorSpec::Gsjs => gsjs_estimate(&sample)?,
                    _ => hkt_estimate(&sample, seq)?,
                };
                ws.out.clear();
                ws.out.resize(*points, v);
                Ok(None)
            }
            Prepared::Oracle(values) => {
                ws.out.clear();
                ws.out.extend_from_slice(values);
                Ok(None)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandwidth_rules() {
        assert_eq!(BandwidthRule::Fixed { h: 0.2 }.bandwidth_for(10).unwrap(), Some(0.2));
        let h = BandwidthRule::Rate { gamma: 2.0, scale: 1.0 }
            .bandwidth_for(100_000)
            .unwrap()
            .unwrap();
        assert!((h - 0.1).abs() < 1e-12);
        let h = BandwidthRule::Power {
            scale: 1.0,
            exponent: 0.5,
        }
        .bandwidth_for(100)
        .unwrap()
        .unwrap();
        assert!((h - 0.1).abs() < 1e-15);
        assert_eq!(BandwidthRule::Cv { folds: 5, grid: None }.bandwidth_for(10).unwrap(), None);
        assert!(BandwidthRule::Fixed { h: 0.0 }.bandwidth_for(10).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let spec = EstimatorSpec::local(
            SequenceChoice::Optimal { order: 2 },
            3,
            BandwidthRule::Rate { gamma: 2.0, scale: 1.0 },
        );
        let js = serde_json::to_string(&spec).unwrap();
        assert!(js.contains("\"kind\":\"local\""));
        assert_eq!(serde_json::from_str::<EstimatorSpec>(&js).unwrap(), spec);
        let parsed: EstimatorSpec =
            serde_json::from_str(r#"{"kind":"local","bandwidth":{"kind":"fixed","h":0.1}}"#).unwrap();
        assert_eq!(
            parsed,
            EstimatorSpec::local(SequenceChoice::default(), 1, BandwidthRule::Fixed { h: 0.1 })
        );
    }
}
