//! Monte Carlo laboratory: data generation from `y_i = g(x_i) + √V(x_i) ε_i`,
//! risk measurement and the rate, normality, mean-effect and bias/variance
//! experiments.
//!
//! Replications run in parallel, each on its own random stream derived
//! from the master seed, and are reduced in replication order. Reports are
//! therefore identical for any thread count.

use thiserror::Error;

use crate::bandwidth::BandwidthError;
use crate::diffseq::DiffSeqError;
use crate::estimator::EstimatorError;
use crate::smoother::SmootherError;

mod bias_variance;
mod estimators;
mod mean_effect;
mod normality;
mod rates;
mod risk;
pub mod rng;
mod scenario;

pub use bias_variance::{bias_variance_experiment, BiasVarianceExperiment, BiasVarianceReport, BiasVarianceRow};
pub use estimators::{BandwidthRule, EstimatorSpec, SequenceChoice, OPTIMAL_TOLERANCE};
pub use mean_effect::{
    mean_effect_experiment, mean_effect_experiment_with, paired_comparison, MeanEffectConfig, MeanEffectReport,
    PairedComparison,
};
pub use normality::{normality_experiment, NormalityDiagnostics, NormalityReport, MIN_NORMALITY_REPLICATIONS};
pub use rates::{ols_slope, rate_experiment, RateExperiment, RatePoint, RateReport, SlopeFit};
pub use risk::{
    global_risk, pointwise_risk, risk_report, PointRisk, RiskEstimate, RiskGrid, RiskOptions, RiskReport,
};
pub use scenario::{generate_sample, strict_floor, Design, ErrorLaw, FunctionSpec, HoelderClassSpec, Scenario};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("bad scenario: {0}")]
    BadScenario(String),
    #[error("bad experiment configuration: {0}")]
    BadConfig(String),
    #[error("replication failed: {0}")]
    Replication(String),
    #[error("every replication failed ({failures} failures)")]
    AllReplicationsFailed { failures: usize },
    #[error("{failures} of {replications} replications failed at n = {n}")]
    TooManyFailures {
        n: usize,
        failures: usize,
        replications: usize,
    },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    DiffSeq(#[from] DiffSeqError),
    #[error(transparent)]
    Bandwidth(#[from] BandwidthError),
}

impl From<SmootherError> for SimError {
    fn from(e: SmootherError) -> Self {
        SimError::Estimator(e.into())
    }
}
