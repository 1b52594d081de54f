use serde::{Deserialize, Serialize};

use super::estimators::{BandwidthRule, EstimatorSpec, SequenceChoice};
use super::risk::{loss_table, mean_var, RiskEstimate, RiskGrid};
use super::scenario::{FunctionSpec, HoelderClassSpec, Scenario};
use super::SimError;

/// Global risks of one estimator under two scenarios sharing a design,
/// driven by the same noise (common random numbers).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub n: usize,
    pub risk_a: RiskEstimate,
    pub risk_b: RiskEstimate,
    /// `risk_a / risk_b`
    pub ratio: f64,
    /// Delta-method standard error over paired replications.
    pub ratio_std_error: f64,
}

pub fn paired_comparison(
    a: &Scenario,
    b: &Scenario,
    spec: &EstimatorSpec,
    grid: &RiskGrid,
    replications: usize,
    seed: u64,
) -> Result<PairedComparison, SimError> {
    if a.n != b.n || a.design != b.design || a.error_law != b.error_law {
        return Err(SimError::BadConfig("paired scenarios must share n, design and error law".into()));
    }
    let ta = loss_table(a, spec, grid, &[], replications, seed)?;
    let tb = loss_table(b, spec, grid, &[], replications, seed)?;
    let (la, lb): (Vec<f64>, Vec<f64>) = ta
        .global
        .iter()
        .zip(&tb.global)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .unzip();
    let failures = replications - la.len();
    let risk_a = RiskEstimate::from_losses(&la, failures)?;
    let risk_b = RiskEstimate::from_losses(&lb, failures)?;
    let ratio = risk_a.risk / risk_b.risk;
    let diff: Vec<f64> = la.iter().zip(&lb).map(|(x, y)| x - ratio * y).collect();
    let (_, var) = mean_var(&diff);
    Ok(PairedComparison {
        n: a.n,
        risk_a,
        risk_b,
        ratio,
        ratio_std_error: (var / la.len() as f64).sqrt() / risk_b.risk,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanEffectConfig {
    pub gamma: f64,
    pub beta: f64,
    pub ns: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    /// Variance scenario; its mean is replaced by the two compared means.
    pub base: Scenario,
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub grid: RiskGrid,
}

impl MeanEffectConfig {
    /// Smooth default variance, gsjs pseudoresiduals, degree `⌊γ⌋ + 1` and
    /// the rate-optimal bandwidth with unit scale.
    pub fn new(gamma: f64, beta: f64, ns: Vec<usize>, replications: usize, seed: u64) -> Self {
        Self {
            gamma,
            beta,
            ns,
            replications,
            seed,
            base: Scenario::smooth_default(2),
            estimator: EstimatorSpec::local(
                SequenceChoice::default(),
                gamma.floor() as usize + 1,
                BandwidthRule::Rate { gamma, scale: 1.0 },
            ),
            grid: RiskGrid::default(),
        }
    }

    /// `(γ/(4γ+2), γ/(2γ+2))`
    pub fn regime(&self) -> (f64, f64) {
        let g = self.gamma;
        (g / (4.0 * g + 2.0), g / (2.0 * g + 2.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanEffectReport {
    pub gamma: f64,
    pub beta: f64,
    pub regime: (f64, f64),
    pub estimator: EstimatorSpec,
    pub replications: usize,
    pub seed: u64,
    /// `a` is the rough mean `|x − ½|^β`, `b` is `g ≡ 0`.
    pub rows: Vec<PairedComparison>,
    /// Ratios never rise by more than two combined standard errors.
    pub non_increasing: bool,
}

pub fn mean_effect_experiment(
    gamma: f64,
    beta: f64,
    ns: &[usize],
    replications: usize,
    seed: u64,
) -> Result<MeanEffectReport, SimError> {
    mean_effect_experiment_with(&MeanEffectConfig::new(gamma, beta, ns.to_vec(), replications, seed))
}

pub fn mean_effect_experiment_with(cfg: &MeanEffectConfig) -> Result<MeanEffectReport, SimError> {
    let (lo, hi) = cfg.regime();
    if !(cfg.beta > lo && cfg.beta < hi) {
        return Err(SimError::BadConfig(format!(
            "beta = {} must lie strictly inside ({lo}, {hi})",
            cfg.beta
        )));
    }
    if cfg.ns.is_empty() {
        return Err(SimError::BadConfig("no sample sizes given".into()));
    }
    let rough = FunctionSpec::Cusp {
        center: 0.5,
        exponent: cfg.beta,
        scale: 1.0,
    };
    let zero = FunctionSpec::Constant { value: 0.0 };
    let mut ns = cfg.ns.clone();
    ns.sort_unstable();
    let mut rows = Vec::with_capacity(ns.len());
    for n in ns {
        let a = cfg
            .base
            .clone()
            .with_n(n)
            .with_mean(rough.clone(), HoelderClassSpec::new(cfg.beta, 1.0, 1.0))
            .with_id(format!("rough-mean-beta{}-n{n}", cfg.beta));
        let b = cfg
            .base
            .clone()
            .with_n(n)
            .with_mean(zero.clone(), HoelderClassSpec::new(cfg.gamma, 1.0, 1.0))
            .with_id(format!("zero-mean-n{n}"));
        rows.push(paired_comparison(&a, &b, &cfg.estimator, &cfg.grid, cfg.replications, cfg.seed)?);
    }
    let non_increasing = rows.windows(2).all(|w| {
        let tol = 2.0 * (w[0].ratio_std_error.powi(2) + w[1].ratio_std_error.powi(2)).sqrt();
        w[1].ratio <= w[0].ratio + tol
    });
    Ok(MeanEffectReport {
        gamma: cfg.gamma,
        beta: cfg.beta,
        regime: (lo, hi),
        estimator: cfg.estimator.clone(),
        replications: cfg.replications,
        seed: cfg.seed,
        rows,
        non_increasing,
    })
}
