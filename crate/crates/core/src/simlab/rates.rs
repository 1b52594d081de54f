use serde::{Deserialize, Serialize};

use super::estimators::{BandwidthRule, EstimatorSpec};
use super::risk::{loss_table, RiskEstimate, RiskGrid};
use super::scenario::{strict_floor, Scenario};
use super::SimError;

/// Abort when more than this share of replications fails at some `n`.
pub const ABORT_FAILURE_RATE: f64 = 0.05;
/// Leave the smallest `n` out of the slope fit above this failure share.
pub const DROP_FAILURE_RATE: f64 = 0.01;

fn default_x0() -> f64 {
    0.5
}

/// Risks of one estimator schedule over a sequence of sample sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateExperiment {
    /// Template scenario; its `n` is replaced by each entry of `ns`.
    pub scenario: Scenario,
    pub ns: Vec<usize>,
    pub estimator: EstimatorSpec,
    pub gamma: f64,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub grid: RiskGrid,
    #[serde(default = "default_x0")]
    pub x0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub std_error: Option<f64>,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub bandwidth: Option<f64>,
    pub global: RiskEstimate,
    pub pointwise: RiskEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub scenario_id: String,
    pub estimator: EstimatorSpec,
    pub gamma: f64,
    pub replications: usize,
    pub seed: u64,
    pub grid: RiskGrid,
    pub x0: f64,
    pub rows: Vec<RatePoint>,
    /// Sample sizes left out of the fits because of failures.
    pub dropped_ns: Vec<usize>,
    /// `None` when some risk is not positive, so `log risk` is undefined.
    pub slope: Option<f64>,
    pub slope_std_error: Option<f64>,
    pub slope_defined: bool,
    pub pointwise_slope: Option<f64>,
    pub pointwise_slope_std_error: Option<f64>,
    /// `−2γ/(2γ+1)`
    pub theoretical_slope: f64,
}

impl RateReport {
    pub fn ns(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.n).collect()
    }

    /// Whether global risks strictly decrease with `n`.
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].global.risk < w[0].global.risk)
    }
}

/// Ordinary least squares slope of `ys` on `xs`, with its standard error
/// when there are at least three points.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> Option<SlopeFit> {
    let k = xs.len();
    if k < 2 || ys.len() != k || xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return None;
    }
    let kf = k as f64;
    let mx = xs.iter().sum::<f64>() / kf;
    let my = ys.iter().sum::<f64>() / kf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let std_error = (k > 2).then(|| {
        let ssr: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
            .sum();
        (ssr / (kf - 2.0) / sxx).sqrt()
    });
    Some(SlopeFit {
        slope,
        std_error,
        points: k,
    })
}

fn log_log_fit(ns: &[usize], risks: &[f64]) -> Option<SlopeFit> {
    if risks.iter().any(|r| !(*r > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ly: Vec<f64> = risks.iter().map(|r| r.ln()).collect();
    ols_slope(&lx, &ly)
}

fn check(exp: &RateExperiment) -> Result<(), SimError> {
    let mut distinct = exp.ns.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 4 || distinct.len() != exp.ns.len() {
        return Err(SimError::BadConfig("need at least 4 distinct sample sizes".into()));
    }
    if !(exp.gamma > 0.0 && exp.gamma.is_finite()) {
        return Err(SimError::BadConfig(format!("gamma must be positive, got {}", exp.gamma)));
    }
    if let EstimatorSpec::Local { degree, bandwidth, .. } = &exp.estimator {
        match bandwidth {
            BandwidthRule::Rate { gamma, .. } if *gamma == exp.gamma => {}
            _ => {
                return Err(SimError::BadConfig(format!(
                    "rate experiments need the schedule h = c·n^(-1/(2γ+1)) with γ = {}",
                    exp.gamma
                )))
            }
        }
        let floor = strict_floor(exp.gamma);
        if *degree <= floor {
            return Err(SimError::BadConfig(format!(
                "degree {degree} must exceed {floor} for gamma = {}",
                exp.gamma
            )));
        }
    }
    Ok(())
}

pub fn rate_experiment(exp: &RateExperiment) -> Result<RateReport, SimError> {
    check(exp)?;
    let mut ns = exp.ns.clone();
    ns.sort_unstable();
    let mut rows = Vec::with_capacity(ns.len());
    for &n in &ns {
        let scenario = exp.scenario.clone().with_n(n);
        let table = loss_table(&scenario, &exp.estimator, &exp.grid, &[exp.x0], exp.replications, exp.seed)?;
        let failures = table.failures();
        if failures as f64 > ABORT_FAILURE_RATE * exp.replications as f64 {
            return Err(SimError::TooManyFailures {
                n,
                failures,
                replications: exp.replications,
            });
        }
        rows.push(RatePoint {
            n,
            bandwidth: exp.estimator.smoother_config(n)?.map(|c| c.bandwidth),
            global: table.global_risk()?,
            pointwise: table.point_risk(0)?,
        });
    }
    let mut dropped_ns = Vec::new();
    let mut used = &rows[..];
    if rows[0].global.failures as f64 > DROP_FAILURE_RATE * exp.replications as f64 {
        dropped_ns.push(rows[0].n);
        used = &rows[1..];
    }
    let used_ns: Vec<usize> = used.iter().map(|r| r.n).collect();
    let global: Vec<f64> = used.iter().map(|r| r.global.risk).collect();
    let point: Vec<f64> = used.iter().map(|r| r.pointwise.risk).collect();
    let g = log_log_fit(&used_ns, &global);
    let p = log_log_fit(&used_ns, &point);
    Ok(RateReport {
        scenario_id: exp.scenario.id.clone(),
        estimator: exp.estimator.clone(),
        gamma: exp.gamma,
        replications: exp.replications,
        seed: exp.seed,
        grid: exp.grid,
        x0: exp.x0,
        rows,
        dropped_ns,
        slope: g.map(|f| f.slope),
        slope_std_error: g.and_then(|f| f.std_error),
        slope_defined: g.is_some(),
        pointwise_slope: p.map(|f| f.slope),
        pointwise_slope_std_error: p.and_then(|f| f.std_error),
        theoretical_slope: -2.0 * exp.gamma / (2.0 * exp.gamma + 1.0),
    })
}
