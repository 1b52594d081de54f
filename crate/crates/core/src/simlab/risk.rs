use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::estimators::{EstimatorSpec, Prepared, Workspace};
use super::rng::{derive_seed, replication_rng};
use super::scenario::Scenario;
use super::SimError;

/// Evaluation grid for the integrated risk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for RiskGrid {
    /// 101 points on `[0.05, 0.95]`.
    fn default() -> Self {
        Self {
            lo: 0.05,
            hi: 0.95,
            points: 101,
        }
    }
}

impl RiskGrid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self, SimError> {
        let g = Self { lo, hi, points };
        g.validate()?;
        Ok(g)
    }

    /// The whole unit interval.
    pub fn full(points: usize) -> Self {
        Self { lo: 0.0, hi: 1.0, points }
    }

    pub fn is_full(&self) -> bool {
        self.lo == 0.0 && self.hi == 1.0
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if 0.0 <= self.lo && self.lo < self.hi && self.hi <= 1.0 && self.points >= 2 {
            Ok(())
        } else {
            Err(SimError::BadConfig(format!("invalid risk grid {self:?}")))
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        let m = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                if i + 1 == self.points {
                    self.hi
                } else {
                    self.lo + (self.hi - self.lo) * i as f64 / m
                }
            })
            .collect()
    }

    /// Trapezoidal integral of `f` sampled at [`RiskGrid::nodes`].
    pub fn trapezoid(&self, f: &[f64]) -> f64 {
        assert_eq!(f.len(), self.points);
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        let inner: f64 = f[1..f.len() - 1].iter().sum();
        step * (inner + 0.5 * (f[0] + f[f.len() - 1]))
    }
}

/// Monte Carlo mean of a loss with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub risk: f64,
    pub std_error: f64,
    /// Replications that produced an estimate.
    pub replications: usize,
    pub failures: usize,
}

impl RiskEstimate {
    pub fn from_losses(losses: &[f64], failures: usize) -> Result<Self, SimError> {
        if losses.len() < 2 {
            return Err(SimError::AllReplicationsFailed { failures });
        }
        let (mean, var) = mean_var(losses);
        Ok(Self {
            risk: mean,
            std_error: (var / losses.len() as f64).sqrt(),
            replications: losses.len(),
            failures,
        })
    }

    pub fn failure_rate(&self) -> f64 {
        self.failures as f64 / (self.replications + self.failures) as f64
    }
}

/// Sample mean and unbiased sample variance.
pub(crate) fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRisk {
    pub x0: f64,
    pub risk: RiskEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskOptions {
    pub grid: RiskGrid,
    /// Points for pointwise risk.
    pub points: Vec<f64>,
}

impl Default for RiskOptions {
    fn default() -> Self {
        Self {
            grid: RiskGrid::default(),
            points: vec![0.25, 0.5, 0.75],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub scenario_id: String,
    pub n: usize,
    pub estimator: EstimatorSpec,
    pub replications: usize,
    pub seed: u64,
    pub grid: RiskGrid,
    /// Distance of the integration range from the ends of `[0, 1]`.
    pub margin: f64,
    pub full_interval: bool,
    pub pointwise: Vec<PointRisk>,
    pub global: RiskEstimate,
    /// Average bandwidth over successful replications (local estimators).
    pub mean_bandwidth: Option<f64>,
    pub first_failure: Option<String>,
}

pub(crate) struct Replication {
    pub values: Vec<f64>,
    pub bandwidth: Option<f64>,
}

/// Runs `replications` independent draws of the estimator at `points`
/// (sorted, in `[0, 1]`). Outcomes are returned in replication order.
pub(crate) fn replicate(
    scenario: &Scenario,
    spec: &EstimatorSpec,
    points: &[f64],
    replications: usize,
    seed: u64,
) -> Result<Vec<Result<Replication, String>>, SimError> {
    if replications < 2 {
        return Err(SimError::BadConfig(format!("need at least 2 replications, got {replications}")));
    }
    let prepared = scenario.prepare()?;
    let tag = scenario.n as u64;
    let estimator = Prepared::new(spec, scenario, &prepared, points, derive_seed(seed, tag))?;
    Ok((0..replications)
        .into_par_iter()
        .map_init(Workspace::default, |ws, rep| {
            let mut rng = replication_rng(seed, tag, rep as u64);
            prepared.fill(&mut rng, &mut ws.ys);
            let bandwidth = estimator.run(ws).map_err(|e| e.to_string())?;
            Ok(Replication {
                values: ws.out.clone(),
                bandwidth,
            })
        })
        .collect())
}

/// Per-replication losses on a grid and at named points.
pub(crate) struct LossTable {
    pub global: Vec<Option<f64>>,
    pub pointwise: Vec<Vec<Option<f64>>>,
    pub bandwidths: Vec<f64>,
    pub first_failure: Option<String>,
}

impl LossTable {
    pub fn failures(&self) -> usize {
        self.global.iter().filter(|l| l.is_none()).count()
    }

    pub fn global_risk(&self) -> Result<RiskEstimate, SimError> {
        let ok: Vec<f64> = self.global.iter().flatten().copied().collect();
        RiskEstimate::from_losses(&ok, self.failures())
    }

    pub fn point_risk(&self, k: usize) -> Result<RiskEstimate, SimError> {
        let ok: Vec<f64> = self.pointwise[k].iter().flatten().copied().collect();
        RiskEstimate::from_losses(&ok, self.failures())
    }
}

fn merged_points(grid: &RiskGrid, points: &[f64]) -> Result<(Vec<f64>, Vec<usize>, Vec<usize>), SimError> {
    grid.validate()?;
    if let Some(p) = points.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(SimError::BadConfig(format!("evaluation point {p} is outside [0, 1]")));
    }
    let nodes = grid.nodes();
    let mut all: Vec<f64> = nodes.iter().chain(points).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let locate = |x: &f64| all.binary_search_by(|p| p.total_cmp(x)).expect("point present");
    let grid_idx = nodes.iter().map(locate).collect();
    let point_idx = points.iter().map(locate).collect();
    Ok((all, grid_idx, point_idx))
}

pub(crate) fn loss_table(
    scenario: &Scenario,
    spec: &EstimatorSpec,
    grid: &RiskGrid,
    points: &[f64],
    replications: usize,
    seed: u64,
) -> Result<LossTable, SimError> {
    let (all, grid_idx, point_idx) = merged_points(grid, points)?;
    let truth: Vec<f64> = all.iter().map(|&x| scenario.variance_at(x)).collect();
    let draws = replicate(scenario, spec, &all, replications, seed)?;
    let mut table = LossTable {
        global: Vec::with_capacity(replications),
        pointwise: vec![Vec::with_capacity(replications); points.len()],
        bandwidths: Vec::new(),
        first_failure: None,
    };
    let mut sq = vec![0.0; grid_idx.len()];
    for d in draws {
        match d {
            Ok(rep) => {
                for (s, &i) in sq.iter_mut().zip(&grid_idx) {
                    *s = (rep.values[i] - truth[i]).powi(2);
                }
                table.global.push(Some(grid.trapezoid(&sq)));
                for (col, &i) in table.pointwise.iter_mut().zip(&point_idx) {
                    col.push(Some((rep.values[i] - truth[i]).powi(2)));
                }
                table.bandwidths.extend(rep.bandwidth);
            }
            Err(msg) => {
                table.first_failure.get_or_insert(msg);
                table.global.push(None);
                for col in &mut table.pointwise {
                    col.push(None);
                }
            }
        }
    }
    Ok(table)
}

/// Global and pointwise risk from one set of replications.
pub fn risk_report(
    scenario: &Scenario,
    spec: &EstimatorSpec,
    options: &RiskOptions,
    replications: usize,
    seed: u64,
) -> Result<RiskReport, SimError> {
    let table = loss_table(scenario, spec, &options.grid, &options.points, replications, seed)?;
    let global = table.global_risk()?;
    let pointwise = options
        .points
        .iter()
        .enumerate()
        .map(|(k, &x0)| {
            Ok(PointRisk {
                x0,
                risk: table.point_risk(k)?,
            })
        })
        .collect::<Result<_, SimError>>()?;
    let mean_bandwidth =
        (!table.bandwidths.is_empty()).then(|| table.bandwidths.iter().sum::<f64>() / table.bandwidths.len() as f64);
    Ok(RiskReport {
        scenario_id: scenario.id.clone(),
        n: scenario.n,
        estimator: spec.clone(),
        replications,
        seed,
        grid: options.grid,
        margin: options.grid.lo.min(1.0 - options.grid.hi),
        full_interval: options.grid.is_full(),
        pointwise,
        global,
        mean_bandwidth,
        first_failure: table.first_failure,
    })
}

/// `(1/R) Σ (V̂(x₀) − V(x₀))²` with its replication standard error.
pub fn pointwise_risk(
    scenario: &Scenario,
    spec: &EstimatorSpec,
    x0: f64,
    replications: usize,
    seed: u64,
) -> Result<RiskEstimate, SimError> {
    let options = RiskOptions {
        grid: RiskGrid::default(),
        points: vec![x0],
    };
    let table = loss_table(scenario, spec, &options.grid, &options.points, replications, seed)?;
    table.point_risk(0)
}

/// Monte Carlo mean of the trapezoidal integrated squared error on `grid`.
pub fn global_risk(
    scenario: &Scenario,
    spec: &EstimatorSpec,
    grid: &RiskGrid,
    replications: usize,
    seed: u64,
) -> Result<RiskEstimate, SimError> {
    loss_table(scenario, spec, grid, &[], replications, seed)?.global_risk()
}
