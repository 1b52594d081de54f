use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::estimators::EstimatorSpec;
use super::risk::{mean_var, replicate};
use super::scenario::Scenario;
use super::SimError;

pub const MIN_NORMALITY_REPLICATIONS: usize = 500;

/// Shape statistics of a set of draws after self-studentization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityDiagnostics {
    pub mean: f64,
    pub std_dev: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// `sup |F_R − Φ|` of the standardized draws.
    pub ks_distance: f64,
}

impl NormalityDiagnostics {
    /// Diagnostics and the standardized draws `(v − mean)/sd`, with `sd`
    /// the `R − 1` sample standard deviation.
    pub fn from_draws(draws: &[f64]) -> Result<(Self, Vec<f64>), SimError> {
        if draws.len() < 3 {
            return Err(SimError::BadConfig("need at least 3 draws".into()));
        }
        let (mean, var) = mean_var(draws);
        let std_dev = var.sqrt();
        if !(std_dev > 0.0) {
            return Err(SimError::BadConfig("draws have zero spread".into()));
        }
        let z: Vec<f64> = draws.iter().map(|v| (v - mean) / std_dev).collect();
        let r = z.len() as f64;
        let m2 = z.iter().map(|v| v * v).sum::<f64>() / r;
        let m3 = z.iter().map(|v| v.powi(3)).sum::<f64>() / r;
        let m4 = z.iter().map(|v| v.powi(4)).sum::<f64>() / r;
        let diag = Self {
            mean,
            std_dev,
            skewness: m3 / m2.powf(1.5),
            excess_kurtosis: m4 / (m2 * m2) - 3.0,
            ks_distance: ks_distance(&z),
        };
        Ok((diag, z))
    }
}

/// Kolmogorov distance between the empirical distribution of `z` and the
/// standard normal.
pub fn ks_distance(z: &[f64]) -> f64 {
    let phi = Normal::standard();
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    let r = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = phi.cdf(v);
            (f - i as f64 / r).max((i + 1) as f64 / r - f)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub scenario_id: String,
    pub n: usize,
    pub x0: f64,
    pub estimator: EstimatorSpec,
    pub replications: usize,
    pub seed: u64,
    pub failures: usize,
    pub bandwidth: Option<f64>,
    pub true_value: f64,
    pub draws: Vec<f64>,
    pub standardized: Vec<f64>,
    pub mean: f64,
    pub std_dev: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub ks_distance: f64,
}

/// Replication draws of `V̂(x₀)`, self-studentized across replications.
///
/// Use an undersmoothing bandwidth (for example `c · n^{−0.3}` when
/// `γ = 2`) so the bias is small next to the stochastic term.
pub fn normality_experiment(
    scenario: &Scenario,
    spec: &EstimatorSpec,
    x0: f64,
    replications: usize,
    seed: u64,
) -> Result<NormalityReport, SimError> {
    if replications < MIN_NORMALITY_REPLICATIONS {
        return Err(SimError::BadConfig(format!(
            "normality needs at least {MIN_NORMALITY_REPLICATIONS} replications, got {replications}"
        )));
    }
    if !(0.0..=1.0).contains(&x0) {
        return Err(SimError::BadConfig(format!("x0 = {x0} is outside [0, 1]")));
    }
    let outcomes = replicate(scenario, spec, &[x0], replications, seed)?;
    let mut draws = Vec::with_capacity(replications);
    let mut failures = 0;
    for o in outcomes {
        match o {
            Ok(rep) => draws.push(rep.values[0]),
            Err(_) => failures += 1,
        }
    }
    let (diag, standardized) = NormalityDiagnostics::from_draws(&draws)?;
    Ok(NormalityReport {
        scenario_id: scenario.id.clone(),
        n: scenario.n,
        x0,
        estimator: spec.clone(),
        replications,
        seed,
        failures,
        bandwidth: spec.smoother_config(scenario.n)?.map(|c| c.bandwidth),
        true_value: scenario.variance_at(x0),
        draws,
        standardized,
        mean: diag.mean,
        std_dev: diag.std_dev,
        skewness: diag.skewness,
        excess_kurtosis: diag.excess_kurtosis,
        ks_distance: diag.ks_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::ContinuousCDF;

    #[test]
    fn exact_normal_quantiles_pass_the_self_test() {
        let phi = Normal::standard();
        let r = 1000;
        let q: Vec<f64> = (0..r).map(|i| phi.inverse_cdf((i as f64 + 0.5) / r as f64)).collect();
        let (d, z) = NormalityDiagnostics::from_draws(&q).unwrap();
        assert!(d.ks_distance < 0.01, "{}", d.ks_distance);
        assert!(d.skewness.abs() < 1e-10);
        assert!(d.excess_kurtosis.abs() < 0.1);
        let (m, v) = mean_var(&z);
        assert!(m.abs() < 1e-12);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ks_of_a_point_mass() {
        // all mass at 0: distance is 1/2
        assert!((ks_distance(&[0.0; 10]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn skewed_draws_are_detected() {
        let draws: Vec<f64> = (1..=600).map(|i| ((i as f64) / 601.0).powi(4)).collect();
        let (d, _) = NormalityDiagnostics::from_draws(&draws).unwrap();
        assert!(d.skewness > 0.5);
        assert!(d.ks_distance > 0.05);
    }

    #[test]
    fn needs_enough_replications() {
        let s = Scenario::smooth_default(100);
        let spec = EstimatorSpec::Rice;
        assert!(matches!(
            normality_experiment(&s, &spec, 0.5, 100, 1),
            Err(SimError::BadConfig(_))
        ));
    }
}
