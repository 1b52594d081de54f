use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::estimators::SequenceChoice;
use super::rates::{ols_slope, SlopeFit};
use super::rng::replication_rng;
use super::scenario::Scenario;
use super::SimError;
use crate::diffseq::DifferenceSequence;
use crate::smoother::{effective_weights, EffectiveWeights, Kernel, SmootherConfig};

const CHUNK: usize = 2048;
/// Stream tag separating these draws from the risk experiments.
const TAG: u64 = 0xB1A5;

/// Monte Carlo bias and variance of `V̂_h(x₀)` over a range of bandwidths
/// at a fixed sample size, all bandwidths sharing each replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceExperiment {
    pub scenario: Scenario,
    #[serde(default)]
    pub sequence: SequenceChoice,
    #[serde(default)]
    pub kernel: Kernel,
    pub degree: usize,
    pub bandwidths: Vec<f64>,
    pub x0: f64,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceRow {
    pub h: f64,
    pub mean: f64,
    pub variance: f64,
    /// `(mean − V(x₀))² − variance/R`, unbiased for the squared bias.
    pub squared_bias: f64,
    pub squared_bias_std_error: f64,
    /// `E V̂ − V(x₀)` computed from the linear representation.
    pub exact_bias: f64,
    /// `Var V̂` computed from the linear representation.
    pub exact_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceReport {
    pub scenario_id: String,
    pub n: usize,
    pub x0: f64,
    pub degree: usize,
    pub replications: usize,
    pub seed: u64,
    pub rows: Vec<BiasVarianceRow>,
    /// Log–log slope of squared bias on `h`, over rows with positive
    /// estimated squared bias.
    pub bias_slope: Option<SlopeFit>,
    pub variance_slope: Option<SlopeFit>,
}

#[derive(Clone, Copy, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let d = x - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, o: &Moments) {
        if o.count == 0.0 {
            return;
        }
        let n = self.count + o.count;
        let d = o.mean - self.mean;
        self.mean += d * o.count / n;
        self.m2 += o.m2 + d * d * self.count * o.count / n;
        self.count = n;
    }
}

/// `E Δ_k²` and the covariances `Cov(Δ_k², Δ_l²)` for a symmetric error law.
struct ContrastMoments<'a> {
    seq: &'a DifferenceSequence,
    mean: &'a [f64],
    sd: &'a [f64],
    mu4: f64,
}

impl ContrastMoments<'_> {
    fn coeffs(&self, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.seq.coeffs().iter().enumerate().map(move |(j, d)| (k + j, d * self.sd[k + j]))
    }

    fn drift(&self, k: usize) -> f64 {
        self.seq.coeffs().iter().enumerate().map(|(j, d)| d * self.mean[k + j]).sum()
    }

    fn second_moment(&self, k: usize) -> f64 {
        self.coeffs(k).map(|(_, a)| a * a).sum::<f64>() + self.drift(k).powi(2)
    }

    fn covariance(&self, k: usize, l: usize) -> f64 {
        let r = self.seq.order();
        let (lo, hi) = if k <= l { (k, l) } else { (l, k) };
        if hi - lo > r {
            return 0.0;
        }
        let a: Vec<(usize, f64)> = self.coeffs(lo).collect();
        let b: Vec<(usize, f64)> = self.coeffs(hi).collect();
        let mut ab = 0.0;
        let mut a2b2 = 0.0;
        for &(i, ai) in &a {
            if let Some(&(_, bi)) = b.iter().find(|(j, _)| *j == i) {
                ab += ai * bi;
                a2b2 += ai * ai * bi * bi;
            }
        }
        2.0 * ab * ab + (self.mu4 - 3.0) * a2b2 + 4.0 * self.drift(lo) * self.drift(hi) * ab
    }

    fn expectation(&self, w: &EffectiveWeights) -> f64 {
        w.indices().zip(&w.weights).map(|(k, wk)| wk * self.second_moment(k)).sum()
    }

    fn variance(&self, w: &EffectiveWeights) -> f64 {
        let r = self.seq.order();
        let range = w.indices();
        let mut total = 0.0;
        for k in range.clone() {
            let wk = w.weights[k - range.start];
            let hi = (k + r + 1).min(range.end);
            for l in k..hi {
                let c = wk * w.weights[l - range.start] * self.covariance(k, l);
                total += if l == k { c } else { 2.0 * c };
            }
        }
        total
    }
}

pub fn bias_variance_experiment(exp: &BiasVarianceExperiment) -> Result<BiasVarianceReport, SimError> {
    if exp.replications < 2 {
        return Err(SimError::BadConfig("need at least 2 replications".into()));
    }
    if exp.bandwidths.is_empty() {
        return Err(SimError::BadConfig("no bandwidths given".into()));
    }
    if !(0.0..=1.0).contains(&exp.x0) {
        return Err(SimError::BadConfig(format!("x0 = {} is outside [0, 1]", exp.x0)));
    }
    let seq = exp.sequence.resolve()?;
    let r = seq.order();
    let scenario = exp.scenario.prepare()?;
    let n = scenario.xs.len();
    if n < r + 2 {
        return Err(SimError::BadConfig("sample too small for the difference sequence".into()));
    }
    let off = r / 2;
    let centers = &scenario.xs[off..off + n - r];
    let weights: Vec<EffectiveWeights> = exp
        .bandwidths
        .iter()
        .map(|&h| {
            let cfg = SmootherConfig::new(h).with_kernel(exp.kernel).with_degree(exp.degree);
            effective_weights(centers, &cfg, exp.x0).map(|(w, _)| w)
        })
        .collect::<Result<_, _>>()?;

    // only the observations feeding some window are simulated
    let k_lo = weights.iter().map(|w| w.start).min().expect("nonempty");
    let k_hi = weights.iter().map(|w| w.indices().end).max().expect("nonempty");
    let y_range = k_lo..k_hi + r;
    let truth = exp.scenario.variance_at(exp.x0);

    let chunks = exp.replications.div_ceil(CHUNK);
    let partial: Vec<Vec<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Moments::default(); weights.len()];
            let mut ys = Vec::new();
            let mut z = Vec::new();
            for rep in c * CHUNK..((c + 1) * CHUNK).min(exp.replications) {
                let mut rng = replication_rng(exp.seed, TAG, rep as u64);
                scenario.fill_range(&mut rng, y_range.clone(), &mut ys);
                z.clear();
                z.extend(ys.windows(r + 1).map(|w| seq.apply(w).powi(2)));
                for (a, w) in acc.iter_mut().zip(&weights) {
                    let s = w.start - k_lo;
                    let v: f64 = w.weights.iter().zip(&z[s..]).map(|(a, b)| a * b).sum();
                    a.push(v - truth);
                }
            }
            acc
        })
        .collect();
    let mut totals = vec![Moments::default(); weights.len()];
    for p in &partial {
        for (t, m) in totals.iter_mut().zip(p) {
            t.merge(m);
        }
    }

    let exact = ContrastMoments {
        seq: &seq,
        mean: &scenario.mean,
        sd: &scenario.sd,
        mu4: exp.scenario.error_law.fourth_moment(),
    };
    let reps = exp.replications as f64;
    let rows: Vec<BiasVarianceRow> = exp
        .bandwidths
        .iter()
        .zip(&totals)
        .zip(&weights)
        .map(|((&h, m), w)| {
            let variance = m.m2 / (reps - 1.0);
            BiasVarianceRow {
                h,
                mean: truth + m.mean,
                variance,
                squared_bias: m.mean * m.mean - variance / reps,
                squared_bias_std_error: 2.0 * m.mean.abs() * (variance / reps).sqrt(),
                exact_bias: exact.expectation(w) - truth,
                exact_variance: exact.variance(w),
            }
        })
        .collect();

    let (bh, bv): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.squared_bias > 0.0)
        .map(|r| (r.h.ln(), r.squared_bias.ln()))
        .unzip();
    let lh: Vec<f64> = rows.iter().map(|r| r.h.ln()).collect();
    let lv: Vec<f64> = rows.iter().map(|r| r.variance.ln()).collect();
    Ok(BiasVarianceReport {
        scenario_id: exp.scenario.id.clone(),
        n,
        x0: exp.x0,
        degree: exp.degree,
        replications: exp.replications,
        seed: exp.seed,
        rows,
        bias_slope: ols_slope(&bh, &bv),
        variance_slope: ols_slope(&lh, &lv),
    })
}
