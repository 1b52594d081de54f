//! Local polynomial regression.
//!
//! At an evaluation point `x` the smoother solves
//!
//! ```text
//! min_{a_0..a_p} Σ_i [z_i − a_0 − a_1 (x − x_i) − … − a_p (x − x_i)^p]² K((x − x_i)/h)
//! ```
//!
//! and reports `â_0`. The solve goes through a Householder QR of the
//! `√K`-scaled local design, with abscissae centered at `x` and scaled by
//! `h`, so conditioning does not depend on the bandwidth. Because `â_0` is
//! linear in the responses it can also be written as `Σ_i w_i z_i`; the
//! effective weights `w_i` depend only on the design and are exposed as
//! [`EffectiveWeights`]. They satisfy `Σ w_i = 1` and
//! `Σ (x − x_i)^q w_i = 0` for `q = 1..p`.

mod kernel;

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kernel::{kernel_eval, kernel_moments, Kernel, KernelMoments};

/// Fits whose reciprocal 1-norm condition estimate falls below this are
/// rejected as rank deficient.
pub const RCOND_THRESHOLD: f64 = 1e-12;

/// Relative amount by which an expanded bandwidth overshoots the
/// `(p+1)`-th nearest distinct abscissa, so that it receives positive
/// weight under kernels vanishing at `|u| = 1`.
const EXPANSION_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmootherError {
    #[error("bandwidth must be positive and finite, got {0}")]
    BadBandwidth(f64),
    #[error("abscissae and responses differ in length ({xs} vs {zs})")]
    LengthMismatch { xs: usize, zs: usize },
    #[error("abscissae must be sorted in non-decreasing order")]
    UnsortedAbscissae,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("only {found} distinct abscissae with positive weight at x = {x}, need {needed}")]
    InsufficientSupport { x: f64, found: usize, needed: usize },
    #[error("local design is numerically singular at x = {x} (rcond = {rcond:e})")]
    RankDeficient { x: f64, rcond: f64 },
    #[error("grid must be sorted and lie in [0, 1]")]
    BadGrid,
    #[error("fit failed at grid point {x}: {source}")]
    AtGridPoint {
        x: f64,
        #[source]
        source: Box<SmootherError>,
    },
}

impl SmootherError {
    /// Strips a grid-point tag, if any.
    pub fn root(&self) -> &SmootherError {
        match self {
            SmootherError::AtGridPoint { source, .. } => source.root(),
            other => other,
        }
    }
}

fn default_degree() -> usize {
    1
}

/// Kernel, local polynomial degree and bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    #[serde(default)]
    pub kernel: Kernel,
    #[serde(default = "default_degree")]
    pub degree: usize,
    pub bandwidth: f64,
    /// Grow `h` at points where fewer than `p + 1` distinct abscissae fall
    /// in the window instead of failing.
    #[serde(default)]
    pub expand_to_minimum: bool,
}

impl SmootherConfig {
    /// Epanechnikov kernel, local linear, fixed bandwidth.
    pub fn new(bandwidth: f64) -> Self {
        Self {
            kernel: Kernel::Epanechnikov,
            degree: 1,
            bandwidth,
            expand_to_minimum: false,
        }
    }

    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_degree(mut self, degree: usize) -> Self {
        self.degree = degree;
        self
    }

    pub fn with_bandwidth(mut self, bandwidth: f64) -> Self {
        self.bandwidth = bandwidth;
        self
    }

    pub fn with_expansion(mut self, expand: bool) -> Self {
        self.expand_to_minimum = expand;
        self
    }

    pub fn validate(&self) -> Result<(), SmootherError> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(SmootherError::BadBandwidth(self.bandwidth));
        }
        Ok(())
    }
}

/// Linear-representation weights of a local fit at one evaluation point.
///
/// `weights[k]` belongs to observation `start + k`; observations outside
/// that range have weight exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveWeights {
    pub eval_point: f64,
    pub start: usize,
    pub weights: Vec<f64>,
}

impl EffectiveWeights {
    pub fn indices(&self) -> Range<usize> {
        self.start..self.start + self.weights.len()
    }

    /// `Σ_i w_i z_i` over the full response vector.
    #[inline]
    pub fn dot(&self, z: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(&z[self.indices()])
            .map(|(w, z)| w * z)
            .sum()
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ_i (x − x_i)^q w_i` with `xs` the full abscissa vector.
    pub fn moment(&self, xs: &[f64], q: i32) -> f64 {
        self.weights
            .iter()
            .zip(&xs[self.indices()])
            .map(|(w, xi)| (self.eval_point - xi).powi(q) * w)
            .sum()
    }

    /// Weight of observation `i`, zero outside the stored range.
    pub fn get(&self, i: usize) -> f64 {
        if self.indices().contains(&i) {
            self.weights[i - self.start]
        } else {
            0.0
        }
    }
}

/// Result of one local polynomial fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFit {
    /// `(â_0, …, â_p)` in the `(x − x_i)^j` parameterization.
    pub coefficients: Vec<f64>,
    pub weights: EffectiveWeights,
    /// Reciprocal 1-norm condition estimate of the scaled local design.
    pub condition_estimate: f64,
    /// Bandwidth actually used; differs from the configured one only after
    /// an expansion.
    pub bandwidth: f64,
    pub expanded: bool,
}

impl LocalFit {
    pub fn value(&self) -> f64 {
        self.coefficients[0]
    }
}

fn check_inputs(xs: &[f64], zs: Option<&[f64]>, config: &SmootherConfig) -> Result<(), SmootherError> {
    config.validate()?;
    if let Some(zs) = zs {
        if zs.len() != xs.len() {
            return Err(SmootherError::LengthMismatch {
                xs: xs.len(),
                zs: zs.len(),
            });
        }
        if zs.iter().any(|z| !z.is_finite()) {
            return Err(SmootherError::NonFinite);
        }
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(SmootherError::NonFinite);
    }
    if xs.windows(2).any(|w| w[1] < w[0]) {
        return Err(SmootherError::UnsortedAbscissae);
    }
    Ok(())
}

/// Factorized local system at one point.
struct LocalSystem {
    x: f64,
    h: f64,
    expanded: bool,
    start: usize,
    sqrt_k: Vec<f64>,
    qr: nalgebra::linalg::QR<f64, nalgebra::Dyn, nalgebra::Dyn>,
    r_inv: DMatrix<f64>,
    rcond: f64,
}

fn window(xs: &[f64], x: f64, h: f64) -> Range<usize> {
    // Slightly generous bounds; exact membership is decided per point.
    let slack = 4.0 * f64::EPSILON * (x.abs() + h);
    let lo = xs.partition_point(|&xi| xi < x - h - slack);
    let hi = xs.partition_point(|&xi| xi <= x + h + slack);
    lo..hi
}

#[inline]
fn kernel_weight(kernel: Kernel, x: f64, xi: f64, h: f64) -> f64 {
    let d = x - xi;
    if d.abs() > h {
        0.0
    } else {
        kernel.eval(d / h)
    }
}

fn distinct_positive(xs: &[f64], x: f64, h: f64, kernel: Kernel, range: Range<usize>) -> usize {
    let mut count = 0;
    let mut last = f64::NAN;
    for &xi in &xs[range] {
        if kernel_weight(kernel, x, xi, h) > 0.0 && xi != last {
            count += 1;
            last = xi;
        }
    }
    count
}

/// Distance from `x` to its `k`-th nearest distinct abscissa (1-based).
fn kth_distinct_distance(xs: &[f64], x: f64, k: usize) -> Option<f64> {
    let mut d: Vec<f64> = Vec::with_capacity(xs.len());
    let mut last = f64::NAN;
    for &xi in xs {
        if xi != last {
            d.push((x - xi).abs());
            last = xi;
        }
    }
    if d.len() < k {
        return None;
    }
    d.select_nth_unstable_by(k - 1, f64::total_cmp);
    Some(d[k - 1])
}

impl LocalSystem {
    fn build(xs: &[f64], config: &SmootherConfig, x: f64) -> Result<Self, SmootherError> {
        let needed = config.degree + 1;
        let mut h = config.bandwidth;
        let mut range = window(xs, x, h);
        let mut found = distinct_positive(xs, x, h, config.kernel, range.clone());
        let mut expanded = false;
        if found < needed && config.expand_to_minimum {
            if let Some(d) = kth_distinct_distance(xs, x, needed) {
                let grown = d * (1.0 + EXPANSION_SLACK) + f64::MIN_POSITIVE;
                if grown > h {
                    h = grown;
                    expanded = true;
                    range = window(xs, x, h);
                    found = distinct_positive(xs, x, h, config.kernel, range.clone());
                }
            }
        }
        if found < needed {
            return Err(SmootherError::InsufficientSupport { x, found, needed });
        }

        let m = range.len();
        let q = needed;
        let local = &xs[range.clone()];
        let sqrt_k: Vec<f64> = local
            .iter()
            .map(|&xi| kernel_weight(config.kernel, x, xi, h).sqrt())
            .collect();
        let mut a = DMatrix::<f64>::zeros(m, q);
        for (row, (&xi, &s)) in local.iter().zip(&sqrt_k).enumerate() {
            let u = (x - xi) / h;
            let mut p = s;
            for col in 0..q {
                a[(row, col)] = p;
                p *= u;
            }
        }
        let qr = a.qr();
        let r = qr.r();
        let singular = || SmootherError::RankDeficient { x, rcond: 0.0 };
        if (0..q).any(|i| r[(i, i)] == 0.0 || !r[(i, i)].is_finite()) {
            return Err(singular());
        }
        let r_inv = r
            .solve_upper_triangular(&DMatrix::identity(q, q))
            .ok_or_else(singular)?;
        let rcond = 1.0 / (one_norm(&r) * one_norm(&r_inv));
        if !(rcond >= RCOND_THRESHOLD) {
            return Err(SmootherError::RankDeficient { x, rcond });
        }
        Ok(Self {
            x,
            h,
            expanded,
            start: range.start,
            sqrt_k,
            qr,
            r_inv,
            rcond,
        })
    }

    fn weights(&self) -> EffectiveWeights {
        // w = diag(√k) Q R⁻ᵀ e₀; R⁻ᵀ e₀ is the first row of R⁻¹.
        let first_row: DVector<f64> = self.r_inv.row(0).transpose();
        let v = self.qr.q() * first_row;
        let weights = v.iter().zip(&self.sqrt_k).map(|(v, s)| v * s).collect();
        EffectiveWeights {
            eval_point: self.x,
            start: self.start,
            weights,
        }
    }

    fn coefficients(&self, zs: &[f64]) -> Vec<f64> {
        let m = self.sqrt_k.len();
        let local = &zs[self.start..self.start + m];
        let mut rhs = DVector::from_iterator(m, local.iter().zip(&self.sqrt_k).map(|(z, s)| z * s));
        self.qr.q_tr_mul(&mut rhs);
        let q = self.r_inv.nrows();
        let qtz = rhs.rows(0, q).into_owned();
        let b = &self.r_inv * qtz;
        // b_j multiplies ((x − x_i)/h)^j
        b.iter()
            .enumerate()
            .map(|(j, bj)| bj / self.h.powi(j as i32))
            .collect()
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Weighted least-squares fit of degree `p` at `x`.
///
/// `xs` must be sorted (ties allowed); `zs` are the responses.
pub fn fit_at(xs: &[f64], zs: &[f64], config: &SmootherConfig, x: f64) -> Result<LocalFit, SmootherError> {
    check_inputs(xs, Some(zs), config)?;
    fit_unchecked(xs, zs, config, x)
}

fn fit_unchecked(xs: &[f64], zs: &[f64], config: &SmootherConfig, x: f64) -> Result<LocalFit, SmootherError> {
    let sys = LocalSystem::build(xs, config, x)?;
    Ok(LocalFit {
        coefficients: sys.coefficients(zs),
        weights: sys.weights(),
        condition_estimate: sys.rcond,
        bandwidth: sys.h,
        expanded: sys.expanded,
    })
}

/// Design-only weights at `x`, with the bandwidth actually used.
pub fn effective_weights(
    xs: &[f64],
    config: &SmootherConfig,
    x: f64,
) -> Result<(EffectiveWeights, f64), SmootherError> {
    check_inputs(xs, None, config)?;
    let sys = LocalSystem::build(xs, config, x)?;
    Ok((sys.weights(), sys.h))
}

fn check_grid(grid: &[f64]) -> Result<(), SmootherError> {
    if grid.iter().any(|g| !(0.0..=1.0).contains(g)) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(SmootherError::BadGrid);
    }
    Ok(())
}

/// [`fit_at`] on every grid point. Grid points are processed in parallel;
/// results come back in grid order.
pub fn fit_on_grid(
    xs: &[f64],
    zs: &[f64],
    config: &SmootherConfig,
    grid: &[f64],
) -> Result<Vec<LocalFit>, SmootherError> {
    check_inputs(xs, Some(zs), config)?;
    check_grid(grid)?;
    grid.par_iter()
        .map(|&g| {
            fit_unchecked(xs, zs, config, g).map_err(|e| SmootherError::AtGridPoint {
                x: g,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Effective weights on every grid point (design only).
pub fn weights_on_grid(
    xs: &[f64],
    config: &SmootherConfig,
    grid: &[f64],
) -> Result<Vec<(EffectiveWeights, f64)>, SmootherError> {
    check_inputs(xs, None, config)?;
    check_grid(grid)?;
    grid.par_iter()
        .map(|&g| {
            LocalSystem::build(xs, config, g)
                .map(|s| (s.weights(), s.h))
                .map_err(|e| SmootherError::AtGridPoint {
                    x: g,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// Size statistics of a weight vector used to check the linear-process CLT
/// conditions: both should be `O(1/(nh))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CltDiagnostics {
    pub max_abs_weight: f64,
    pub sum_sq_weights: f64,
    /// `n h · max |w_i|`
    pub scaled_max: f64,
    /// `n h · Σ w_i²`
    pub scaled_sum_sq: f64,
}

pub fn clt_diagnostics(weights: &EffectiveWeights, n: usize, h: f64) -> CltDiagnostics {
    let max_abs_weight = weights.weights.iter().fold(0.0_f64, |m, w| m.max(w.abs()));
    let sum_sq_weights = weights.weights.iter().map(|w| w * w).sum::<f64>();
    let nh = n as f64 * h;
    CltDiagnostics {
        max_abs_weight,
        sum_sq_weights,
        scaled_max: nh * max_abs_weight,
        scaled_sum_sq: nh * sum_sq_weights,
    }
}
