//! Difference sequences: validation, the classical fixed sequences, the
//! variance inflation constant and numerically optimal sequences.
//!
//! A difference sequence of order `r` is a coefficient vector
//! `(d_0, …, d_r)` with `Σ d_j = 0` and `Σ d_j² = 1`. Applied to `r + 1`
//! consecutive responses it cancels any locally constant mean and leaves a
//! contrast whose square is a local proxy for the noise variance.
//!
//! The variance constant is
//!
//! ```text
//! C = 2 (1 + 2 Σ_{k=1}^{r} ρ_k²),   ρ_k = Σ_{j=0}^{r-k} d_j d_{j+k}
//! ```
//!
//! Because `Σ_k ρ_k = ((Σ d)² − Σ d²) / 2 = −1/2`, Cauchy–Schwarz gives
//! `Σ ρ_k² ≥ 1/(4r)` and hence `C ≥ (2r + 1)/r`, with equality exactly when
//! every lag autocorrelation equals `−1/(2r)`. [`optimal_sequence`] solves
//! that system as a zero-residual least-squares problem on the sphere.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used for the two defining constraints.
pub const CONSTRAINT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffSeqError {
    #[error("a difference sequence needs at least two coefficients, got {0}")]
    TooShort(usize),
    #[error("coefficients must sum to zero (sum = {0:e})")]
    SumNotZero(f64),
    #[error("squared coefficients must sum to one (sum of squares = {0})")]
    NormNotOne(f64),
    #[error("first and last coefficients must be non-zero")]
    DegenerateEndpoint,
    #[error("coefficient {0} is not finite")]
    NonFinite(usize),
    #[error("unknown standard sequence kind `{0}`")]
    UnknownKind(String),
    #[error("order must be at least 1, got {0}")]
    NonPositiveOrder(i64),
    #[error("tolerance must be positive and finite, got {0}")]
    BadTolerance(f64),
    #[error("optimizer did not reach C_min + {tolerance:e} for order {order} (best excess {best_excess:e})")]
    ConvergenceFailure {
        order: usize,
        tolerance: f64,
        best_excess: f64,
    },
}

/// A validated difference sequence.
///
/// Serializes as a bare JSON array of coefficients; deserialization runs
/// the full validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DifferenceSequence {
    coeffs: Vec<f64>,
}

impl DifferenceSequence {
    /// Validates `coeffs` against the difference-sequence constraints.
    pub fn new(coeffs: Vec<f64>) -> Result<Self, DiffSeqError> {
        if coeffs.len() < 2 {
            return Err(DiffSeqError::TooShort(coeffs.len()));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(DiffSeqError::NonFinite(i));
        }
        let sum: f64 = coeffs.iter().sum();
        if sum.abs() > CONSTRAINT_TOL {
            return Err(DiffSeqError::SumNotZero(sum));
        }
        let sumsq: f64 = coeffs.iter().map(|c| c * c).sum();
        if (sumsq - 1.0).abs() > CONSTRAINT_TOL {
            return Err(DiffSeqError::NormNotOne(sumsq));
        }
        let last = coeffs[coeffs.len() - 1];
        if coeffs[0].abs() <= CONSTRAINT_TOL || last.abs() <= CONSTRAINT_TOL {
            return Err(DiffSeqError::DegenerateEndpoint);
        }
        Ok(Self { coeffs })
    }

    /// The order `r`, i.e. the number of coefficients minus one.
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Lag-`k` autocorrelation `Σ_{j=0}^{r-k} d_j d_{j+k}`.
    pub fn lag_sum(&self, k: usize) -> f64 {
        lag_sum(&self.coeffs, k)
    }

    /// Applies the sequence to `r + 1` consecutive values.
    #[inline]
    pub fn apply(&self, window: &[f64]) -> f64 {
        debug_assert_eq!(window.len(), self.coeffs.len());
        self.coeffs.iter().zip(window).map(|(d, y)| d * y).sum()
    }

    /// The same sequence with its sign flipped.
    pub fn negated(&self) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }

    /// The same sequence read back to front.
    pub fn reversed(&self) -> Self {
        Self {
            coeffs: self.coeffs.iter().rev().copied().collect(),
        }
    }
}

impl TryFrom<Vec<f64>> for DifferenceSequence {
    type Error = DiffSeqError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<DifferenceSequence> for Vec<f64> {
    fn from(s: DifferenceSequence) -> Self {
        s.coeffs
    }
}

/// Shorthand for [`DifferenceSequence::new`].
pub fn validate(coeffs: &[f64]) -> Result<DifferenceSequence, DiffSeqError> {
    DifferenceSequence::new(coeffs.to_vec())
}

/// The two classical fixed sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceKind {
    /// `(1, −1)/√2`, the von Neumann / Rice first difference.
    FirstDifference,
    /// `(1, −2, 1)/√6`, the normalized three-point pattern of
    /// Gasser, Sroka and Jennen-Steinmetz.
    Gsjs,
}

impl fmt::Display for SequenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SequenceKind::FirstDifference => f.write_str("first-difference"),
            SequenceKind::Gsjs => f.write_str("gsjs"),
        }
    }
}

impl FromStr for SequenceKind {
    type Err = DiffSeqError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "first-difference" | "first" | "rice" => Ok(SequenceKind::FirstDifference),
            "gsjs" => Ok(SequenceKind::Gsjs),
            _ => Err(DiffSeqError::UnknownKind(s.to_string())),
        }
    }
}

pub fn standard_sequence(kind: SequenceKind) -> DifferenceSequence {
    let coeffs = match kind {
        SequenceKind::FirstDifference => {
            let a = std::f64::consts::FRAC_1_SQRT_2;
            vec![a, -a]
        }
        SequenceKind::Gsjs => {
            let a = 1.0 / 6f64.sqrt();
            vec![a, -2.0 * a, a]
        }
    };
    DifferenceSequence::new(coeffs).expect("standard sequences satisfy the constraints")
}

fn lag_sum(d: &[f64], k: usize) -> f64 {
    if k >= d.len() {
        return 0.0;
    }
    d.iter().zip(&d[k..]).map(|(a, b)| a * b).sum()
}

/// The variance inflation constant `C` of a difference sequence.
pub fn variance_factor(seq: &DifferenceSequence) -> f64 {
    let r = seq.order();
    let s: f64 = (1..=r).map(|k| seq.lag_sum(k).powi(2)).sum();
    2.0 * (1.0 + 2.0 * s)
}

/// Smallest achievable variance constant for order `r`: `(2r + 1)/r`.
pub fn min_constant(r: i64) -> Result<f64, DiffSeqError> {
    if r < 1 {
        return Err(DiffSeqError::NonPositiveOrder(r));
    }
    Ok((2 * r + 1) as f64 / r as f64)
}

/// Picks the canonical representative among the sign flip and reversal
/// images of a sequence: `d_0 > 0`, then lexicographically largest.
pub fn canonicalize(seq: &DifferenceSequence) -> DifferenceSequence {
    let candidates = [
        seq.clone(),
        seq.negated(),
        seq.reversed(),
        seq.reversed().negated(),
    ];
    candidates
        .into_iter()
        .filter(|c| c.coeffs[0] > 0.0)
        .max_by(|a, b| {
            a.coeffs
                .iter()
                .zip(&b.coeffs)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .expect("one of d and -d has a positive leading coefficient")
}

/// Orthonormal basis of the hyperplane `Σ d = 0` in `R^{r+1}` (Helmert
/// contrasts), stored as an `(r+1) × r` matrix.
fn helmert_basis(r: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(r + 1, r);
    for k in 1..=r {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            b[(i, k - 1)] = 1.0 / norm;
        }
        b[(k, k - 1)] = -(k as f64) / norm;
    }
    b
}

const MAX_RESTARTS: usize = 200;
const MAX_ITERS: usize = 500;
const GRAD_TOL: f64 = 1e-10;
const OPTIMIZER_SEED: u64 = 0x5EED_D1FF;

/// State of one Levenberg–Marquardt run on the unit sphere of the
/// hyperplane coordinates.
struct SphereProblem {
    r: usize,
    basis: DMatrix<f64>,
    target: f64,
}

impl SphereProblem {
    fn new(r: usize) -> Self {
        Self {
            r,
            basis: helmert_basis(r),
            target: -1.0 / (2.0 * r as f64),
        }
    }

    fn coeffs(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis * (v / v.norm())
    }

    /// Residuals `ρ_k(d) + 1/(2r)`, `k = 1..r`. Their squared norm equals
    /// `Σ ρ_k² − 1/(4r)`.
    fn residuals(&self, d: &DVector<f64>) -> DVector<f64> {
        let d = d.as_slice();
        DVector::from_iterator(self.r, (1..=self.r).map(|k| lag_sum(d, k) - self.target))
    }

    /// Jacobian of the residuals with respect to the unnormalized
    /// coordinates `v`.
    fn jacobian(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let norm = v.norm();
        let u = v / norm;
        let d = &self.basis * &u;
        let r = self.r;
        // dρ_k/dd_m = d_{m+k} + d_{m-k}
        let mut jd = DMatrix::zeros(r, r + 1);
        for k in 1..=r {
            for m in 0..=r {
                let mut g = 0.0;
                if m + k <= r {
                    g += d[m + k];
                }
                if m >= k {
                    g += d[m - k];
                }
                jd[(k - 1, m)] = g;
            }
        }
        // du/dv = (I - u uᵀ) / |v|
        let proj = (DMatrix::identity(r, r) - &u * u.transpose()) / norm;
        jd * &self.basis * proj
    }

    /// Runs damped Gauss–Newton from `v0`; returns the final coordinates,
    /// the objective excess `Σ ρ_k² − 1/(4r)` and the gradient norm.
    fn solve(&self, v0: DVector<f64>) -> (DVector<f64>, f64, f64) {
        let mut v = v0.normalize();
        let mut lambda = 1e-3;
        let mut res = self.residuals(&self.coeffs(&v));
        let mut cost = res.norm_squared();
        let mut grad_norm = f64::INFINITY;
        for _ in 0..MAX_ITERS {
            let j = self.jacobian(&v);
            let grad = j.transpose() * &res;
            grad_norm = 2.0 * grad.norm();
            if grad_norm < GRAD_TOL && cost < 1e-20 {
                break;
            }
            let jtj = j.transpose() * &j;
            let mut accepted = false;
            for _ in 0..40 {
                let mut a = jtj.clone();
                for i in 0..self.r {
                    a[(i, i)] += lambda * (1.0 + jtj[(i, i)]);
                }
                let step = match a.cholesky() {
                    Some(ch) => ch.solve(&(-&grad)),
                    None => {
                        lambda *= 10.0;
                        continue;
                    }
                };
                let mut trial = &v + step;
                trial /= trial.norm();
                let tres = self.residuals(&self.coeffs(&trial));
                let tcost = tres.norm_squared();
                if tcost <= cost {
                    v = trial;
                    res = tres;
                    cost = tcost;
                    lambda = (lambda * 0.3).max(1e-15);
                    accepted = true;
                    break;
                }
                lambda *= 10.0;
            }
            if !accepted {
                break;
            }
        }
        (v, cost, grad_norm)
    }
}

/// Finds a difference sequence of order `r` whose variance constant is
/// within `tolerance` of `(2r + 1)/r`, canonicalized so that `d_0 > 0`.
///
/// Restarts are drawn from a fixed seed, so the output is reproducible.
/// Only the attained constant is guaranteed; for `r ≥ 2` several
/// coefficient vectors can be optimal.
pub fn optimal_sequence(r: usize, tolerance: f64) -> Result<DifferenceSequence, DiffSeqError> {
    if r < 1 {
        return Err(DiffSeqError::NonPositiveOrder(r as i64));
    }
    if !(tolerance > 0.0 && tolerance.is_finite()) {
        return Err(DiffSeqError::BadTolerance(tolerance));
    }
    let c_min = min_constant(r as i64)?;
    let problem = SphereProblem::new(r);
    let mut rng = ChaCha8Rng::seed_from_u64(OPTIMIZER_SEED ^ r as u64);
    let mut best_excess = f64::INFINITY;
    for _ in 0..MAX_RESTARTS {
        let v0 = DVector::from_iterator(r, (0..r).map(|_| rng.sample::<f64, _>(StandardNormal)));
        if v0.norm() < 1e-8 {
            continue;
        }
        let (v, _, grad_norm) = problem.solve(v0);
        let Some(seq) = renormalize(problem.coeffs(&v).as_slice()) else {
            continue;
        };
        let excess = variance_factor(&seq) - c_min;
        best_excess = best_excess.min(excess);
        if excess < tolerance && (grad_norm < GRAD_TOL || excess < 1e-14) {
            return Ok(canonicalize(&seq));
        }
    }
    Err(DiffSeqError::ConvergenceFailure {
        order: r,
        tolerance,
        best_excess,
    })
}

/// Projects raw coefficients back onto the constraint set to machine
/// precision; `None` if the result is not a valid sequence.
fn renormalize(raw: &[f64]) -> Option<DifferenceSequence> {
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let centered: Vec<f64> = raw.iter().map(|c| c - mean).collect();
    let norm = centered.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 {
        return None;
    }
    DifferenceSequence::new(centered.into_iter().map(|c| c / norm).collect()).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn validates_first_difference() {
        let a = 1.0 / 2f64.sqrt();
        let s = validate(&[a, -a]).unwrap();
        assert_eq!(s.order(), 1);
    }

    #[test]
    fn rejects_bad_sequences() {
        assert!(matches!(validate(&[0.5, 0.5]), Err(DiffSeqError::SumNotZero(_))));
        assert!(matches!(validate(&[1.0, -1.0]), Err(DiffSeqError::NormNotOne(_))));
        assert!(matches!(validate(&[1.0]), Err(DiffSeqError::TooShort(1))));
        let a = 1.0 / 2f64.sqrt();
        assert_eq!(validate(&[a, -a, 0.0]), Err(DiffSeqError::DegenerateEndpoint));
        assert!(matches!(validate(&[a, f64::NAN]), Err(DiffSeqError::NonFinite(1))));
    }

    #[test]
    fn standard_sequences() {
        let fd = standard_sequence(SequenceKind::FirstDifference);
        assert_abs_diff_eq!(fd.coeffs()[0], 0.707_106_781_186_547_5, epsilon = 1e-15);
        assert_abs_diff_eq!(fd.coeffs()[1], -0.707_106_781_186_547_5, epsilon = 1e-15);
        let g = standard_sequence(SequenceKind::Gsjs);
        let expected = [0.408_248_290_463_863, -0.816_496_580_927_726, 0.408_248_290_463_863];
        for (c, e) in g.coeffs().iter().zip(expected) {
            assert_abs_diff_eq!(*c, e, epsilon = 1e-14);
        }
        assert!(validate(g.coeffs()).is_ok());
        assert!(matches!(
            "quadratic".parse::<SequenceKind>(),
            Err(DiffSeqError::UnknownKind(_))
        ));
        assert_eq!("gsjs".parse::<SequenceKind>().unwrap(), SequenceKind::Gsjs);
    }

    #[test]
    fn variance_factor_examples() {
        let fd = standard_sequence(SequenceKind::FirstDifference);
        assert_abs_diff_eq!(variance_factor(&fd), 3.0, epsilon = 1e-14);
        let g = standard_sequence(SequenceKind::Gsjs);
        assert_abs_diff_eq!(g.lag_sum(1), -2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.lag_sum(2), 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(variance_factor(&g), 35.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn min_constant_examples() {
        assert_eq!(min_constant(1).unwrap(), 3.0);
        assert_eq!(min_constant(2).unwrap(), 2.5);
        assert_eq!(min_constant(4).unwrap(), 2.25);
        assert_eq!(min_constant(0), Err(DiffSeqError::NonPositiveOrder(0)));
        assert_eq!(min_constant(-3), Err(DiffSeqError::NonPositiveOrder(-3)));
    }

    #[test]
    fn order_one_optimum_is_first_difference() {
        // The order-1 constraint set is {±(1,-1)/√2}; canonical form picks +.
        let s = optimal_sequence(1, 1e-6).unwrap();
        let fd = standard_sequence(SequenceKind::FirstDifference);
        for (a, b) in s.coeffs().iter().zip(fd.coeffs()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(variance_factor(&s), 3.0, epsilon = 1e-6);
    }

    #[test]
    fn optimal_orders_two_and_three() {
        let s2 = optimal_sequence(2, 1e-6).unwrap();
        assert_abs_diff_eq!(variance_factor(&s2), 2.5, epsilon = 1e-6);
        assert!(s2.coeffs()[0] > 0.0);
        let s3 = optimal_sequence(3, 1e-6).unwrap();
        assert_abs_diff_eq!(variance_factor(&s3), 7.0 / 3.0, epsilon = 1e-6);
    }

    #[test]
    fn optimizer_is_deterministic() {
        assert_eq!(optimal_sequence(4, 1e-8).unwrap(), optimal_sequence(4, 1e-8).unwrap());
    }

    #[test]
    fn optimizer_rejects_bad_arguments() {
        assert!(matches!(optimal_sequence(0, 1e-6), Err(DiffSeqError::NonPositiveOrder(0))));
        assert!(matches!(optimal_sequence(2, 0.0), Err(DiffSeqError::BadTolerance(_))));
    }

    #[test]
    fn canonical_form_is_symmetric_image_invariant() {
        let s = optimal_sequence(3, 1e-8).unwrap();
        for img in [s.negated(), s.reversed(), s.reversed().negated()] {
            assert_eq!(canonicalize(&img), s);
        }
    }

    #[test]
    fn json_is_a_bare_array() {
        let fd = standard_sequence(SequenceKind::FirstDifference);
        let js = serde_json::to_string(&fd).unwrap();
        assert!(js.starts_with('[') && js.ends_with(']'));
        let back: DifferenceSequence = serde_json::from_str(&js).unwrap();
        assert_eq!(back, fd);
        assert!(serde_json::from_str::<DifferenceSequence>("[1.0, -1.0]").is_err());
    }

    #[test]
    fn helmert_basis_is_orthonormal_and_sums_to_zero() {
        let b = helmert_basis(5);
        let g = b.transpose() * &b;
        assert!((g - DMatrix::identity(5, 5)).abs().max() < 1e-14);
        for c in 0..5 {
            assert!(b.column(c).sum().abs() < 1e-14);
        }
    }
}
