use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use super::rng::replication_rng;
use super::SimError;
use crate::estimator::{check_design, equispaced_design, Sample};

/// Smoothness class parameters: exponent `γ`, Hölder constant `C_1`,
/// derivative bound `C_2` and, for variance functions, a lower bound `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoelderClassSpec {
    pub gamma: f64,
    pub c1: f64,
    pub c2: f64,
    #[serde(default)]
    pub delta: Option<f64>,
}

impl HoelderClassSpec {
    pub fn new(gamma: f64, c1: f64, c2: f64) -> Self {
        Self {
            gamma,
            c1,
            c2,
            delta: None,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }

    /// Greatest integer strictly less than `γ`, the convention under which
    /// local polynomial degree must satisfy `p > ⌊γ⌋`.
    pub fn integer_part(&self) -> usize {
        strict_floor(self.gamma)
    }

    fn validate(&self, what: &str) -> Result<(), SimError> {
        let ok = self.gamma > 0.0
            && self.c1 > 0.0
            && self.c2 > 0.0
            && self.delta.is_none_or(|d| d > 0.0)
            && self.gamma.is_finite();
        if ok {
            Ok(())
        } else {
            Err(SimError::BadScenario(format!("invalid smoothness class for {what}: {self:?}")))
        }
    }
}

/// Greatest integer strictly below `gamma` (so 2 ↦ 1, 2.5 ↦ 2).
pub fn strict_floor(gamma: f64) -> usize {
    (gamma.ceil() - 1.0).max(0.0) as usize
}

/// Closed-form test functions on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionSpec {
    Constant { value: f64 },
    /// `offset + amplitude · sin(2π · frequency · x)`
    Sine {
        offset: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// `scale · |x − center|^exponent`
    Cusp { center: f64, exponent: f64, scale: f64 },
    /// `Σ_k coeffs[k] x^k`
    Polynomial { coeffs: Vec<f64> },
}

impl FunctionSpec {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            FunctionSpec::Constant { value } => *value,
            FunctionSpec::Sine {
                offset,
                amplitude,
                frequency,
            } => offset + amplitude * (2.0 * PI * frequency * x).sin(),
            FunctionSpec::Cusp {
                center,
                exponent,
                scale,
            } => scale * (x - center).abs().powf(*exponent),
            FunctionSpec::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
        }
    }
}

/// Unit-variance, mean-zero error distributions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorLaw {
    #[default]
    Gaussian,
    /// Uniform on `[−√3, √3]`.
    ScaledUniform,
    /// Student t with `df > 8` degrees of freedom, rescaled to unit variance.
    StudentT { df: f64 },
}

impl ErrorLaw {
    pub fn validate(&self) -> Result<(), SimError> {
        match self {
            ErrorLaw::StudentT { df } if !(*df > 8.0 && df.is_finite()) => Err(SimError::BadScenario(
                format!("student t errors need df > 8, got {df}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn fourth_moment(&self) -> f64 {
        match self {
            ErrorLaw::Gaussian => 3.0,
            ErrorLaw::ScaledUniform => 9.0 / 5.0,
            ErrorLaw::StudentT { df } => 3.0 * (df - 2.0) / (df - 4.0),
        }
    }

    pub(crate) fn sampler(&self) -> ErrorSampler {
        match self {
            ErrorLaw::Gaussian => ErrorSampler::Gaussian,
            ErrorLaw::ScaledUniform => ErrorSampler::Uniform(3f64.sqrt()),
            ErrorLaw::StudentT { df } => ErrorSampler::StudentT(
                StudentT::new(*df).expect("validated degrees of freedom"),
                ((df - 2.0) / df).sqrt(),
            ),
        }
    }
}

pub(crate) enum ErrorSampler {
    Gaussian,
    Uniform(f64),
    StudentT(StudentT<f64>, f64),
}

impl ErrorSampler {
    #[inline]
    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ErrorSampler::Gaussian => rng.sample(StandardNormal),
            ErrorSampler::Uniform(a) => rng.random_range(-*a..*a),
            ErrorSampler::StudentT(t, s) => t.sample(rng) * s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Design {
    /// `x_i = i/(n+1)`
    #[default]
    Equispaced,
    Explicit { xs: Vec<f64> },
}

fn default_true() -> bool {
    true
}

/// Simulation model `y_i = g(x_i) + √V(x_i) ε_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub mean_fn: FunctionSpec,
    pub var_fn: FunctionSpec,
    #[serde(default)]
    pub design: Design,
    #[serde(default)]
    pub error_law: ErrorLaw,
    pub n: usize,
    pub mean_class: HoelderClassSpec,
    pub var_class: HoelderClassSpec,
    /// Enforce `V ≥ δ` on the design; off only for degenerate self-tests.
    #[serde(default = "default_true")]
    pub check_delta: bool,
}

impl Scenario {
    /// `g(x) = 2 + sin 2πx`, `V(x) = 0.5 + 0.25 sin 2πx`, gaussian errors,
    /// treated as a `γ = 2` target.
    pub fn smooth_default(n: usize) -> Self {
        Self {
            id: format!("smooth-n{n}"),
            mean_fn: FunctionSpec::Sine {
                offset: 2.0,
                amplitude: 1.0,
                frequency: 1.0,
            },
            var_fn: FunctionSpec::Sine {
                offset: 0.5,
                amplitude: 0.25,
                frequency: 1.0,
            },
            design: Design::Equispaced,
            error_law: ErrorLaw::Gaussian,
            n,
            mean_class: HoelderClassSpec::new(2.0, 4.0 * PI * PI, 2.0 * PI + 3.0),
            var_class: HoelderClassSpec::new(2.0, PI * PI, 0.5 * PI + 0.75).with_delta(0.25),
            check_delta: true,
        }
    }

    /// Constant mean and variance.
    pub fn homoscedastic(n: usize, mean: f64, variance: f64) -> Self {
        Self {
            id: format!("homoscedastic-n{n}"),
            mean_fn: FunctionSpec::Constant { value: mean },
            var_fn: FunctionSpec::Constant { value: variance },
            design: Design::Equispaced,
            error_law: ErrorLaw::Gaussian,
            n,
            mean_class: HoelderClassSpec::new(2.0, 1.0, mean.abs().max(1.0)),
            var_class: HoelderClassSpec::new(2.0, 1.0, variance.max(1.0)).with_delta(variance.min(1.0)),
            check_delta: true,
        }
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_error_law(mut self, law: ErrorLaw) -> Self {
        self.error_law = law;
        self
    }

    pub fn with_mean(mut self, mean_fn: FunctionSpec, class: HoelderClassSpec) -> Self {
        self.mean_fn = mean_fn;
        self.mean_class = class;
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn design_points(&self) -> Vec<f64> {
        match &self.design {
            Design::Equispaced => equispaced_design(self.n),
            Design::Explicit { xs } => xs.clone(),
        }
    }

    pub fn variance_at(&self, x: f64) -> f64 {
        self.var_fn.eval(x)
    }

    pub fn mean_at(&self, x: f64) -> f64 {
        self.mean_fn.eval(x)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n < 2 {
            return Err(SimError::BadScenario(format!("n must be at least 2, got {}", self.n)));
        }
        if let Design::Explicit { xs } = &self.design {
            if xs.len() != self.n {
                return Err(SimError::BadScenario(format!(
                    "explicit design has {} points but n = {}",
                    xs.len(),
                    self.n
                )));
            }
            check_design(xs).map_err(|e| SimError::BadScenario(e.to_string()))?;
        }
        self.error_law.validate()?;
        self.mean_class.validate("the mean")?;
        self.var_class.validate("the variance")?;
        let floor = if self.check_delta {
            self.var_class.delta.ok_or_else(|| {
                SimError::BadScenario("variance class needs a positive lower bound delta".into())
            })?
        } else {
            0.0
        };
        for x in self.design_points() {
            let v = self.var_fn.eval(x);
            if !(v >= floor) || !v.is_finite() {
                return Err(SimError::BadScenario(format!(
                    "variance {v} at x = {x} is below the bound {floor}"
                )));
            }
            if !self.mean_fn.eval(x).is_finite() {
                return Err(SimError::BadScenario(format!("mean is not finite at x = {x}")));
            }
        }
        Ok(())
    }

    pub(crate) fn prepare(&self) -> Result<PreparedScenario, SimError> {
        self.validate()?;
        let xs = self.design_points();
        let mean = xs.iter().map(|&x| self.mean_fn.eval(x)).collect();
        let sd = xs.iter().map(|&x| self.var_fn.eval(x).sqrt()).collect();
        Ok(PreparedScenario {
            xs,
            mean,
            sd,
            errors: self.error_law.sampler(),
        })
    }
}

/// Design, mean and standard deviation tabulated on the design points.
pub(crate) struct PreparedScenario {
    pub xs: Vec<f64>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    errors: ErrorSampler,
}

impl PreparedScenario {
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, ys: &mut Vec<f64>) {
        ys.clear();
        ys.extend(
            self.mean
                .iter()
                .zip(&self.sd)
                .map(|(g, s)| g + s * self.errors.draw(rng)),
        );
    }

    /// Like [`PreparedScenario::fill`] for observations `range` only.
    pub fn fill_range<R: Rng + ?Sized>(&self, rng: &mut R, range: std::ops::Range<usize>, ys: &mut Vec<f64>) {
        ys.clear();
        ys.extend(
            self.mean[range.clone()]
                .iter()
                .zip(&self.sd[range])
                .map(|(g, s)| g + s * self.errors.draw(rng)),
        );
    }
}

/// One draw from the scenario; identical for identical seeds.
pub fn generate_sample(scenario: &Scenario, seed: u64) -> Result<Sample, SimError> {
    let prepared = scenario.prepare()?;
    let mut rng = replication_rng(seed, 0, 0);
    let mut ys = Vec::with_capacity(scenario.n);
    prepared.fill(&mut rng, &mut ys);
    Ok(Sample::new(prepared.xs, ys)?)
}
