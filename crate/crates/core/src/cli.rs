//! The `diffvar` command line.
//!
//! Exit codes: 0 success, 1 bad usage, 2 bad input, 3 computation failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bandwidth::{cv_select, rate_optimal_bandwidth, BandwidthGrid, CvReport, DEFAULT_FOLDS};
use crate::diffseq::{
    min_constant, optimal_sequence, standard_sequence, variance_factor, DifferenceSequence, SequenceKind,
};
use crate::estimator::estimate_variance;
use crate::io::{self, IoError};
use crate::simlab::{
    normality_experiment, rate_experiment, risk_report, BandwidthRule, ErrorLaw, EstimatorSpec, RateExperiment,
    RiskGrid, RiskOptions, Scenario, SequenceChoice, SimError,
};
use crate::smoother::{Kernel, SmootherConfig};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
    Computation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Computation(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Input(m) | CliError::Computation(m) => m,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Input(e.to_string())
    }
}

fn computation(e: impl std::fmt::Display) -> CliError {
    CliError::Computation(e.to_string())
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::BadScenario(_) => CliError::Input(e.to_string()),
        SimError::BadConfig(_) => CliError::Usage(e.to_string()),
        other => computation(other),
    }
}

#[derive(Debug, Parser)]
#[command(name = "diffvar", version, about = "Difference-based variance function estimation")]
pub struct Cli {
    /// Upper bound on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate V(x) from an `x,y` CSV file.
    Estimate(EstimateArgs),
    /// Monte Carlo risk of an estimator on a list of scenarios.
    Simulate(SimulateArgs),
    /// Convergence-rate experiment over a sequence of sample sizes.
    Rates(RatesArgs),
    /// Normality diagnostics of V̂(x₀) across replications.
    Normality(NormalityArgs),
    /// Print a difference sequence with its variance constant.
    Diffseq(DiffseqArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SequenceArg {
    FirstDifference,
    Gsjs,
    Optimal,
}

/// `--bandwidth` value: a number, `cv` or `rate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthArg {
    Fixed(f64),
    Cv,
    Rate,
}

impl FromStr for BandwidthArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cv" => Ok(BandwidthArg::Cv),
            "rate" => Ok(BandwidthArg::Rate),
            _ => match s.parse::<f64>() {
                Ok(h) if h > 0.0 && h.is_finite() => Ok(BandwidthArg::Fixed(h)),
                _ => Err(format!("expected a positive number, `cv` or `rate`, got `{s}`")),
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct EstimatorArgs {
    #[arg(long, value_enum, default_value = "gsjs")]
    pub sequence: SequenceArg,
    /// Order r for `--sequence optimal`.
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    /// JSON array of difference-sequence coefficients (overrides --sequence).
    #[arg(long)]
    pub sequence_file: Option<PathBuf>,
    #[arg(long, default_value = "epanechnikov")]
    pub kernel: Kernel,
    #[arg(long, default_value_t = 1)]
    pub degree: usize,
    #[arg(long, default_value = "rate")]
    pub bandwidth: BandwidthArg,
    /// Smoothness exponent for `--bandwidth rate`.
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    /// Constant c in h = c·n^(-1/(2γ+1)).
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    pub folds: usize,
    #[arg(long)]
    pub expand_to_minimum: bool,
}

impl EstimatorArgs {
    fn validate(&self) -> Result<(), CliError> {
        if self.sequence == SequenceArg::Optimal && self.order == 0 {
            return Err(CliError::Usage("--order must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(CliError::Usage(format!("--gamma must be positive, got {}", self.gamma)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(CliError::Usage(format!("--scale must be positive, got {}", self.scale)));
        }
        if self.bandwidth == BandwidthArg::Cv && self.folds < 2 {
            return Err(CliError::Usage(format!("--folds must be at least 2, got {}", self.folds)));
        }
        Ok(())
    }

    fn sequence_choice(&self) -> Result<SequenceChoice, CliError> {
        if let Some(path) = &self.sequence_file {
            let coeffs: Vec<f64> = io::read_json(path)?;
            let seq = DifferenceSequence::new(coeffs)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            return Ok(SequenceChoice::Explicit { coeffs: seq });
        }
        Ok(match self.sequence {
            SequenceArg::FirstDifference => SequenceChoice::Standard {
                name: SequenceKind::FirstDifference,
            },
            SequenceArg::Gsjs => SequenceChoice::Standard {
                name: SequenceKind::Gsjs,
            },
            SequenceArg::Optimal => SequenceChoice::Optimal { order: self.order },
        })
    }

    fn spec(&self) -> Result<EstimatorSpec, CliError> {
        let bandwidth = match self.bandwidth {
            BandwidthArg::Fixed(h) => BandwidthRule::Fixed { h },
            BandwidthArg::Rate => BandwidthRule::Rate {
                gamma: self.gamma,
                scale: self.scale,
            },
            BandwidthArg::Cv => BandwidthRule::Cv {
                folds: self.folds,
                grid: None,
            },
        };
        Ok(EstimatorSpec::Local {
            sequence: self.sequence_choice()?,
            kernel: self.kernel,
            degree: self.degree,
            bandwidth,
            expand_to_minimum: self.expand_to_minimum,
        })
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// CSV file with header `x,y`.
    #[arg(long)]
    pub input: PathBuf,
    /// Output CSV with columns `x,vhat`.
    #[arg(long)]
    pub output: PathBuf,
    /// Provenance JSON (default: the output path with extension `.json`).
    #[arg(long)]
    pub provenance: Option<PathBuf>,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// Seed for the cross-validation folds (required with `--bandwidth cv`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of evaluation points, equispaced over the data range.
    #[arg(long, default_value_t = 101)]
    pub grid_size: usize,
    #[arg(long)]
    pub clip_at_zero: bool,
}

#[derive(Debug, Args)]
pub struct RiskArgs {
    #[arg(long, default_value_t = 100)]
    pub replications: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0.05)]
    pub grid_lo: f64,
    #[arg(long, default_value_t = 0.95)]
    pub grid_hi: f64,
    #[arg(long, default_value_t = 101)]
    pub grid_size: usize,
    /// Integrate over all of [0, 1] instead of [grid-lo, grid-hi].
    #[arg(long)]
    pub full_interval: bool,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl RiskArgs {
    fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Usage("--seed is required for simulations".into()))
    }

    fn grid(&self) -> Result<RiskGrid, CliError> {
        let grid = if self.full_interval {
            RiskGrid::full(self.grid_size)
        } else {
            RiskGrid {
                lo: self.grid_lo,
                hi: self.grid_hi,
                points: self.grid_size,
            }
        };
        grid.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if self.replications < 2 {
            return Err(CliError::Usage("--replications must be at least 2".into()));
        }
        Ok(grid)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON array of scenarios.
    #[arg(long)]
    pub scenarios: PathBuf,
    /// JSON estimator specification (overrides the estimator flags).
    #[arg(long)]
    pub estimator_file: Option<PathBuf>,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[command(flatten)]
    pub risk: RiskArgs,
    /// Points for pointwise risk.
    #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 0.75])]
    pub points: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct RatesArgs {
    /// Smoothness exponent of the target; sets h = c·n^(-1/(2γ+1)).
    #[arg(long)]
    pub gamma: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [512usize, 1024, 2048, 4096, 8192])]
    pub ns: Vec<usize>,
    /// Constant c of the bandwidth schedule.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Local polynomial degree (default ⌊γ⌋ + 1).
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long, value_enum, default_value = "gsjs")]
    pub sequence: SequenceArg,
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    #[arg(long, default_value = "epanechnikov")]
    pub kernel: Kernel,
    /// Scenario JSON used as the template (default: smooth scenario).
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub x0: f64,
    #[command(flatten)]
    pub risk: RiskArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ErrorLawArg {
    Gaussian,
    ScaledUniform,
    StudentT,
}

#[derive(Debug, Args)]
pub struct NormalityArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// Scenario JSON (overrides --n and --error-law).
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub error_law: ErrorLawArg,
    /// Degrees of freedom for student-t errors.
    #[arg(long, default_value_t = 9.0)]
    pub df: f64,
    #[arg(long, default_value_t = 0.5)]
    pub x0: f64,
    #[arg(long, value_enum, default_value = "optimal")]
    pub sequence: SequenceArg,
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    #[arg(long, default_value = "uniform")]
    pub kernel: Kernel,
    #[arg(long, default_value_t = 1)]
    pub degree: usize,
    /// Constant c in the undersmoothing bandwidth h = c·n^(-exponent).
    #[arg(long, default_value_t = 4.4)]
    pub scale: f64,
    #[arg(long, default_value_t = 0.3)]
    pub exponent: f64,
    #[arg(long, default_value_t = 1000)]
    pub replications: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the raw and standardized draws as CSV.
    #[arg(long)]
    pub draws_csv: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiffseqArgs {
    /// Order r of the variance-optimal sequence.
    #[arg(long, conflicts_with = "standard", required_unless_present = "standard")]
    pub optimal: Option<usize>,
    /// A classical sequence: `first-difference` or `gsjs`.
    #[arg(long)]
    pub standard: Option<SequenceKind>,
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// JSON sidecar written next to an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateProvenance {
    pub input: String,
    pub n: usize,
    pub sequence: DifferenceSequence,
    pub order: usize,
    pub variance_factor: f64,
    pub kernel: Kernel,
    pub degree: usize,
    pub bandwidth_mode: String,
    pub selected_bandwidth: f64,
    pub cv_report: Option<CvReport>,
    pub grid_size: usize,
    /// Grid points where the window had to be widened, with the width used.
    pub expansions: Vec<(f64, f64)>,
    pub negative_count: usize,
    pub clipped: bool,
}

/// Report of the `diffseq` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffseqReport {
    pub order: usize,
    pub coefficients: DifferenceSequence,
    pub variance_factor: f64,
    /// `(2r+1)/r`
    pub min_constant: f64,
}

fn evaluation_grid(xs: &[f64], size: usize) -> Vec<f64> {
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    if size == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..size)
        .map(|i| {
            if i + 1 == size {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (size - 1) as f64
            }
        })
        .collect()
}

fn cmd_estimate(args: &EstimateArgs) -> Result<(), CliError> {
    args.estimator.validate()?;
    if args.grid_size == 0 {
        return Err(CliError::Usage("--grid-size must be positive".into()));
    }
    let seed = match (args.estimator.bandwidth, args.seed) {
        (BandwidthArg::Cv, None) => {
            return Err(CliError::Usage("--seed is required with --bandwidth cv".into()));
        }
        (_, s) => s.unwrap_or(0),
    };
    let provenance_path = args
        .provenance
        .clone()
        .unwrap_or_else(|| args.output.with_extension("json"));
    if provenance_path == args.output {
        return Err(CliError::Usage("--provenance must differ from --output".into()));
    }

    let sample = io::read_sample_csv(&args.input)?;
    let seq = args.estimator.sequence_choice()?.resolve().map_err(sim_error)?;
    let e = &args.estimator;
    let base = SmootherConfig::new(0.5)
        .with_kernel(e.kernel)
        .with_degree(e.degree)
        .with_expansion(e.expand_to_minimum);
    let (h, mode, cv_report) = match e.bandwidth {
        BandwidthArg::Fixed(h) => (h, "fixed", None),
        BandwidthArg::Rate => (
            rate_optimal_bandwidth(sample.len(), e.gamma, e.scale).map_err(computation)?,
            "rate",
            None,
        ),
        BandwidthArg::Cv => {
            let grid = BandwidthGrid::default_for(sample.xs()).map_err(computation)?;
            let report = cv_select(&sample, &seq, &base, &grid, e.folds, seed).map_err(computation)?;
            (report.selected, "cv", Some(report))
        }
    };
    let config = base.with_bandwidth(h);
    let grid = evaluation_grid(sample.xs(), args.grid_size);
    let mut est = estimate_variance(&sample, &seq, &config, &grid).map_err(computation)?;
    if args.clip_at_zero {
        est = est.clip_at_zero();
    }
    let provenance = EstimateProvenance {
        input: args.input.display().to_string(),
        n: sample.len(),
        order: seq.order(),
        variance_factor: variance_factor(&seq),
        sequence: seq,
        kernel: config.kernel,
        degree: config.degree,
        bandwidth_mode: mode.into(),
        selected_bandwidth: h,
        cv_report,
        grid_size: grid.len(),
        expansions: est.provenance.expansions.clone(),
        negative_count: est.provenance.negative_count,
        clipped: est.provenance.clipped,
    };
    io::atomic_write(&args.output, &io::estimate_to_csv(&est)).map_err(computation)?;
    io::write_json_atomic(&provenance_path, &provenance).map_err(computation)?;
    Ok(())
}

fn emit<T: Serialize>(value: &T, output: Option<&Path>) -> Result<(), CliError> {
    match output {
        Some(p) => io::write_json_atomic(p, value).map_err(computation),
        None => std::io::stdout()
            .write_all(&io::to_json_bytes(value))
            .map_err(computation),
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    args.estimator.validate()?;
    let seed = args.risk.seed()?;
    let grid = args.risk.grid()?;
    let scenarios: Vec<Scenario> = io::read_json(&args.scenarios)?;
    if scenarios.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: the scenario list is empty",
            args.scenarios.display()
        )));
    }
    let spec = match &args.estimator_file {
        Some(p) => io::read_json(p)?,
        None => args.estimator.spec()?,
    };
    let options = RiskOptions {
        grid,
        points: args.points.clone(),
    };
    for s in &scenarios {
        s.validate().map_err(sim_error)?;
    }
    let reports = scenarios
        .iter()
        .map(|s| risk_report(s, &spec, &options, args.risk.replications, seed).map_err(sim_error))
        .collect::<Result<Vec<_>, _>>()?;
    emit(&reports, args.risk.output.as_deref())
}

fn sequence_from(arg: SequenceArg, order: usize) -> SequenceChoice {
    match arg {
        SequenceArg::FirstDifference => SequenceChoice::Standard {
            name: SequenceKind::FirstDifference,
        },
        SequenceArg::Gsjs => SequenceChoice::Standard {
            name: SequenceKind::Gsjs,
        },
        SequenceArg::Optimal => SequenceChoice::Optimal { order },
    }
}

fn cmd_rates(args: &RatesArgs) -> Result<(), CliError> {
    let seed = args.risk.seed()?;
    let grid = args.risk.grid()?;
    if !(args.gamma > 0.0 && args.gamma.is_finite()) {
        return Err(CliError::Usage(format!("--gamma must be positive, got {}", args.gamma)));
    }
    let scenario = match &args.scenario {
        Some(p) => io::read_json(p)?,
        None => Scenario::smooth_default(args.ns.first().copied().unwrap_or(2)),
    };
    let exp = RateExperiment {
        scenario,
        ns: args.ns.clone(),
        estimator: EstimatorSpec::Local {
            sequence: sequence_from(args.sequence, args.order),
            kernel: args.kernel,
            degree: args.degree.unwrap_or(args.gamma.floor() as usize + 1),
            bandwidth: BandwidthRule::Rate {
                gamma: args.gamma,
                scale: args.scale,
            },
            expand_to_minimum: false,
        },
        gamma: args.gamma,
        replications: args.risk.replications,
        seed,
        grid,
        x0: args.x0,
    };
    let report = rate_experiment(&exp).map_err(sim_error)?;
    emit(&report, args.risk.output.as_deref())
}

fn cmd_normality(args: &NormalityArgs) -> Result<(), CliError> {
    let seed = args
        .seed
        .ok_or_else(|| CliError::Usage("--seed is required for simulations".into()))?;
    let scenario = match &args.scenario {
        Some(p) => io::read_json(p)?,
        None => {
            let law = match args.error_law {
                ErrorLawArg::Gaussian => ErrorLaw::Gaussian,
                ErrorLawArg::ScaledUniform => ErrorLaw::ScaledUniform,
                ErrorLawArg::StudentT => ErrorLaw::StudentT { df: args.df },
            };
            Scenario::smooth_default(args.n).with_error_law(law)
        }
    };
    let spec = EstimatorSpec::Local {
        sequence: sequence_from(args.sequence, args.order),
        kernel: args.kernel,
        degree: args.degree,
        bandwidth: BandwidthRule::Power {
            scale: args.scale,
            exponent: args.exponent,
        },
        expand_to_minimum: false,
    };
    let report = normality_experiment(&scenario, &spec, args.x0, args.replications, seed).map_err(sim_error)?;
    if let Some(p) = &args.draws_csv {
        let csv = io::columns_to_csv(&["draw", "standardized"], &[&report.draws, &report.standardized]);
        io::atomic_write(p, &csv).map_err(computation)?;
    }
    emit(&report, args.output.as_deref())
}

fn cmd_diffseq(args: &DiffseqArgs) -> Result<(), CliError> {
    if !(args.tolerance > 0.0) {
        return Err(CliError::Usage("--tolerance must be positive".into()));
    }
    let seq = match (args.optimal, args.standard) {
        (Some(0), _) => return Err(CliError::Usage("--optimal must be at least 1".into())),
        (Some(r), _) => optimal_sequence(r, args.tolerance).map_err(computation)?,
        (None, Some(kind)) => standard_sequence(kind),
        (None, None) => return Err(CliError::Usage("give --optimal r or --standard name".into())),
    };
    let order = seq.order();
    let report = DiffseqReport {
        order,
        variance_factor: variance_factor(&seq),
        min_constant: min_constant(order as i64).map_err(computation)?,
        coefficients: seq,
    };
    emit(&report, args.output.as_deref())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Rates(a) => cmd_rates(a),
        Command::Normality(a) => cmd_normality(a),
        Command::Diffseq(a) => cmd_diffseq(a),
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(computation(e)),
        },
        None => dispatch(&cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            if let CliError::Usage(_) = e {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            e.exit_code()
        }
    }
}
