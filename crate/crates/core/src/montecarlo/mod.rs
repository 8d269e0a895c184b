//! Seeded Monte Carlo certification of the asymptotic normality of kernel
//! estimators and of their risks.
//!
//! For each sample size `n` and replication `r`, a data set `D ~ Pⁿ` is drawn
//! from its own stream keyed by `(seed, n, r)`, the estimator is fitted with
//! the regularization `λ_n` given by the configured rule, and the rescaled
//! deviations `√n (f̂ - f₀)` on a grid and `√n (ℛ(f̂) - ℛ(f₀))` are recorded.
//! They are then compared with the plug-in Gaussian limit.

mod stats;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use stats::{
    anderson_darling, anderson_darling_critical, ks_distance_normal, normality_test,
    NormalityResult,
};

use crate::derivative::{CovarianceEstimate, DerivativeContext};
use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, Point};
use crate::losses::LossSpec;
use crate::measures::FiniteMeasure;
use crate::rng;
use crate::solver::{SolverOptions, Svm};

/// How `λ_n` is chosen for a sample of size `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LambdaRule {
    /// `λ_n = λ₀`.
    Fixed,
    /// `λ_n = λ₀ + c / √(n ln n)`.
    Shrinking { c: f64 },
    /// `λ_n = λ₀ + c·U / √(n ln n)` with `U ~ Uniform[0, 1]` drawn per data set.
    RandomShrinking { c: f64 },
}

impl LambdaRule {
    pub fn lambda<R: Rng + ?Sized>(&self, lambda0: f64, n: usize, rng: &mut R) -> f64 {
        let rate = || 1.0 / (n as f64 * (n as f64).ln()).sqrt();
        match *self {
            LambdaRule::Fixed => lambda0,
            LambdaRule::Shrinking { c } => lambda0 + c * rate(),
            LambdaRule::RandomShrinking { c } => lambda0 + c * rng.random::<f64>() * rate(),
        }
    }
}

fn default_alpha() -> f64 {
    0.01
}

fn default_ci_z() -> f64 {
    1.96
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub measure: FiniteMeasure,
    pub kernel: KernelSpec,
    pub loss: LossSpec,
    pub lambda0: f64,
    pub lambda_rule: LambdaRule,
    pub n_values: Vec<usize>,
    pub replications: usize,
    /// Evaluation points; defaults to the support inputs plus midpoints.
    #[serde(default)]
    pub grid: Option<Vec<Point>>,
    pub seed: u64,
    /// Level of the marginal normality tests.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Normal quantile of the confidence intervals.
    #[serde(default = "default_ci_z")]
    pub ci_z: f64,
    #[serde(default)]
    pub solver: SolverOptions,
}

/// Outcome of one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeReport {
    pub n: usize,
    pub replications: usize,
    pub failures: usize,
    pub mean_lambda: f64,
    /// `√n (f̂ - f₀)` on the grid, one row per successful replication.
    pub deviations: Vec<Vec<f64>>,
    /// `√n (ℛ(f̂) - ℛ(f₀))` per successful replication.
    pub risk_deviations: Vec<f64>,
    pub mean: Vec<f64>,
    /// Sample covariance (denominator `R - 1`) of the deviations.
    pub covariance: Vec<Vec<f64>>,
    pub normality: Vec<NormalityResult>,
    pub coverage: Vec<Coverage>,
    pub risk_mean: f64,
    pub risk_ks: f64,
}

/// Empirical coverage of `f₀(x_i)` by `f̂(x_i) ± z √(Σ_ii / n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Coverage {
    Covered {
        fraction: f64,
    },
    /// `Σ_ii = 0`: no interval to speak of.
    Skipped,
}

impl Coverage {
    pub fn fraction(&self) -> Option<f64> {
        match self {
            Coverage::Covered { fraction } => Some(*fraction),
            Coverage::Skipped => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub generator: String,
    pub config: ExperimentConfig,
    pub grid: Vec<Point>,
    pub plugin: CovarianceEstimate,
    pub risk_f0: f64,
    pub per_n: Vec<SampleSizeReport>,
}

impl CltReport {
    pub fn largest_n(&self) -> Option<&SampleSizeReport> {
        self.per_n.iter().max_by_key(|r| r.n)
    }
}

/// Support inputs sorted lexicographically, with the midpoint of each consecutive pair.
pub fn default_grid(p: &FiniteMeasure) -> Vec<Point> {
    let mut xs = p.distinct_x();
    xs.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut grid = Vec::with_capacity(2 * xs.len());
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            grid.push(
                xs[i - 1]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect(),
            );
        }
        grid.push(x.clone());
    }
    grid
}

const MAX_FAILURE_FRACTION: f64 = 0.01;

/// Runs the full experiment; the result depends only on `cfg`.
pub fn run_clt_experiment(cfg: &ExperimentConfig) -> Result<CltReport> {
    validate(cfg)?;
    let loss = cfg.loss.build()?;
    let svm = Svm::new(cfg.kernel, loss).with_options(cfg.solver.clone());
    let grid = cfg
        .grid
        .clone()
        .unwrap_or_else(|| default_grid(&cfg.measure));
    let ctx = DerivativeContext::build(&svm, &cfg.measure, cfg.lambda0)?;
    let plugin = ctx.plugin_covariance(&grid, true)?;
    let f0 = ctx.solution().clone();
    let f0_grid: Vec<f64> = grid.iter().map(|x| f0.eval_unchecked(x)).collect();
    let risk_f0 = svm.risk(&cfg.measure, &f0)?;

    let per_n = cfg
        .n_values
        .iter()
        .map(|&n| {
            let outcomes: Vec<Result<Option<Replication>>> = (0..cfg.replications)
                .into_par_iter()
                .map(|r| {
                    let keys = [n as u64, r as u64];
                    let data = cfg
                        .measure
                        .sample(n, &mut rng::stream(cfg.seed, &[keys[0], keys[1], 0]))?;
                    let lambda = cfg.lambda_rule.lambda(
                        cfg.lambda0,
                        n,
                        &mut rng::stream(cfg.seed, &[keys[0], keys[1], 1]),
                    );
                    let emp = FiniteMeasure::empirical(&data)?;
                    let rep = svm.solve(&emp, lambda)?;
                    if !rep.converged {
                        return Ok(None);
                    }
                    let root_n = (n as f64).sqrt();
                    let dev = grid
                        .iter()
                        .zip(&f0_grid)
                        .map(|(x, f)| root_n * (rep.solution.eval_unchecked(x) - f))
                        .collect();
                    let risk_dev = root_n * (svm.risk(&cfg.measure, &rep.solution)? - risk_f0);
                    Ok(Some((dev, risk_dev, lambda)))
                })
                .collect();
            summarize(cfg, n, &plugin, outcomes)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(CltReport {
        generator: rng::GENERATOR.to_string(),
        config: cfg.clone(),
        grid,
        plugin,
        risk_f0,
        per_n,
    })
}

fn validate(cfg: &ExperimentConfig) -> Result<()> {
    if !cfg.measure.is_probability() {
        return Err(Error::input(
            "experiment measure must be a probability measure",
        ));
    }
    if cfg.replications < 2 {
        return Err(Error::input("need at least two replications"));
    }
    if cfg.n_values.is_empty() || cfg.n_values.iter().any(|n| *n < 2) {
        return Err(Error::input("sample sizes must be at least 2"));
    }
    if !(cfg.lambda0 > 0.0) {
        return Err(Error::input("lambda0 must be positive"));
    }
    match cfg.lambda_rule {
        LambdaRule::Shrinking { c } | LambdaRule::RandomShrinking { c }
            if !(c >= 0.0 && c.is_finite()) =>
        {
            return Err(Error::input(format!(
                "lambda rule constant must be >= 0, got {c}"
            )))
        }
        _ => {}
    }
    anderson_darling_critical(cfg.alpha)?;
    cfg.kernel.validate()
}

/// Grid deviations, risk deviation and `λ_n` of one converged replication.
type Replication = (Vec<f64>, f64, f64);

fn summarize(
    cfg: &ExperimentConfig,
    n: usize,
    plugin: &CovarianceEstimate,
    outcomes: Vec<Result<Option<Replication>>>,
) -> Result<SampleSizeReport> {
    let mut deviations = Vec::new();
    let mut risk_deviations = Vec::new();
    let mut lambda_sum = 0.0;
    let mut failures = 0;
    for o in outcomes {
        match o {
            Ok(Some((d, rd, l))) => {
                deviations.push(d);
                risk_deviations.push(rd);
                lambda_sum += l;
            }
            Ok(None) | Err(Error::Numeric(_)) => failures += 1,
            Err(e) => return Err(e),
        }
    }
    if failures as f64 > MAX_FAILURE_FRACTION * cfg.replications as f64 {
        return Err(Error::numeric(format!(
            "{failures} of {} replications failed at n = {n}",
            cfg.replications
        )));
    }
    let r = deviations.len();
    let m = plugin.grid.len();
    let mean: Vec<f64> = (0..m)
        .map(|i| deviations.iter().map(|d| d[i]).sum::<f64>() / r as f64)
        .collect();
    let mut covariance = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i..m {
            let c = deviations
                .iter()
                .map(|d| (d[i] - mean[i]) * (d[j] - mean[j]))
                .sum::<f64>()
                / (r as f64 - 1.0);
            covariance[i][j] = c;
            covariance[j][i] = c;
        }
    }
    let normality = (0..m)
        .map(|i| {
            let col: Vec<f64> = deviations.iter().map(|d| d[i]).collect();
            normality_test(&col, 0.0, plugin.sigma_matrix[i][i].max(0.0), cfg.alpha)
        })
        .collect::<Result<Vec<_>>>()?;
    let coverage = coverage_from(&deviations, plugin, cfg.ci_z);
    let risk_mean = risk_deviations.iter().sum::<f64>() / r as f64;
    let risk_ks = ks_distance_normal(&risk_deviations, 0.0, plugin.risk_sigma.unwrap_or(0.0))?;
    Ok(SampleSizeReport {
        n,
        replications: cfg.replications,
        failures,
        mean_lambda: lambda_sum / r as f64,
        deviations,
        risk_deviations,
        mean,
        covariance,
        normality,
        coverage,
        risk_mean,
        risk_ks,
    })
}

/// `f̂(x_i) ± z√(Σ_ii/n)` covers `f₀(x_i)` iff `|√n (f̂ - f₀)(x_i)| ≤ z√Σ_ii`.
fn coverage_from(deviations: &[Vec<f64>], plugin: &CovarianceEstimate, z: f64) -> Vec<Coverage> {
    let r = deviations.len() as f64;
    plugin
        .diagonal()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if *s <= 0.0 {
                return Coverage::Skipped;
            }
            let half = z * s.sqrt();
            let hits = deviations.iter().filter(|d| d[i].abs() <= half).count() as f64;
            Coverage::Covered { fraction: hits / r }
        })
        .collect()
}

/// Per-grid-point coverage of every sample size in the report.
pub fn coverage_check(report: &CltReport) -> Vec<(usize, Vec<Coverage>)> {
    report
        .per_n
        .iter()
        .map(|s| {
            (
                s.n,
                coverage_from(&s.deviations, &report.plugin, report.config.ci_z),
            )
        })
        .collect()
}
