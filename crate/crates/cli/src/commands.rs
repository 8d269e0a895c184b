use std::fs::File;
use std::path::Path;

use serde::Serialize;
use svm_clt::losses::{mollify, EpsInsensitive, Hinge, LipschitzLoss, SmoothLoss};
use svm_clt::montecarlo::{default_grid, Coverage};
use svm_clt::solver::NormBoundReport;
use svm_clt::{
    run_clt_experiment, DegeneracyReport, DerivativeContext, Error, ExperimentConfig, FdReport,
    FiniteMeasure, Point, Result, Svm,
};

use crate::config::{BaseLoss, Config};
use crate::output::{coordinate_header, OutputDir};

fn read_measure(path: &Path) -> Result<FiniteMeasure> {
    let file = File::open(path)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    FiniteMeasure::read_csv(file)
        .map_err(|e| Error::Input(format!("{}: {}", path.display(), strip(&e))))
}

fn strip(e: &Error) -> String {
    match e {
        Error::Input(m) | Error::Numeric(m) | Error::Internal(m) => m.clone(),
    }
}

fn svm(cfg: &Config) -> Result<Svm> {
    Ok(Svm::new(cfg.kernel()?, cfg.loss()?.build()?).with_options(cfg.solver.clone()))
}

fn context(cfg: &Config) -> Result<DerivativeContext> {
    let p = read_measure(cfg.measure_path()?)?;
    DerivativeContext::build(&svm(cfg)?, &p, cfg.lambda0()?)
}

fn grid_or_default(grid: &Option<Vec<Point>>, p: &FiniteMeasure) -> Vec<Point> {
    grid.clone().unwrap_or_else(|| default_grid(p))
}

fn matrix_header(m: usize) -> Vec<String> {
    (1..=m).map(|j| format!("g{j}")).collect()
}

#[derive(Serialize)]
struct SolveResult {
    objective: f64,
    grad_norm_h: f64,
    iterations: usize,
    converged: bool,
    norm_h: f64,
    norm_bounds: NormBoundReport,
    anchors: usize,
}

pub fn solve(cfg: &Config, out: &OutputDir) -> Result<()> {
    let svm = svm(cfg)?;
    let mu = read_measure(cfg.measure_path()?)?;
    let lambda = cfg.lambda()?;
    let rep = svm.solve(&mu, lambda)?;
    let bounds = svm.norm_bound_check(&mu, lambda)?;
    let f = &rep.solution;
    let mut header = coordinate_header(mu.dim());
    header.push("coefficient".into());
    let rows: Vec<Vec<f64>> = f
        .anchors
        .iter()
        .zip(&f.coefficients)
        .map(|(a, c)| a.iter().copied().chain([*c]).collect())
        .collect();
    out.csv("solution.csv", &header, &rows)?;
    out.measure("measure.csv", &mu)?;
    let result = SolveResult {
        objective: rep.objective,
        grad_norm_h: rep.grad_norm_h,
        iterations: rep.iterations,
        converged: rep.converged,
        norm_h: f.norm(),
        norm_bounds: bounds,
        anchors: f.len(),
    };
    out.json("solve.json", "solve", cfg, &result)?;
    if !rep.converged {
        return Err(Error::Numeric(format!(
            "solver did not converge: grad norm {:e} after {} iterations",
            rep.grad_norm_h, rep.iterations
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct InfluenceEntry {
    x: Point,
    y: f64,
    norm_h: f64,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct InfluenceResult {
    grid: Vec<Point>,
    influence: Vec<InfluenceEntry>,
}

pub fn influence(cfg: &Config, out: &OutputDir) -> Result<()> {
    let ctx = context(cfg)?;
    if cfg.derivative.points.is_empty() {
        return Err(Error::Input("config is missing 'derivative.points'".into()));
    }
    let grid = grid_or_default(&cfg.derivative.grid, ctx.base());
    let mut entries = Vec::new();
    for z in &cfg.derivative.points {
        let h = ctx.influence_function(z)?;
        let values = grid.iter().map(|x| h.eval(x)).collect::<Result<_>>()?;
        entries.push(InfluenceEntry {
            x: z.x.clone(),
            y: z.y,
            norm_h: h.norm(),
            values,
        });
    }
    let dim = ctx.base().dim();
    let mut header: Vec<String> = coordinate_header(dim)
        .into_iter()
        .map(|c| format!("z_{c}"))
        .collect();
    header.push("z_y".into());
    header.extend(coordinate_header(dim));
    header.push("value".into());
    let mut rows = Vec::new();
    for e in &entries {
        for (x, v) in grid.iter().zip(&e.values) {
            let mut row = e.x.clone();
            row.push(e.y);
            row.extend(x);
            row.push(*v);
            rows.push(row);
        }
    }
    out.csv("influence.csv", &header, &rows)?;
    out.json(
        "influence.json",
        "influence",
        cfg,
        &InfluenceResult {
            grid,
            influence: entries,
        },
    )
}

pub fn covariance(cfg: &Config, out: &OutputDir) -> Result<()> {
    let ctx = context(cfg)?;
    let grid = grid_or_default(&cfg.derivative.grid, ctx.base());
    let est = ctx.plugin_covariance(&grid, cfg.derivative.also_risk)?;
    out.csv(
        "covariance.csv",
        &matrix_header(grid.len()),
        &est.sigma_matrix,
    )?;
    out.csv("grid.csv", &coordinate_header(ctx.base().dim()), &grid)?;
    out.json("covariance.json", "covariance", cfg, &est)
}

pub fn degeneracy(cfg: &Config, out: &OutputDir) -> Result<()> {
    let ctx = context(cfg)?;
    let rep: DegeneracyReport = ctx.degeneracy_check(cfg.derivative.basis_size, cfg.seed)?;
    out.json("degeneracy.json", "degeneracy", cfg, &rep)
}

#[derive(Serialize)]
struct FdResult {
    gateaux: FdReport,
    hadamard: Option<FdReport>,
}

pub fn fd_check(cfg: &Config, out: &OutputDir) -> Result<()> {
    let ctx = context(cfg)?;
    let dir = cfg
        .derivative
        .direction
        .as_deref()
        .ok_or_else(|| Error::Input("config is missing 'derivative.direction'".into()))?;
    let g = read_measure(dir)?;
    let gateaux = ctx.gateaux_fd_check(&g, &cfg.derivative.ts)?;
    let hadamard = match cfg.derivative.drift.as_deref() {
        Some(p) => Some(ctx.hadamard_fd_check(&g, &read_measure(p)?, &cfg.derivative.ts)?),
        None => None,
    };
    let rows: Vec<Vec<f64>> = gateaux
        .ts
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut row = vec![*t, gateaux.errors[i]];
            if let Some(h) = &hadamard {
                row.push(h.errors[i]);
            }
            row
        })
        .collect();
    let mut header = vec!["t", "gateaux_error"];
    if hadamard.is_some() {
        header.push("hadamard_error");
    }
    out.csv("fd_check.csv", &header, &rows)?;
    out.json(
        "fd_check.json",
        "fd-check",
        cfg,
        &FdResult { gateaux, hadamard },
    )
}

#[derive(Serialize)]
struct CltSummary<'a> {
    generator: &'a str,
    grid: &'a [Point],
    plugin_sigma: &'a [Vec<f64>],
    risk_sigma: Option<f64>,
    risk_f0: f64,
    per_n: Vec<SampleSizeSummary<'a>>,
}

#[derive(Serialize)]
struct SampleSizeSummary<'a> {
    n: usize,
    replications: usize,
    failures: usize,
    mean_lambda: f64,
    mean: &'a [f64],
    covariance: &'a [Vec<f64>],
    normality: &'a [svm_clt::montecarlo::NormalityResult],
    coverage: &'a [Coverage],
    risk_mean: f64,
    risk_ks: f64,
}

pub fn mc_clt(cfg: &Config, out: &OutputDir) -> Result<()> {
    let e = &cfg.experiment;
    let exp = ExperimentConfig {
        measure: read_measure(cfg.measure_path()?)?,
        kernel: cfg.kernel()?,
        loss: cfg.loss()?.clone(),
        lambda0: cfg.experiment_lambda0()?,
        lambda_rule: e.lambda_rule,
        n_values: e.n_values.clone(),
        replications: e.replications,
        grid: e.grid.clone(),
        seed: cfg.seed,
        alpha: e.alpha,
        ci_z: e.ci_z,
        solver: cfg.solver.clone(),
    };
    let report = run_clt_experiment(&exp)?;
    let m = report.grid.len();
    out.csv(
        "plugin_covariance.csv",
        &matrix_header(m),
        &report.plugin.sigma_matrix,
    )?;
    out.csv(
        "grid.csv",
        &coordinate_header(exp.measure.dim()),
        &report.grid,
    )?;
    for s in &report.per_n {
        out.csv(
            &format!("deviations_n{}.csv", s.n),
            &matrix_header(m),
            &s.deviations,
        )?;
        out.csv(
            &format!("covariance_n{}.csv", s.n),
            &matrix_header(m),
            &s.covariance,
        )?;
        let risk: Vec<Vec<f64>> = s.risk_deviations.iter().map(|v| vec![*v]).collect();
        out.csv(
            &format!("risk_deviations_n{}.csv", s.n),
            &["risk_deviation"],
            &risk,
        )?;
    }
    let summary = CltSummary {
        generator: &report.generator,
        grid: &report.grid,
        plugin_sigma: &report.plugin.sigma_matrix,
        risk_sigma: report.plugin.risk_sigma,
        risk_f0: report.risk_f0,
        per_n: report
            .per_n
            .iter()
            .map(|s| SampleSizeSummary {
                n: s.n,
                replications: s.replications,
                failures: s.failures,
                mean_lambda: s.mean_lambda,
                mean: &s.mean,
                covariance: &s.covariance,
                normality: &s.normality,
                coverage: &s.coverage,
                risk_mean: s.risk_mean,
                risk_ks: s.risk_ks,
            })
            .collect(),
    };
    out.json("mc_clt.json", "mc-clt", cfg, &summary)
}

#[derive(Serialize)]
struct MollifyResult {
    name: String,
    half_width: f64,
    second_derivative_bound: f64,
    max_abs_gap: f64,
}

fn table<L: LipschitzLoss + Clone>(
    base: L,
    cfg: &Config,
    out: &OutputDir,
) -> Result<MollifyResult> {
    let s = &cfg.mollify;
    if s.points < 2 || !(s.t_max > s.t_min) {
        return Err(Error::Input(
            "mollify table needs points >= 2 and t_max > t_min".into(),
        ));
    }
    let smooth = mollify(base.clone(), s.eps, s.nodes)?;
    let mut rows = Vec::with_capacity(s.points);
    let mut gap = 0.0f64;
    for i in 0..s.points {
        let t = s.t_min + (s.t_max - s.t_min) * i as f64 / (s.points - 1) as f64;
        let l = base.value(&[], s.y, t);
        let (v, d1, d2) = smooth.value_and_derivatives(&[], s.y, t);
        gap = gap.max((v - l).abs());
        rows.push(vec![t, l, v, d1, d2]);
    }
    out.csv(
        "mollify_table.csv",
        &["t", "L", "L_eps", "L_eps_d1", "L_eps_d2"],
        &rows,
    )?;
    Ok(MollifyResult {
        name: smooth.name(),
        half_width: smooth.half_width(),
        second_derivative_bound: smooth.second_derivative_bound(),
        max_abs_gap: gap,
    })
}

pub fn mollify_table(cfg: &Config, out: &OutputDir) -> Result<()> {
    let result = match cfg.mollify.base {
        BaseLoss::Hinge => table(Hinge, cfg, out)?,
        BaseLoss::EpsInsensitive => table(EpsInsensitive::new(cfg.mollify.eps_ins)?, cfg, out)?,
    };
    out.json("mollify_table.json", "mollify-table", cfg, &result)
}
