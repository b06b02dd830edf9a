//! Workflow dispatch and report emission.
//!
//! A run writes `report.json` (deterministic for a fixed config), `meta.json`
//! (timestamps and timings), `*.field` snapshots and `*.csv` traces into the
//! output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nehari4_core::bubble::{existence_condition, expansion_study, threshold_gap_report};
use nehari4_core::nehari::{maximum_principle_split, Thresholds};
use nehari4_core::solvers::{
    bubble_seed, initial_guess, local_minimum_audit, minimize_on_nehari, minimize_signed, mountain_pass,
    signed_initial_guess, verify_palais_smale_level, SolveReport,
};
use nehari4_core::spectral::{read_snapshot, write_snapshot};
use nehari4_core::{Field, GridSpec, Problem, Sign};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::acceptance;
use crate::config::{FSpec, InitialGuess, LambdaSpec, RunConfig, Subcommand};
use crate::error::CliError;

pub const REPORT_FILE: &str = "report.json";
pub const META_FILE: &str = "meta.json";

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    /// `complete`, `failed` (all outputs written, a check or convergence
    /// failed) or `incomplete` (aborted; later outputs missing).
    pub status: &'static str,
    pub exit_code: i32,
    pub error: Option<String>,
    pub config: RunConfig,
    pub results: Map<String, Value>,
    pub files: Vec<String>,
}

pub struct RunOutcome {
    pub exit_code: i32,
    pub report: Report,
    pub dir: PathBuf,
}

/// Collects output files and report sections for one run.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
    results: Map<String, Value>,
    timings: Map<String, Value>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            results: Map::new(),
            timings: Map::new(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn section<T: Serialize>(&mut self, key: &str, value: &T) -> Result<(), CliError> {
        let v = serde_json::to_value(value).map_err(|e| CliError::Config(format!("serialising {key}: {e}")))?;
        self.results.insert(key.to_string(), v);
        Ok(())
    }

    pub fn timing(&mut self, key: &str, seconds: f64) {
        self.timings.insert(key.to_string(), Value::from(seconds));
    }

    fn record(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    pub fn snapshot(&mut self, name: &str, field: &Field) -> Result<(), CliError> {
        write_snapshot(field, &self.dir.join(name))?;
        self.record(name);
        self.record(&format!("{name}.hdr"));
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
        let mut text = String::new();
        text.push_str(header);
        text.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(text, "{}", cells.join(","));
        }
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.record(name);
        Ok(())
    }
}

/// Run `cfg`, writing into `out`. Never panics on workflow errors; the exit
/// code and the report carry them.
pub fn execute(cfg: &RunConfig, out: &Path) -> Result<RunOutcome, CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let started = SystemTime::now();
    let clock = Instant::now();
    let mut outputs = Outputs::new(out);
    let result = dispatch(cfg, &mut outputs);
    let (status, exit_code, error) = match &result {
        Ok(()) => ("complete", 0, None),
        Err(e @ (CliError::Convergence(_) | CliError::Acceptance(_))) => ("failed", e.exit_code(), Some(e.to_string())),
        Err(e) => ("incomplete", e.exit_code(), Some(e.to_string())),
    };
    let mut files = outputs.files.clone();
    files.push(REPORT_FILE.to_string());
    files.push(META_FILE.to_string());
    files.sort();
    let report = Report {
        tool: "nehari4",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cfg.subcommand.name(),
        status,
        exit_code,
        error,
        config: cfg.clone(),
        results: outputs.results.clone(),
        files,
    };
    write_json(&out.join(REPORT_FILE), &report)?;

    let unix = |t: SystemTime| t.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let meta = serde_json::json!({
        "started_unix": unix(started),
        "finished_unix": unix(SystemTime::now()),
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
        "version": env!("CARGO_PKG_VERSION"),
        "exit_code": exit_code,
        "timings": outputs.timings,
    });
    write_json(&out.join(META_FILE), &meta)?;
    Ok(RunOutcome {
        exit_code,
        report,
        dir: out.to_path_buf(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn dispatch(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    match cfg.subcommand {
        Subcommand::Thresholds => thresholds(cfg, out),
        Subcommand::Bubble => bubble(cfg, out),
        Subcommand::Solve => solve(cfg, None, out),
        Subcommand::SolveSigned => solve(cfg, Some(cfg.sign), out),
        Subcommand::Mpass => mpass(cfg, out),
        Subcommand::VerifyAll => verify_all(out),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProblemSummary {
    pub grid: GridSpec,
    pub nodes: usize,
    pub volume: f64,
    pub critical_exponent: f64,
    pub coefficients: &'static str,
    pub max_f: f64,
    pub q: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaResolution {
    pub requested: LambdaSpec,
    pub value: f64,
    /// `min(λ₀, λ₁)`.
    pub window: f64,
    pub inside_window: bool,
}

fn f_field(cfg: &RunConfig, grid: GridSpec) -> Result<Field, CliError> {
    Ok(match &cfg.f {
        FSpec::Constant(c) => Field::constant(grid, *c),
        FSpec::Cosine(series) => {
            let w = std::f64::consts::TAU / grid.length();
            Field::from_fn(grid, |x| {
                series.mean
                    + series
                        .terms
                        .iter()
                        .map(|t| {
                            let phase: f64 = t.k.iter().zip(x).map(|(k, xi)| *k as f64 * xi).sum();
                            t.amplitude * (w * phase).cos()
                        })
                        .sum::<f64>()
            })?
        }
    })
}

/// The problem at the resolved `λ`, its thresholds, and how `λ` was chosen.
pub fn build_problem(cfg: &RunConfig) -> Result<(Problem, Thresholds, LambdaResolution), CliError> {
    let grid = cfg.grid()?;
    let f = f_field(cfg, grid)?;
    let base = match &cfg.coefficients {
        None => Problem::constant(grid, cfg.alpha, cfg.beta, f, 0.0, cfg.q)?,
        Some(files) => {
            let a = read_snapshot(&files.a)?;
            let b = read_snapshot(&files.b)?;
            grid.check_same(a.grid())?;
            grid.check_same(b.grid())?;
            Problem::variable(grid, a, b, f, 0.0, cfg.q)?
        }
    };
    let th = Thresholds::compute(&base, &cfg.thresholds)?;
    let value = match cfg.lambda {
        LambdaSpec::Auto => th.auto_lambda(),
        LambdaSpec::Value(v) => v,
    };
    let problem = base.with_lambda(value)?;
    let window = th.lambda_window();
    Ok((
        problem,
        th,
        LambdaResolution {
            requested: cfg.lambda,
            value,
            window,
            inside_window: value > 0.0 && value < window,
        },
    ))
}

fn summarize(cfg: &RunConfig, p: &Problem) -> ProblemSummary {
    let g = *p.grid();
    ProblemSummary {
        grid: g,
        nodes: g.node_count(),
        volume: g.volume(),
        critical_exponent: p.critical_exponent(),
        coefficients: if cfg.coefficients.is_some() { "variable" } else { "constant" },
        max_f: p.max_f(),
        q: p.q(),
        lambda: p.lambda(),
    }
}

fn common_sections(cfg: &RunConfig, out: &mut Outputs) -> Result<(Problem, Thresholds), CliError> {
    let (problem, th, lambda) = build_problem(cfg)?;
    out.section("problem", &summarize(cfg, &problem))?;
    out.section("thresholds", &th)?;
    out.section("lambda", &lambda)?;
    Ok((problem, th))
}

fn thresholds(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let _ = common_sections(cfg, out)?;
    if cfg.coefficients.is_none() {
        let split = match maximum_principle_split(cfg.alpha, cfg.beta) {
            Ok((x1, x2)) => serde_json::json!({ "x1": x1, "x2": x2 }),
            Err(e) => serde_json::json!({ "unavailable": e.to_string() }),
        };
        out.section("maximum_principle_split", &split)?;
    }
    Ok(())
}

fn bubble(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let b = &cfg.bubble;
    let params = b.params(cfg.n);
    let study = expansion_study(&params, &b.sweep)?;
    out.section("expansion", &study)?;
    if cfg.n >= 6 {
        let cond = existence_condition(cfg.n, b.scalar_curvature, b.a0, b.f0, b.laplacian_f0)?;
        out.section("existence_condition", &cond)?;
    }
    let gap = threshold_gap_report(&params, study.k0, b.gap_lambda, cfg.q, &b.sweep)?;
    out.csv(
        "bubble_sweep.csv",
        "eps,massN,gradSq,bilapSq,bTerm,quadratic_form,lq_term,bound,energy_with_lambda,gap",
        gap.rows.iter().map(|r| {
            vec![
                r.eps,
                r.integrals.mass_n,
                r.integrals.grad_sq,
                r.integrals.bilap_sq,
                r.integrals.b_term,
                r.integrals.quadratic_form(),
                r.lq_term,
                r.bound,
                r.energy_with_lambda,
                r.gap,
            ]
        }),
    )?;
    out.section("threshold_gap", &gap)?;
    Ok(())
}

fn initial_field(cfg: &RunConfig, grid: GridSpec, sign: Option<Sign>, seed: u64) -> Result<Field, CliError> {
    let s = if sign == Some(Sign::Minus) { -1.0 } else { 1.0 };
    Ok(match &cfg.initial {
        InitialGuess::Noise => match sign {
            None => initial_guess(grid, seed),
            Some(sg) => signed_initial_guess(grid, seed, sg),
        },
        InitialGuess::Bubble(b) => {
            let origin = vec![0.0; grid.dim()];
            bubble_seed(grid, b.eps, b.center.as_deref().unwrap_or(&origin))?.scaled(s)
        }
        InitialGuess::Snapshot(path) => {
            let u = read_snapshot(path)?;
            grid.check_same(u.grid())?;
            u
        }
    })
}

fn trace_rows(r: &SolveReport) -> Vec<Vec<f64>> {
    r.energy_trace
        .iter()
        .zip(&r.residual_trace)
        .enumerate()
        .map(|(i, (e, res))| vec![i as f64, *e, *res])
        .collect()
}

fn solve(cfg: &RunConfig, sign: Option<Sign>, out: &mut Outputs) -> Result<(), CliError> {
    let (problem, th) = common_sections(cfg, out)?;
    let u0 = initial_field(cfg, *problem.grid(), sign, cfg.seed)?;
    let clock = Instant::now();
    let r = match sign {
        None => minimize_on_nehari(&problem, &u0, &cfg.solver)?,
        Some(s) => minimize_signed(&problem, s, &u0, &cfg.solver)?,
    };
    out.timing("solve", clock.elapsed().as_secs_f64());
    out.section("solve", &r)?;
    out.section("level_check", &verify_palais_smale_level(r.energy.energy, &th))?;
    out.snapshot("solution.field", &r.u)?;
    out.csv("trace.csv", "iter,energy,residual_rel", trace_rows(&r))?;
    if !r.converged {
        return Err(CliError::Convergence(format!(
            "solver stopped at residual {:e} after {} iterations",
            r.residual_rel, r.iters
        )));
    }
    Ok(())
}

/// Distances and level checks of the three critical points.
#[derive(Clone, Debug, Serialize)]
pub struct ThreeSolutionSummary {
    pub c_star: f64,
    pub energy_plus: f64,
    pub energy_minus: f64,
    pub energy_saddle: f64,
    pub c_lambda: f64,
    /// `‖w − u±‖₂ / ‖u±‖₂`.
    pub saddle_distance_plus: f64,
    pub saddle_distance_minus: f64,
    pub level_plus: nehari4_core::solvers::LevelCheck,
    pub level_minus: nehari4_core::solvers::LevelCheck,
    pub level_c_lambda: nehari4_core::solvers::LevelCheck,
    pub level_saddle: nehari4_core::solvers::LevelCheck,
    pub saddle_above_minimisers: bool,
}

fn mpass(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let (problem, th) = common_sections(cfg, out)?;
    let grid = *problem.grid();
    let clock = Instant::now();
    let plus = minimize_signed(&problem, Sign::Plus, &initial_field(cfg, grid, Some(Sign::Plus), cfg.seed)?, &cfg.solver)?;
    out.section("plus", &plus)?;
    out.snapshot("u_plus.field", &plus.u)?;
    out.csv("u_plus_trace.csv", "iter,energy,residual_rel", trace_rows(&plus))?;
    let minus_seed = cfg.seed.wrapping_add(1);
    let minus = minimize_signed(&problem, Sign::Minus, &initial_field(cfg, grid, Some(Sign::Minus), minus_seed)?, &cfg.solver)?;
    out.section("minus", &minus)?;
    out.snapshot("u_minus.field", &minus.u)?;
    out.csv("u_minus_trace.csv", "iter,energy,residual_rel", trace_rows(&minus))?;
    out.timing("signed_solves", clock.elapsed().as_secs_f64());

    let audit_plus = local_minimum_audit(&problem, &plus.u, cfg.audit_samples, cfg.audit_radius, cfg.seed.wrapping_add(2))?;
    let audit_minus = local_minimum_audit(&problem, &minus.u, cfg.audit_samples, cfg.audit_radius, cfg.seed.wrapping_add(3))?;
    out.section("local_minimum_audit", &serde_json::json!({ "plus": audit_plus, "minus": audit_minus }))?;
    if !(plus.converged && minus.converged) {
        return Err(CliError::Convergence("a signed minimisation did not converge".into()));
    }

    let clock = Instant::now();
    let path = mountain_pass(&problem, &plus.u, &minus.u, &cfg.solver, &cfg.path)?;
    out.timing("mountain_pass", clock.elapsed().as_secs_f64());
    out.section("mountain_pass", &path)?;
    out.snapshot("saddle.field", &path.saddle.u)?;
    out.csv(
        "c_lambda_trace.csv",
        "sweep,c_lambda",
        path.c_lambda_trace.iter().enumerate().map(|(i, c)| vec![(i + 1) as f64, *c]),
    )?;
    out.csv(
        "path_energies.csv",
        "node,energy",
        path.energies.iter().enumerate().map(|(i, e)| vec![i as f64, *e]),
    )?;
    out.csv(
        "climb_trace.csv",
        "iter,energy,residual_rel",
        path.climb_energy_trace
            .iter()
            .zip(&path.climb_residual_trace)
            .enumerate()
            .map(|(i, (e, r))| vec![i as f64, *e, *r]),
    )?;

    let w = &path.saddle.u;
    let summary = ThreeSolutionSummary {
        c_star: th.c_star,
        energy_plus: plus.energy.energy,
        energy_minus: minus.energy.energy,
        energy_saddle: path.saddle.energy.energy,
        c_lambda: path.c_lambda,
        saddle_distance_plus: w.sub(&plus.u)?.l2_norm() / plus.u.l2_norm(),
        saddle_distance_minus: w.sub(&minus.u)?.l2_norm() / minus.u.l2_norm(),
        level_plus: verify_palais_smale_level(plus.energy.energy, &th),
        level_minus: verify_palais_smale_level(minus.energy.energy, &th),
        level_c_lambda: verify_palais_smale_level(path.c_lambda, &th),
        level_saddle: verify_palais_smale_level(path.saddle.energy.energy, &th),
        saddle_above_minimisers: path.saddle.energy.energy > plus.energy.energy.max(minus.energy.energy),
    };
    out.section("three_solutions", &summary)?;
    if !path.saddle.converged {
        return Err(CliError::Convergence(format!(
            "saddle refinement stopped at residual {:e}",
            path.saddle.residual_rel
        )));
    }
    Ok(())
}

fn verify_all(out: &mut Outputs) -> Result<(), CliError> {
    let work = out.dir().join("acceptance");
    let results = acceptance::run_all(&work, |r| println!("{}", r.line()))?;
    for r in &results {
        out.timing(&format!("criterion_{}", r.id), r.seconds);
    }
    out.section("acceptance", &results)?;
    let failed: Vec<String> = results.iter().filter(|r| !r.passed).map(|r| r.id.to_string()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Acceptance(format!("criteria {} failed", failed.join(", "))))
    }
}
