//! Subcommand pipelines: build the problem from the config, run the
//! requested stage, and write machine-readable artifacts.
//!
//! Reports are deterministic byte-for-byte for a fixed config and seed;
//! anything time-dependent goes to `run_meta.json` only.

use crate::config::{build_problem, BuiltProblem, RunConfig};
use fracstar::analysis::{
    analyze_solution, gradient_margin, green_star_check, interior_probe_points, AnalysisConfig,
    AnalysisError, TheoremCase, TheoremKind,
};
use fracstar::conditions::{
    check_condition, verify_remark_f5f6, Condition, ConditionReport,
};
use fracstar::geometry::StarDomain;
use fracstar::solver::{
    assemble, maximum_principle_check, solve_linear, solve_nonlinear_picard, ProblemData,
    SolveOutcome,
};
use fracstar::wos::estimate_solution;
use fracstar::Point;
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

/// Failure modes mapped to process exit codes.
#[derive(Debug)]
pub enum RunError {
    /// Exit code 2.
    Config(String),
    /// Exit code 3; the offending report is attached and written out.
    Hypothesis(Box<ConditionReport>),
    /// Exit code 4.
    Solver(String),
    /// Exit code 5.
    GeometricFailure(String),
    /// Exit code 1.
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Io(_) => 1,
            RunError::Config(_) => 2,
            RunError::Hypothesis(_) => 3,
            RunError::Solver(_) => 4,
            RunError::GeometricFailure(_) => 5,
        }
    }

    pub fn message(&self) -> String {
        match self {
            RunError::Config(m) => format!("config error: {m}"),
            RunError::Hypothesis(r) => format!(
                "hypothesis failure: condition {} (margin {})",
                r.condition, r.margin
            ),
            RunError::Solver(m) => format!("solver error: {m}"),
            RunError::GeometricFailure(m) => format!("geometric check failed: {m}"),
            RunError::Io(m) => format!("io error: {m}"),
        }
    }
}

impl From<AnalysisError> for RunError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::HypothesisFailed(rep) => RunError::Hypothesis(rep),
            AnalysisError::Solver(s) => RunError::Solver(s.to_string()),
            AnalysisError::Walk(w) => RunError::Solver(w.to_string()),
            other => RunError::Config(other.to_string()),
        }
    }
}

pub struct RunInputs {
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), RunError> {
    let mut body =
        serde_json::to_string_pretty(value).map_err(|e| RunError::Io(e.to_string()))?;
    body.push('\n');
    fs::write(dir.join(name), body).map_err(|e| RunError::Io(e.to_string()))
}

fn write_field_csv(
    dir: &Path,
    name: &str,
    field: &fracstar::geometry::ScalarField,
) -> Result<(), RunError> {
    let mut buf = Vec::new();
    field
        .write_csv(&mut buf)
        .map_err(|e| RunError::Io(e.to_string()))?;
    fs::write(dir.join(name), buf).map_err(|e| RunError::Io(e.to_string()))
}

#[derive(Serialize)]
struct RunMeta {
    command: String,
    config: String,
    seed: u64,
    timestamp_utc: String,
}

#[derive(Serialize)]
struct SolveReport {
    residual: f64,
    iterations: usize,
    converged: bool,
    n_interior: usize,
    h: f64,
    min_value: f64,
    max_value: f64,
    maximum_principle: Option<bool>,
}

#[derive(Serialize)]
struct McComparePoint {
    point: Point,
    grid_value: f64,
    mc_mean: f64,
    mc_stderr: f64,
    n_truncated: usize,
    difference: f64,
    tolerance: f64,
    pass: bool,
}

#[derive(Serialize)]
struct McCompareReport {
    n_samples: usize,
    base_seed: u64,
    tolerance_extra: f64,
    points: Vec<McComparePoint>,
    all_pass: bool,
}

#[derive(Serialize)]
struct ConditionsReport {
    label: String,
    allen_cahn_case_i: Option<bool>,
    allen_cahn_case_ii: Option<bool>,
    reports: Vec<ConditionReport>,
    all_pass: bool,
}

fn load_config(inputs: &RunInputs) -> Result<RunConfig, RunError> {
    let text = fs::read_to_string(&inputs.config_path)
        .map_err(|e| RunError::Config(format!("cannot read config: {e}")))?;
    toml::from_str(&text).map_err(|e| RunError::Config(e.to_string()))
}

fn theorem_kind(s: &str) -> Result<TheoremKind, RunError> {
    match s {
        "main_i" => Ok(TheoremKind::MainI),
        "main_ii" => Ok(TheoremKind::MainII),
        "main_iii" => Ok(TheoremKind::MainIii),
        "generalized_data" => Ok(TheoremKind::GeneralizedData),
        "green_function" => Ok(TheoremKind::GreenFunction),
        "uniform" => Ok(TheoremKind::Uniform),
        other => Err(RunError::Config(format!("unknown analysis case `{other}`"))),
    }
}

fn analysis_config(cfg: &RunConfig, inputs: &RunInputs, seed: u64) -> AnalysisConfig {
    let d = AnalysisConfig::default();
    let a = &cfg.analysis;
    let tol_default = 5.0 * cfg.grid.h + 0.01;
    AnalysisConfig {
        levels: a.levels.clone(),
        t_grid: a.t_grid.clone().unwrap_or(d.t_grid),
        n_rays: a.n_rays.unwrap_or(d.n_rays),
        points_per_ray: a.points_per_ray.unwrap_or(d.points_per_ray),
        tol_geom: inputs.tol.or(a.tol_geom).unwrap_or(tol_default),
        mc_spot_checks: a.mc_spot_checks.unwrap_or(0),
        walk: cfg.walk.build(seed),
        picard_max_iter: a.picard_max_iter.unwrap_or(d.picard_max_iter),
        picard_tol: a.picard_tol.unwrap_or(d.picard_tol),
    }
}

fn solve_problem(built: &BuiltProblem, analysis: &AnalysisConfig) -> Result<SolveOutcome, RunError> {
    let op = assemble(&built.spec.ring, &built.spec.params, &built.grid)
        .map_err(|e| RunError::Solver(e.to_string()))?;
    match &built.spec.data {
        ProblemData::Nonlinear { f, b0, b1 } => solve_nonlinear_picard(
            &op,
            f,
            b0,
            b1,
            analysis.picard_max_iter,
            analysis.picard_tol,
        )
        .map_err(|e| RunError::Solver(e.to_string())),
        ProblemData::Linear { q, g, h } => {
            solve_linear(&op, q, g, h).map_err(|e| RunError::Solver(e.to_string()))
        }
    }
}

pub fn run_solve(inputs: &RunInputs) -> Result<(), RunError> {
    let cfg = load_config(inputs)?;
    let seed = inputs.seed.or(cfg.seed).unwrap_or(0);
    let built = build_problem(&cfg).map_err(RunError::Config)?;
    let analysis = analysis_config(&cfg, inputs, seed);
    let op = assemble(&built.spec.ring, &built.spec.params, &built.grid)
        .map_err(|e| RunError::Solver(e.to_string()))?;
    let outcome = solve_problem(&built, &analysis)?;
    if !outcome.converged {
        return Err(RunError::Solver(format!(
            "solve did not converge (residual {})",
            outcome.residual
        )));
    }
    let mp = match &built.spec.data {
        ProblemData::Linear { h, .. } => Some(maximum_principle_check(&op, &outcome.field, h)),
        ProblemData::Nonlinear { .. } => None,
    };
    write_field_csv(&inputs.out_dir, "field.csv", &outcome.field)?;
    write_json(
        &inputs.out_dir,
        "solve_outcome.json",
        &SolveReport {
            residual: outcome.residual,
            iterations: outcome.iterations,
            converged: outcome.converged,
            n_interior: op.n_interior(),
            h: built.grid.h,
            min_value: outcome.field.min_value(),
            max_value: outcome.field.max_value(),
            maximum_principle: mp,
        },
    )?;
    Ok(())
}

pub fn run_analyze(inputs: &RunInputs) -> Result<(), RunError> {
    let cfg = load_config(inputs)?;
    let seed = inputs.seed.or(cfg.seed).unwrap_or(0);
    let built = build_problem(&cfg).map_err(RunError::Config)?;
    let kind = theorem_kind(cfg.analysis.case.as_deref().unwrap_or("main_i"))?;
    let analysis = analysis_config(&cfg, inputs, seed);
    let case = TheoremCase {
        kind,
        problem: built.spec.clone(),
        grid: built.grid.clone(),
        analysis: analysis.clone(),
    };
    let out = match analyze_solution(&case) {
        Ok(out) => out,
        Err(AnalysisError::HypothesisFailed(rep)) => {
            write_json(&inputs.out_dir, "condition_reports.json", &[&*rep])?;
            return Err(RunError::Hypothesis(rep));
        }
        Err(e) => return Err(e.into()),
    };
    write_field_csv(&inputs.out_dir, "field.csv", &out.field)?;
    write_json(&inputs.out_dir, "star_report.json", &out.star)?;
    write_json(&inputs.out_dir, "condition_reports.json", &out.condition_reports)?;
    write_json(&inputs.out_dir, "ut_minima.json", &out.ut_minima)?;
    write_json(&inputs.out_dir, "solve_summary.json", &out.solve)?;
    if !out.mc_checks.is_empty() {
        write_json(&inputs.out_dir, "mc_spot_checks.json", &out.mc_checks)?;
    }
    if kind == TheoremKind::Uniform {
        let gm = gradient_margin(&out.field, &built.spec.ring).map_err(RunError::from)?;
        write_json(&inputs.out_dir, "gradient_margin.json", &gm)?;
        if gm.margin >= 0.0 {
            return Err(RunError::GeometricFailure(format!(
                "boundary-normal margin {} is not negative",
                gm.margin
            )));
        }
    }
    if !out.star.all_pass() {
        return Err(RunError::GeometricFailure(format!(
            "worst ray violation {} (tol {}); see star_report.json",
            out.star.worst_ray_violation, analysis.tol_geom
        )));
    }
    let ut_bad = out
        .ut_minima
        .iter()
        .filter(|u| u.min_value < -analysis.tol_geom)
        .count();
    if ut_bad > 0 {
        return Err(RunError::GeometricFailure(format!(
            "{ut_bad} difference-field minima fell below -{}",
            analysis.tol_geom
        )));
    }
    Ok(())
}

pub fn run_green(inputs: &RunInputs) -> Result<(), RunError> {
    let cfg = load_config(inputs)?;
    let seed = inputs.seed.or(cfg.seed).unwrap_or(0);
    let green = cfg
        .green
        .as_ref()
        .ok_or_else(|| RunError::Config("missing [green] section".into()))?;
    let outer = cfg
        .problem
        .outer
        .clone()
        .ok_or_else(|| RunError::Config("green checks need an outer body".into()))?;
    let domain = StarDomain::from_kind(outer).map_err(|e| RunError::Config(e.to_string()))?;
    let params = fracstar::FracParams::new(cfg.problem.alpha, cfg.problem.dim)
        .map_err(|e| RunError::Config(e.to_string()))?;
    let mut analysis = analysis_config(&cfg, inputs, seed);
    if let Some(tol) = green.tol {
        analysis.tol_geom = inputs.tol.unwrap_or(tol);
    }
    if !green.levels.is_empty() {
        analysis.levels = green.levels.clone();
    }
    let y = Point::new(green.y[0], green.y[1]);
    let report =
        green_star_check(y, &params, &domain, cfg.grid.h, &analysis).map_err(RunError::from)?;
    write_json(&inputs.out_dir, "green_report.json", &report)?;
    if !report.all_pass() {
        return Err(RunError::GeometricFailure(format!(
            "Green column failed the star check (worst {})",
            report.worst_ray_violation
        )));
    }
    Ok(())
}

pub fn run_mc_compare(inputs: &RunInputs) -> Result<(), RunError> {
    let cfg = load_config(inputs)?;
    let seed = inputs.seed.or(cfg.seed).unwrap_or(0);
    let built = build_problem(&cfg).map_err(RunError::Config)?;
    let analysis = analysis_config(&cfg, inputs, seed);
    if analysis.walk.n_samples == 0 {
        return Err(RunError::Config("mc-compare needs n_samples >= 1".into()));
    }
    let (b0, b1) = match &built.spec.data {
        ProblemData::Nonlinear { f, b0, b1 } if f.label == "zero" => (b0.clone(), b1.clone()),
        _ => {
            return Err(RunError::Config(
                "mc-compare requires the harmonic problem (zero nonlinearity, zero potential)"
                    .into(),
            ))
        }
    };
    let op = assemble(&built.spec.ring, &built.spec.params, &built.grid)
        .map_err(|e| RunError::Solver(e.to_string()))?;
    let outcome = solve_problem(&built, &analysis)?;
    let section = cfg.mc_compare.as_ref();
    let extra = inputs
        .tol
        .or(section.and_then(|s| s.tolerance_extra))
        .unwrap_or(0.02);
    let points: Vec<Point> = match section {
        Some(s) if !s.points.is_empty() => {
            s.points.iter().map(|p| Point::new(p[0], p[1])).collect()
        }
        _ => interior_probe_points(&op, 5),
    };
    let mut rows = Vec::new();
    let mut all_pass = true;
    for point in points {
        let est = estimate_solution(
            point,
            &built.spec.ring,
            &b0,
            &b1,
            None,
            &built.spec.params,
            &analysis.walk,
        )
        .map_err(|e| RunError::Solver(e.to_string()))?;
        let grid_value = outcome.field.eval(point);
        let difference = (grid_value - est.mean).abs();
        let tolerance = 3.0 * est.stderr + extra;
        let pass = difference <= tolerance;
        all_pass &= pass;
        rows.push(McComparePoint {
            point,
            grid_value,
            mc_mean: est.mean,
            mc_stderr: est.stderr,
            n_truncated: est.n_truncated,
            difference,
            tolerance,
            pass,
        });
    }
    let report = McCompareReport {
        n_samples: analysis.walk.n_samples,
        base_seed: analysis.walk.base_seed,
        tolerance_extra: extra,
        points: rows,
        all_pass,
    };
    write_json(&inputs.out_dir, "mc_compare.json", &report)?;
    if !all_pass {
        return Err(RunError::GeometricFailure(
            "Monte Carlo and lattice solutions disagree; see mc_compare.json".into(),
        ));
    }
    Ok(())
}

pub fn run_conditions(inputs: &RunInputs) -> Result<(), RunError> {
    let cfg = load_config(inputs)?;
    let built = build_problem(&cfg).map_err(RunError::Config)?;
    let section = cfg
        .conditions
        .as_ref()
        .ok_or_else(|| RunError::Config("missing [conditions] section".into()))?;
    let (spec, flags) = section.f.build().map_err(RunError::Config)?;
    let plan = section.plan();
    let params = built.spec.params;
    let ring = &built.spec.ring;

    if let Some(case) = &section.require_case {
        let flags = flags.ok_or_else(|| {
            RunError::Config("require_case applies to bistable nonlinearities only".into())
        })?;
        let ok = match case.as_str() {
            "i" => flags.case_i,
            "ii" => flags.case_ii,
            other => {
                return Err(RunError::Config(format!(
                    "require_case must be \"i\" or \"ii\", got {other}"
                )))
            }
        };
        if !ok {
            let rep = ConditionReport {
                condition: format!("allen_cahn case {case}"),
                pass: false,
                margin: -1.0,
                witness: None,
                samples_used: 0,
                notes: vec![format!("parameter inequality for case {case} fails")],
            };
            write_json(&inputs.out_dir, "condition_reports.json", &[&rep])?;
            return Err(RunError::Hypothesis(Box::new(rep)));
        }
    }

    let mut reports = Vec::new();
    let which = if section.which.is_empty() {
        vec![
            "F1".to_string(),
            "F2".to_string(),
            "F3".to_string(),
            "F4".to_string(),
        ]
    } else {
        section.which.clone()
    };
    for name in &which {
        let rep = match name.as_str() {
            "F1" => check_condition(&spec, ring, &params, Condition::F1, &plan),
            "F2" => check_condition(&spec, ring, &params, Condition::F2, &plan),
            "F3" => check_condition(&spec, ring, &params, Condition::F3, &plan),
            "F4" => check_condition(&spec, ring, &params, Condition::F4, &plan),
            "F5" => check_condition(&spec, ring, &params, Condition::F5, &plan),
            "F6" => check_condition(&spec, ring, &params, Condition::F6, &plan),
            "remark_f5f6" => verify_remark_f5f6(&spec, ring, &params, &plan),
            other => {
                return Err(RunError::Config(format!("unknown condition `{other}`")));
            }
        };
        reports.push(rep);
    }
    let all_pass = reports.iter().all(|r| r.pass);
    let report = ConditionsReport {
        label: spec.label.clone(),
        allen_cahn_case_i: flags.map(|f| f.case_i),
        allen_cahn_case_ii: flags.map(|f| f.case_ii),
        reports,
        all_pass,
    };
    write_json(&inputs.out_dir, "condition_reports.json", &report)?;
    if !all_pass {
        let failing = report
            .reports
            .into_iter()
            .find(|r| !r.pass)
            .expect("some report failed");
        return Err(RunError::Hypothesis(Box::new(failing)));
    }
    Ok(())
}

pub fn write_meta(inputs: &RunInputs, command: &str) -> Result<(), RunError> {
    let seed = inputs.seed.unwrap_or(0);
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs().to_string())
        .unwrap_or_else(|_| "unknown".into());
    write_json(
        &inputs.out_dir,
        "run_meta.json",
        &RunMeta {
            command: command.to_string(),
            config: inputs.config_path.display().to_string(),
            seed,
            timestamp_utc: now,
        },
    )
}
