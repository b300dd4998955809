//! Theorem-level verification pipelines: solve a problem, extract the
//! level-set geometry, and assemble the reports that certify (or refute)
//! star-shapedness of the superlevel sets, including the Green-function and
//! uniform-starshapedness variants.

use crate::conditions::{
    check_condition, check_schrodinger_q, Condition, ConditionReport, SamplePlan,
};
use crate::data::DataFn;
use crate::geometry::{
    default_levels, ray_monotonicity, superlevel_starshaped, uniform_star_margin, GridSpec,
    RayMonoConfig, RingDomain, ScalarField, StarDomain, StarKind, StarReport,
};
use crate::kernels::{interval_green, FracParams};
use crate::point::Point;
use crate::solver::{
    assemble, residual, solve_linear_with, solve_nonlinear_picard_with, DiscreteOperator,
    NodeClass, ProblemData, ProblemSpec, SolveOptions, SolverError,
};
use crate::wos::{estimate_solution, McEstimate, WalkConfig, WalkError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("hypothesis check failed: {0:?}")]
    HypothesisFailed(Box<ConditionReport>),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error("Green-function checks require a convex domain (a ball); got {0}")]
    NonConvexDomain(String),
    #[error("gradient margin undefined: {0}")]
    GradientUndefined(String),
    #[error("{0}")]
    BadCase(String),
}

/// Which statement a case exercises.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremKind {
    /// Two-valued data, monotone nonlinearity: starshaped superlevel sets.
    MainI,
    /// Strictly starshaped bodies, no monotonicity: strict single crossings.
    MainII,
    /// Whole-space outer body.
    MainIii,
    /// Non-constant exterior/inner data with starshaped superlevel sets.
    GeneralizedData,
    /// Green column of a convex body.
    GreenFunction,
    /// Uniformly starshaped bodies, harmonic case: boundary-normal margin.
    Uniform,
}

/// Sampling and tolerance controls for one verification case.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub levels: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub n_rays: usize,
    pub points_per_ray: usize,
    /// Geometric tolerance for ray/level verdicts.
    pub tol_geom: f64,
    /// Monte Carlo spot checks at this many interior points (harmonic cases
    /// only).
    pub mc_spot_checks: usize,
    pub walk: WalkConfig,
    pub picard_max_iter: usize,
    pub picard_tol: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            levels: Vec::new(),
            t_grid: vec![1.01, 1.05, 1.1, 1.25, 1.5, 2.0, 4.0],
            n_rays: 64,
            points_per_ray: 200,
            tol_geom: 0.01,
            mc_spot_checks: 0,
            walk: WalkConfig::default(),
            picard_max_iter: 200,
            picard_tol: 1e-8,
        }
    }
}

/// One theorem-verification case.
#[derive(Clone, Debug)]
pub struct TheoremCase {
    pub kind: TheoremKind,
    pub problem: ProblemSpec,
    pub grid: GridSpec,
    pub analysis: AnalysisConfig,
}

/// Agreement record between a Monte Carlo spot estimate and the lattice
/// field.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McSpotCheck {
    pub point: Point,
    pub grid_value: f64,
    pub estimate: McEstimate,
    pub difference: f64,
}

/// Minimum of the difference field `u - u(t .)` over the shrunken ring, per
/// `t`; the quantity the maximum principle controls.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UtMinimum {
    pub t: f64,
    pub min_value: f64,
    pub n_nodes: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveSummary {
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_interior: usize,
}

/// Everything a verification run produces.
#[derive(Clone, Debug)]
pub struct AnalysisOutcome {
    pub star: StarReport,
    pub solve: SolveSummary,
    pub condition_reports: Vec<ConditionReport>,
    pub ut_minima: Vec<UtMinimum>,
    pub mc_checks: Vec<McSpotCheck>,
    pub field: ScalarField,
}

fn hypothesis_conditions(kind: TheoremKind) -> &'static [Condition] {
    match kind {
        TheoremKind::MainI | TheoremKind::MainIii | TheoremKind::GeneralizedData => {
            &[Condition::F1, Condition::F2, Condition::F3]
        }
        TheoremKind::MainII => &[Condition::F1, Condition::F2],
        TheoremKind::GreenFunction | TheoremKind::Uniform => &[],
    }
}

fn check_starshaped_data(b: &DataFn, label: &str) -> Result<(), AnalysisError> {
    // sampled ray monotonicity of the data function itself
    let mut worst = 0.0f64;
    let mut witness = None;
    for j in 0..64 {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / 64.0;
        let dir = Point::new(theta.cos(), theta.sin());
        for k in 1..=100 {
            let r = 3.0 * k as f64 / 100.0;
            let x = dir * r;
            for &t in &[1.1, 1.5, 2.0] {
                let d = b.eval(x) - b.eval(x * t);
                if d < worst {
                    worst = d;
                    witness = Some((x, t));
                }
            }
        }
    }
    if worst < -1e-9 {
        let mut rep = ConditionReport {
            condition: format!("starshaped superlevel sets of {label}"),
            pass: false,
            margin: worst,
            witness: None,
            samples_used: 64 * 100 * 3,
            notes: vec![format!("violation at {witness:?}")],
        };
        rep.notes.push("data function must not increase outward".into());
        return Err(AnalysisError::HypothesisFailed(Box::new(rep)));
    }
    Ok(())
}

/// Runs the full pipeline for a case: hypothesis checks, solve, ray and
/// level verdicts, per-`t` minima of the difference field, and optional
/// Monte Carlo spot checks.
pub fn analyze_solution(case: &TheoremCase) -> Result<AnalysisOutcome, AnalysisError> {
    let ring = &case.problem.ring;
    let params = &case.problem.params;
    let cfg = &case.analysis;
    let mut condition_reports = Vec::new();

    // hypothesis gate
    match &case.problem.data {
        ProblemData::Nonlinear { f, b0, b1 } => {
            let plan = SamplePlan::default();
            for &which in hypothesis_conditions(case.kind) {
                let rep = check_condition(f, ring, params, which, &plan);
                if !rep.pass {
                    return Err(AnalysisError::HypothesisFailed(Box::new(rep)));
                }
                condition_reports.push(rep);
            }
            if case.kind == TheoremKind::GeneralizedData {
                check_starshaped_data(b0, "b0")?;
                check_starshaped_data(b1, "b1")?;
            }
        }
        ProblemData::Linear { q, .. } => {
            // the linear route covers the Schroedinger corollary: q here is
            // the nonpositive potential, whose negation must be radially
            // nondecreasing
            let plan = SamplePlan::default();
            let q = q.clone();
            let minus_q = DataFn::custom(move |p| -q.eval(p), 0.0);
            let rep = check_schrodinger_q(&minus_q, ring, params, &plan);
            if !rep.pass {
                return Err(AnalysisError::HypothesisFailed(Box::new(rep)));
            }
            condition_reports.push(rep);
        }
    }
    if case.kind == TheoremKind::Uniform {
        for (d, label) in [(&ring.outer, "outer"), (&ring.inner, "inner")] {
            if let Some(d) = d {
                let margin = uniform_star_margin(d, 512)
                    .map_err(|e| AnalysisError::BadCase(e.to_string()))?;
                if margin <= 0.0 {
                    return Err(AnalysisError::BadCase(format!(
                        "{label} body is not uniformly starshaped (margin {margin})"
                    )));
                }
            }
        }
    }

    // solve
    let op = assemble(ring, params, &case.grid)?;
    let opts = SolveOptions::default();
    let outcome = match &case.problem.data {
        ProblemData::Nonlinear { f, b0, b1 } => solve_nonlinear_picard_with(
            &op,
            f,
            b0,
            b1,
            cfg.picard_max_iter,
            cfg.picard_tol,
            &opts,
        )?,
        ProblemData::Linear { q, g, h } => solve_linear_with(&op, q, g, h, &opts)?,
    };
    let field = outcome.field.clone();

    // geometry
    let levels = if cfg.levels.is_empty() {
        default_levels(0.0, 1.0)
    } else {
        cfg.levels.clone()
    };
    let ray_cfg = RayMonoConfig {
        n_rays: cfg.n_rays,
        points_per_ray: cfg.points_per_ray,
        t_grid: cfg.t_grid.clone(),
        tol: cfg.tol_geom,
        levels: levels.clone(),
        check_strict: case.kind == TheoremKind::MainII,
    };
    let mut star = ray_monotonicity(&field, Point::ZERO, &ray_cfg);
    // second route per level: sampled containment of the superlevel sets
    for lv in &mut star.levels {
        let (set_pass, set_worst, witness) =
            superlevel_starshaped(&field, Point::ZERO, lv.level, cfg.tol_geom);
        if !set_pass && set_worst < lv.worst_violation {
            lv.pass = false;
            lv.worst_violation = set_worst;
            lv.witness = witness;
        }
    }

    // minima of u - u(t .) over (t^{-1} outer) minus the inner closure
    let mut ut_minima = Vec::new();
    for &t in &cfg.t_grid {
        if t <= 1.0 {
            continue;
        }
        let mut min_value = f64::INFINITY;
        let mut n_nodes = 0usize;
        for j in 0..field.grid.ny {
            for i in 0..field.grid.nx {
                let p = field.grid.node(i, j);
                let in_shrunk_outer = match &ring.outer {
                    Some(o) => o.contains(p * t),
                    None => true,
                };
                let outside_inner = ring
                    .inner
                    .as_ref()
                    .map(|d| !d.contains_closure(p))
                    .unwrap_or(true);
                if in_shrunk_outer && outside_inner {
                    n_nodes += 1;
                    min_value = min_value.min(field.eval(p) - field.eval(p * t));
                }
            }
        }
        if n_nodes > 0 {
            ut_minima.push(UtMinimum {
                t,
                min_value,
                n_nodes,
            });
        }
    }

    // Monte Carlo spot checks (harmonic two-valued problems only)
    let mut mc_checks = Vec::new();
    if cfg.mc_spot_checks > 0 {
        if let Some((b0, b1)) = harmonic_data(&case.problem.data) {
            let points = interior_probe_points(&op, cfg.mc_spot_checks);
            for point in points {
                let est = estimate_solution(point, ring, &b0, &b1, None, params, &cfg.walk)?;
                let grid_value = field.eval(point);
                mc_checks.push(McSpotCheck {
                    point,
                    grid_value,
                    difference: (grid_value - est.mean).abs(),
                    estimate: est,
                });
            }
        }
    }

    Ok(AnalysisOutcome {
        star,
        solve: SolveSummary {
            residual: outcome.residual,
            iterations: outcome.iterations,
            converged: outcome.converged,
            n_interior: op.n_interior(),
        },
        condition_reports,
        ut_minima,
        mc_checks,
        field,
    })
}

fn harmonic_data(data: &ProblemData) -> Option<(DataFn, DataFn)> {
    match data {
        ProblemData::Nonlinear { f, b0, b1 } => {
            // zero nonlinearity only: the walk scores exterior data directly
            if f.label == "zero" {
                Some((b0.clone(), b1.clone()))
            } else {
                None
            }
        }
        ProblemData::Linear { .. } => None,
    }
}

/// A few interior nodes spread across the ring, biased away from boundaries.
pub fn interior_probe_points(op: &DiscreteOperator, count: usize) -> Vec<Point> {
    let mut candidates: Vec<(f64, Point)> = Vec::new();
    let grid = &op.grid;
    for &b in op.interior_nodes() {
        let p = grid.node(b % grid.nx, b / grid.nx);
        candidates.push((p.theta(), p));
    }
    // pick by angle strata so points spread around the ring
    let mut out = Vec::new();
    if candidates.is_empty() || count == 0 {
        return out;
    }
    candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for k in 0..count {
        let idx = (k * candidates.len()) / count + candidates.len() / (2 * count).max(1);
        out.push(candidates[idx.min(candidates.len() - 1)].1);
    }
    out
}

/// Star-shapedness of the Green function with pole `y`, about `y`.
///
/// In one dimension the Green function is closed-form and the check is
/// solver-free. In two dimensions the discrete Green column solves
/// `op G = delta_y / h^2` with zero exterior data; the pole node and its
/// neighbors are excluded from the monotonicity scan.
pub fn green_star_check(
    y: Point,
    params: &FracParams,
    domain: &StarDomain,
    grid_h: f64,
    cfg: &AnalysisConfig,
) -> Result<StarReport, AnalysisError> {
    let (center, radius) = match domain.kind() {
        StarKind::Ball { center, radius } => (*center, *radius),
        StarKind::RadialGraph { .. } => {
            return Err(AnalysisError::NonConvexDomain("radial graph".into()))
        }
    };
    if params.dim() == 1 {
        if center.norm() != 0.0 || radius != 1.0 {
            return Err(AnalysisError::BadCase(
                "the 1D closed form covers the unit interval".into(),
            ));
        }
        // sample the closed form on a fine lattice, spacing grid_h
        let grid = GridSpec::centered(1, grid_h, 1.0);
        let field = ScalarField::from_fn(
            grid,
            |p| {
                if !(p.x > -1.0 && p.x < 1.0) {
                    0.0
                } else if (p.x - y.x).abs() < 1e-14 {
                    // finite surrogate at the pole for unbounded kernels
                    match interval_green(p.x, y.x, params) {
                        Ok(v) if v.is_finite() => v,
                        _ => interval_green(p.x + grid_h * 0.5, y.x, params).unwrap_or(0.0),
                    }
                } else {
                    interval_green(p.x, y.x, params).unwrap_or(0.0)
                }
            },
            DataFn::Zero,
        );
        let levels = {
            let finite_max = field
                .values
                .iter()
                .copied()
                .filter(|v| v.is_finite())
                .fold(0.0f64, f64::max);
            default_levels(0.0, finite_max)
        };
        let ray_cfg = RayMonoConfig {
            n_rays: 2,
            points_per_ray: cfg.points_per_ray,
            t_grid: cfg.t_grid.clone(),
            tol: cfg.tol_geom,
            levels,
            check_strict: false,
        };
        return Ok(ray_monotonicity(&field, y, &ray_cfg));
    }

    // 2D: discrete Green column on a hole-free domain
    let ring = RingDomain::new(Some(domain.clone()), None)
        .map_err(|e| AnalysisError::BadCase(e.to_string()))?;
    let grid = crate::solver::grid_for_ring(&ring, 2, grid_h)?;
    let op = assemble(&ring, params, &grid)?;
    // right-hand side: delta at the node nearest to y
    let mut best = (f64::INFINITY, Point::ZERO);
    for &b in op.interior_nodes() {
        let p = grid.node(b % grid.nx, b / grid.nx);
        let d = (p - y).norm();
        if d < best.0 {
            best = (d, p);
        }
    }
    let pole = best.1;
    let strength = 1.0 / (grid_h * grid_h);
    let g = DataFn::custom(
        move |p: Point| {
            if (p - pole).norm() < 1e-12 {
                strength
            } else {
                0.0
            }
        },
        0.0,
    );
    let out = solve_linear_with(&op, &DataFn::Zero, &g, &DataFn::Zero, &SolveOptions::default())?;
    let mut field = out.field;
    // excise the pole node and its neighbors: discrete delta pollution
    let pole_i = ((pole.x - grid.origin.x) / grid_h).round() as isize;
    let pole_j = ((pole.y - grid.origin.y) / grid_h).round() as isize;
    let mut cap = 0.0f64;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let far = (i as isize - pole_i).abs().max((j as isize - pole_j).abs()) > 1;
            if far {
                cap = cap.max(field.values[grid.idx(i, j)]);
            }
        }
    }
    for dj in -1isize..=1 {
        for di in -1isize..=1 {
            let i = (pole_i + di).clamp(0, grid.nx as isize - 1) as usize;
            let j = (pole_j + dj).clamp(0, grid.ny as isize - 1) as usize;
            let idx = grid.idx(i, j);
            field.values[idx] = field.values[idx].min(cap * 1.5);
        }
    }
    let levels = if cfg.levels.is_empty() {
        default_levels(0.0, cap)
    } else {
        cfg.levels.clone()
    };
    let ray_cfg = RayMonoConfig {
        n_rays: cfg.n_rays,
        points_per_ray: cfg.points_per_ray,
        t_grid: cfg.t_grid.clone(),
        tol: cfg.tol_geom,
        levels,
        check_strict: false,
    };
    Ok(ray_monotonicity(&field, pole, &ray_cfg))
}

/// Largest value of `<x, grad u> / |grad u|` over interior nodes at least
/// `3h` from both boundaries; the uniform-starshapedness statement predicts a
/// strictly negative bound.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradientMarginReport {
    pub margin: f64,
    pub n_used: usize,
    pub n_excluded_small_gradient: usize,
}

pub fn gradient_margin(
    field: &ScalarField,
    ring: &RingDomain,
) -> Result<GradientMarginReport, AnalysisError> {
    let grid = &field.grid;
    let h = grid.h;
    let collar = 3.0 * h;
    let mut margin = f64::NEG_INFINITY;
    let mut n_used = 0usize;
    let mut n_excluded = 0usize;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let p = grid.node(i, j);
            if !ring.contains_ring(p) || ring.distance_to_boundary(p) <= collar {
                continue;
            }
            let gx = (field.eval(p + Point::new(h, 0.0)) - field.eval(p - Point::new(h, 0.0)))
                / (2.0 * h);
            let gy = if grid.dim == 2 {
                (field.eval(p + Point::new(0.0, h)) - field.eval(p - Point::new(0.0, h)))
                    / (2.0 * h)
            } else {
                0.0
            };
            let grad = Point::new(gx, gy);
            let norm = grad.norm();
            if norm < 1e-10 {
                n_excluded += 1;
                continue;
            }
            n_used += 1;
            margin = margin.max(p.dot(grad) / norm);
        }
    }
    if n_used == 0 {
        return Err(AnalysisError::GradientUndefined(format!(
            "all {n_excluded} collar-excluded nodes had |grad u| below threshold"
        )));
    }
    Ok(GradientMarginReport {
        margin,
        n_used,
        n_excluded_small_gradient: n_excluded,
    })
}

/// Residual of the discrete equation for a field against a problem; exposed
/// for report writers.
pub fn field_residual(op: &DiscreteOperator, field: &ScalarField, data: &ProblemData) -> f64 {
    residual(op, field, data)
}

/// Fraction of box nodes carrying known data; a quick sanity figure for
/// reports.
pub fn known_fraction(op: &DiscreteOperator) -> f64 {
    let known = op
        .classes()
        .iter()
        .filter(|c| !matches!(c, NodeClass::Interior))
        .count();
    known as f64 / op.classes().len() as f64
}
