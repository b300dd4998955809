//! Structured verdicts for the star-shapedness checks.

use crate::point::Point;
use serde::{Deserialize, Serialize};

/// Worst offender of the ray inequality `u(t x) <= u(x)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RayWitness {
    pub x: Point,
    pub t: f64,
    pub u_x: f64,
    pub u_tx: f64,
}

/// Per-level verdict for the superlevel set `{u >= level}` along the sampled
/// rays.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelVerdict {
    pub level: f64,
    pub pass: bool,
    /// Most negative value of `u - level` found inboard of a point of the
    /// superlevel set (0 when the set is ray-convex on the samples).
    pub worst_violation: f64,
    pub witness: Option<Point>,
    /// Whether every sampled ray crosses the level exactly once.
    pub single_crossing: bool,
}

/// Spurious re-entries above a level after the first down-crossing.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrictReport {
    pub pass: bool,
    /// Largest `u - level` found beyond the first down-crossing; negative or
    /// tiny when strict star-shapedness holds.
    pub worst_reentry: f64,
    pub witness: Option<Point>,
}

/// Verdicts for one field: ray monotonicity, per-level star-shapedness,
/// strictness, and an optional boundary-normal margin.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StarReport {
    pub center: Point,
    pub n_rays: usize,
    pub points_per_ray: usize,
    pub t_grid: Vec<f64>,
    pub tol: f64,
    /// Minimum over samples of `u(x) - u(t x)`; the field passes when this is
    /// at least `-tol`.
    pub worst_ray_violation: f64,
    pub ray_witness: Option<RayWitness>,
    pub pass: bool,
    pub levels: Vec<LevelVerdict>,
    pub strict: Option<StrictReport>,
    /// `min <x, nu(x)>` over sampled level-crossing points, when computed.
    pub uniform_margin: Option<f64>,
}

impl StarReport {
    /// Overall verdict: rays pass and every requested level passes.
    pub fn all_pass(&self) -> bool {
        self.pass && self.levels.iter().all(|l| l.pass)
    }
}
