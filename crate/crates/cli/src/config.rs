//! TOML configuration model and its translation into core types.

use fracstar::conditions::{make_allen_cahn, AllenCahnFlags, NonlinearitySpec, SamplePlan};
use fracstar::data::DataFn;
use fracstar::geometry::{GridSpec, RingDomain, StarDomain, StarKind};
use fracstar::solver::{grid_for_ring, ProblemData, ProblemSpec};
use fracstar::wos::WalkConfig;
use fracstar::{FracParams, Point};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub walk: WalkSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub green: Option<GreenSection>,
    #[serde(default)]
    pub mc_compare: Option<McCompareSection>,
    #[serde(default)]
    pub conditions: Option<ConditionsSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub alpha: f64,
    pub dim: u32,
    pub outer: Option<StarKind>,
    pub inner: Option<StarKind>,
    pub data: DataConfig,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Nonlinear {
        f: NonlinearityConfig,
        #[serde(default = "zero_fn")]
        b0: DataFn,
        #[serde(default = "one_fn")]
        b1: DataFn,
    },
    Linear {
        q: DataFn,
        g: DataFn,
        h: DataFn,
    },
}

fn zero_fn() -> DataFn {
    DataFn::Zero
}

fn one_fn() -> DataFn {
    DataFn::One
}

/// Nonlinearities nameable from a config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearityConfig {
    Zero,
    AllenCahn { beta: f64, gamma: f64, p: f64 },
    /// `f(x, u) = q(x) u`.
    Multiplicative { q: DataFn },
    ConstantOne,
    /// `f(x, u) = |x|^2 u`.
    RadialSquareTimesU,
    /// `f(x, u) = (c - |x|) u`, decreasing outward.
    OutwardDecreasingTimesU { c: f64 },
}

impl NonlinearityConfig {
    pub fn build(&self) -> Result<(NonlinearitySpec, Option<AllenCahnFlags>), String> {
        match self {
            NonlinearityConfig::Zero => Ok((NonlinearitySpec::zero(), None)),
            NonlinearityConfig::AllenCahn { beta, gamma, p } => {
                let (spec, flags) =
                    make_allen_cahn(*beta, *gamma, *p).map_err(|e| e.to_string())?;
                Ok((spec, Some(flags)))
            }
            NonlinearityConfig::Multiplicative { q } => {
                let q = q.clone();
                Ok((
                    NonlinearitySpec::new(
                        move |x: Point, u| q.eval(x) * u,
                        None,
                        "multiplicative",
                    ),
                    None,
                ))
            }
            NonlinearityConfig::ConstantOne => Ok((
                NonlinearitySpec::new(|_, _| 1.0, Some(0.0), "one"),
                None,
            )),
            NonlinearityConfig::RadialSquareTimesU => Ok((
                NonlinearitySpec::new(|x: Point, u| x.norm_sq() * u, None, "r2u"),
                None,
            )),
            NonlinearityConfig::OutwardDecreasingTimesU { c } => {
                let c = *c;
                Ok((
                    NonlinearitySpec::new(move |x: Point, u| (c - x.norm()) * u, None, "dec_u"),
                    None,
                ))
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub h: f64,
    pub half_extent: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkSection {
    pub step_fraction: Option<f64>,
    pub max_steps: Option<usize>,
    pub n_samples: Option<usize>,
    pub chunk_size: Option<usize>,
    pub escape_radius: Option<f64>,
}

impl WalkSection {
    pub fn build(&self, base_seed: u64) -> WalkConfig {
        let d = WalkConfig::default();
        WalkConfig {
            step_fraction: self.step_fraction.unwrap_or(d.step_fraction),
            max_steps: self.max_steps.unwrap_or(d.max_steps),
            n_samples: self.n_samples.unwrap_or(d.n_samples),
            base_seed,
            chunk_size: self.chunk_size.unwrap_or(d.chunk_size),
            escape_radius: self.escape_radius,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub case: Option<String>,
    #[serde(default)]
    pub levels: Vec<f64>,
    pub t_grid: Option<Vec<f64>>,
    pub n_rays: Option<usize>,
    pub points_per_ray: Option<usize>,
    /// Geometric tolerance; defaults to `5 h + 0.01`.
    pub tol_geom: Option<f64>,
    pub mc_spot_checks: Option<usize>,
    pub picard_max_iter: Option<usize>,
    pub picard_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenSection {
    pub y: [f64; 2],
    #[serde(default)]
    pub levels: Vec<f64>,
    pub tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McCompareSection {
    #[serde(default)]
    pub points: Vec<[f64; 2]>,
    /// Discretization allowance added to three standard errors.
    pub tolerance_extra: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionsSection {
    pub f: NonlinearityConfig,
    #[serde(default)]
    pub which: Vec<String>,
    /// For bistable nonlinearities: require case "i" or "ii" to hold.
    pub require_case: Option<String>,
    pub n_samples: Option<usize>,
}

impl ConditionsSection {
    pub fn plan(&self) -> SamplePlan {
        SamplePlan {
            n_samples: self.n_samples.unwrap_or(10_000),
            ..SamplePlan::default()
        }
    }
}

/// Core-side bundle built from a parsed config.
pub struct BuiltProblem {
    pub spec: ProblemSpec,
    pub grid: GridSpec,
}

pub fn build_problem(cfg: &RunConfig) -> Result<BuiltProblem, String> {
    let params = FracParams::new(cfg.problem.alpha, cfg.problem.dim).map_err(|e| e.to_string())?;
    if cfg.problem.dim > 2 {
        return Err("lattice problems support dim 1 or 2".into());
    }
    let outer = cfg
        .problem
        .outer
        .clone()
        .map(StarDomain::from_kind)
        .transpose()
        .map_err(|e| e.to_string())?;
    let inner = cfg
        .problem
        .inner
        .clone()
        .map(StarDomain::from_kind)
        .transpose()
        .map_err(|e| e.to_string())?;
    let ring = RingDomain::new(outer, inner).map_err(|e| e.to_string())?;

    let data = match &cfg.problem.data {
        DataConfig::Nonlinear { f, b0, b1 } => {
            let (spec, _) = f.build()?;
            ProblemData::Nonlinear {
                f: spec,
                b0: b0.clone(),
                b1: b1.clone(),
            }
        }
        DataConfig::Linear { q, g, h } => ProblemData::Linear {
            q: q.clone(),
            g: g.clone(),
            h: h.clone(),
        },
    };

    if !(cfg.grid.h > 0.0) {
        return Err("grid spacing must be positive".into());
    }
    let grid = match cfg.grid.half_extent {
        Some(half) => {
            if !(half > 0.0) {
                return Err("grid half_extent must be positive".into());
            }
            GridSpec::centered(cfg.problem.dim, cfg.grid.h, half)
        }
        None => grid_for_ring(&ring, cfg.problem.dim, cfg.grid.h).map_err(|e| e.to_string())?,
    };

    Ok(BuiltProblem {
        spec: ProblemSpec { ring, params, data },
        grid,
    })
}
