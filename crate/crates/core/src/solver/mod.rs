//! Lattice collocation solver for the nonlocal Dirichlet problem on ring
//! domains: assembly of the discrete operator, linear solves, and the fixed
//! point iteration for semilinear right-hand sides.
//!
//! Discretization: collocation of the symmetric-difference form of the
//! operator on a uniform lattice. Every in-box cell contributes a nonnegative
//! weight (exact kernel integrals; near the pole the weights are matched to
//! the second radial moment so smooth curvature is captured), the singular
//! cell is folded into the nearest-neighbor weights through its second
//! moment, and everything beyond the covered box is integrated in closed form
//! against the far-field value of the exterior data. The resulting matrix has
//! positive diagonal and nonpositive off-diagonal entries, which is the
//! discrete maximum-principle certificate the tests rely on.

mod conv;

pub use conv::{direct_apply, Conv, ConvMode, KernelTable};

use crate::conditions::NonlinearitySpec;
use crate::data::DataFn;
use crate::geometry::{GridSpec, Region, RingDomain, ScalarField};
use crate::kernels::{frac_constant, FracParams};
use crate::point::Point;
use crate::quadrature::GlRule;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("grid does not resolve the ring: {0}")]
    RingUnresolved(String),
    #[error("degenerate ring: inner and outer boundaries closer than 2h ({gap} < {min})")]
    DegenerateRing { gap: f64, min: f64 },
    #[error("grid box does not cover the outer body")]
    BoxTooSmall,
    #[error("dimension mismatch: params dim {params}, grid dim {grid}")]
    DimMismatch { params: u32, grid: u32 },
    #[error("potential must be nonpositive on interior nodes; q({x}, {y}) = {value}")]
    QSignViolation { x: f64, y: f64, value: f64 },
    #[error("linear solver failed: {0}")]
    LinearSolve(String),
    #[error("fixed-point iteration did not converge after {iterations} iterations (last update {last_diff})")]
    PicardNonConvergence { iterations: usize, last_diff: f64 },
    #[error("whole-space outer body requires an explicit grid extent")]
    NeedExplicitExtent,
}

/// Problem data: either a semilinear right-hand side with separate exterior
/// and inner values, or a linear problem with potential, source, and one
/// exterior function covering the whole complement.
#[derive(Clone, Debug)]
pub enum ProblemData {
    Nonlinear {
        f: NonlinearitySpec,
        b0: DataFn,
        b1: DataFn,
    },
    Linear {
        q: DataFn,
        g: DataFn,
        h: DataFn,
    },
}

/// One problem instance.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub ring: RingDomain,
    pub params: FracParams,
    pub data: ProblemData,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum NodeClass {
    /// Unknown.
    Interior,
    /// Closure of the inner body; carries `b1` (or `h`).
    InnerData,
    /// Complement of the outer body; carries `b0` (or `h`).
    ExteriorData,
}

/// The assembled lattice operator. The matrix is never stored: it acts
/// through the kernel table (convolution) plus per-node diagonal and tail
/// terms.
pub struct DiscreteOperator {
    pub grid: GridSpec,
    pub params: FracParams,
    kernel: KernelTable,
    s_sum: Vec<f64>,
    tail: Vec<f64>,
    classes: Vec<NodeClass>,
    interior: Vec<usize>,
    conv: Conv,
    /// Distance from the nearest interior node to the box edge; the kernel is
    /// integrated analytically against the far-field value beyond the box.
    pub r_trunc: f64,
}

/// Radius below which cell weights are matched to the second radial moment.
fn near_field_radius(h: f64) -> f64 {
    (0.25f64).max(2.5 * h)
}

fn cell_integral_2d(kx: isize, ky: isize, h: f64, power: f64, rule: &GlRule) -> f64 {
    // integral of |y|^power over the cell at offset (kx, ky)
    let kinf = kx.abs().max(ky.abs());
    let ns = if kinf <= 1 {
        4
    } else if kinf <= 3 {
        2
    } else {
        1
    };
    let x0 = kx as f64 * h - 0.5 * h;
    let y0 = ky as f64 * h - 0.5 * h;
    let sub = h / ns as f64;
    let mut acc = 0.0;
    for sy in 0..ns {
        for sx in 0..ns {
            let cx = x0 + (sx as f64 + 0.5) * sub;
            let cy = y0 + (sy as f64 + 0.5) * sub;
            let hw = 0.5 * sub;
            let mut cell = 0.0;
            for (xi, wx) in rule.nodes.iter().zip(&rule.weights) {
                let x = cx + hw * xi;
                let mut inner = 0.0;
                for (yi, wy) in rule.nodes.iter().zip(&rule.weights) {
                    let y = cy + hw * yi;
                    inner += wy * (x * x + y * y).powf(power / 2.0);
                }
                cell += wx * inner;
            }
            acc += cell * hw * hw;
        }
    }
    acc
}

/// `int_{C_0} y_1^2 |y|^{-2-a} dy` over the singular cell, by the polar
/// representation with arcs split at the cell-corner angles.
fn singular_moment_2d(h: f64, alpha: f64, rule: &GlRule) -> f64 {
    let half = 0.5 * h;
    let mut acc = 0.0;
    for arc in 0..8 {
        let a = std::f64::consts::FRAC_PI_4 * arc as f64;
        let b = std::f64::consts::FRAC_PI_4 * (arc + 1) as f64;
        acc += rule.integrate(a, b, |theta| {
            let r = half / theta.cos().abs().max(theta.sin().abs());
            theta.cos().powi(2) * r.powf(2.0 - alpha) / (2.0 - alpha)
        });
    }
    acc
}

fn build_kernel_1d(nx_off: usize, h: f64, params: &FracParams) -> KernelTable {
    let alpha = params.alpha();
    let c = frac_constant(params);
    let r_near = near_field_radius(h);
    let mut table = KernelTable::new(nx_off, 0);
    for k in 1..=nx_off as isize {
        let a = (k as f64 - 0.5) * h;
        let b = (k as f64 + 0.5) * h;
        let w = if (k as f64) * h <= r_near {
            // second-moment matched: c * int y^2 K / (kh)^2
            let m2 = (b.powf(2.0 - alpha) - a.powf(2.0 - alpha)) / (2.0 - alpha);
            c * m2 / ((k as f64 * h) * (k as f64 * h))
        } else {
            let m0 = (a.powf(-alpha) - b.powf(-alpha)) / alpha;
            c * m0
        };
        table.add(k, 0, w);
        table.add(-k, 0, w);
    }
    // singular cell: second-moment transfer onto the nearest neighbors
    let m2c = 2.0 * (0.5 * h).powf(2.0 - alpha) / (2.0 - alpha);
    let w0 = 0.5 * c * m2c / (h * h);
    table.add(1, 0, w0);
    table.add(-1, 0, w0);
    table
}

fn build_kernel_2d(nx_off: usize, ny_off: usize, h: f64, params: &FracParams) -> KernelTable {
    let alpha = params.alpha();
    let c = frac_constant(params);
    let r_near = near_field_radius(h);
    let rule = GlRule::new(8);
    let mut table = KernelTable::new(nx_off, ny_off);
    // one octant, mirrored eightfold (the kernel is symmetric under axis
    // reflections and the diagonal swap)
    for ky in 0..=ny_off.min(nx_off) as isize {
        for kx in ky..=nx_off as isize {
            if kx == 0 && ky == 0 {
                continue;
            }
            let r = ((kx * kx + ky * ky) as f64).sqrt() * h;
            let w = if r <= r_near {
                let m2r = cell_integral_2d(kx, ky, h, -alpha, &rule);
                c * m2r / (r * r)
            } else {
                c * cell_integral_2d(kx, ky, h, -2.0 - alpha, &rule)
            };
            let mut seen = std::collections::HashSet::new();
            for &(sx, sy) in &[(1i64, 1i64), (-1, 1), (1, -1), (-1, -1)] {
                for &(ax, ay) in &[(kx, ky), (ky, kx)] {
                    let px = ax * sx as isize;
                    let py = ay * sy as isize;
                    if px.unsigned_abs() <= nx_off
                        && py.unsigned_abs() <= ny_off
                        && seen.insert((px, py))
                    {
                        let i = table.idx(px, py);
                        table.w[i] = w;
                    }
                }
            }
        }
    }
    // singular cell onto the four nearest neighbors
    let gl16 = GlRule::new(16);
    let m2c = singular_moment_2d(h, alpha, &gl16);
    let w0 = 0.5 * c * m2c / (h * h);
    for &(kx, ky) in &[(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
        table.add(kx, ky, w0);
    }
    table
}

fn tail_1d(dxm: f64, dxp: f64, alpha: f64, c: f64) -> f64 {
    c * (dxm.powf(-alpha) + dxp.powf(-alpha)) / alpha
}

fn tail_2d(dxm: f64, dxp: f64, dym: f64, dyp: f64, alpha: f64, c: f64, rule: &GlRule) -> f64 {
    // c * int_0^{2pi} R(theta)^{-alpha} / alpha dtheta, with R the distance
    // to the covered rectangle; split at the corner directions
    let mut corners: Vec<f64> = [(dyp, dxp), (dyp, -dxm), (-dym, -dxm), (-dym, dxp)]
        .iter()
        .map(|&(y, x)| f64::atan2(y, x).rem_euclid(2.0 * std::f64::consts::PI))
        .collect();
    corners.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let radius = |theta: f64| -> f64 {
        let ct = theta.cos();
        let st = theta.sin();
        let mut r = f64::INFINITY;
        if ct > 1e-300 {
            r = r.min(dxp / ct);
        }
        if ct < -1e-300 {
            r = r.min(dxm / -ct);
        }
        if st > 1e-300 {
            r = r.min(dyp / st);
        }
        if st < -1e-300 {
            r = r.min(dym / -st);
        }
        r
    };
    let mut acc = 0.0;
    for i in 0..4 {
        let a = corners[i];
        let b = if i == 3 {
            corners[0] + 2.0 * std::f64::consts::PI
        } else {
            corners[i + 1]
        };
        if b - a < 1e-14 {
            continue;
        }
        acc += rule.integrate(a, b, |theta| radius(theta).powf(-alpha));
    }
    c * acc / alpha
}

/// Lattice covering the outer body (snapped outward), with the origin as a
/// node.
pub fn grid_for_ring(ring: &RingDomain, dim: u32, h: f64) -> Result<GridSpec, SolverError> {
    let r = ring
        .max_outer_radius()
        .ok_or(SolverError::NeedExplicitExtent)?;
    let half = (r / h - 1e-9).ceil() * h;
    Ok(GridSpec::centered(dim, h, half))
}

/// Assembles the discrete operator for a ring on a grid.
pub fn assemble(
    ring: &RingDomain,
    params: &FracParams,
    grid: &GridSpec,
) -> Result<DiscreteOperator, SolverError> {
    if params.dim() != grid.dim {
        return Err(SolverError::DimMismatch {
            params: params.dim(),
            grid: grid.dim,
        });
    }
    if let Some(outer) = &ring.outer {
        for j in 0..256 {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / 256.0;
            if !grid.in_box(outer.boundary_point(theta)) {
                return Err(SolverError::BoxTooSmall);
            }
        }
    }
    if let Some(gap) = ring.min_gap() {
        if gap < 2.0 * grid.h {
            return Err(SolverError::DegenerateRing {
                gap,
                min: 2.0 * grid.h,
            });
        }
    }

    let n_box = grid.n_nodes();
    let mut classes = vec![NodeClass::Interior; n_box];
    let mut interior = Vec::new();
    let mut inner_nodes = 0usize;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let b = grid.idx(i, j);
            match ring.classify(grid.node(i, j)) {
                Region::InnerClosed => {
                    classes[b] = NodeClass::InnerData;
                    inner_nodes += 1;
                }
                Region::Exterior => classes[b] = NodeClass::ExteriorData,
                Region::Ring => {
                    classes[b] = NodeClass::Interior;
                    interior.push(b);
                }
            }
        }
    }
    if ring.inner.is_some() && inner_nodes == 0 {
        return Err(SolverError::RingUnresolved(
            "no grid node falls in the inner body".into(),
        ));
    }
    if interior.is_empty() {
        return Err(SolverError::RingUnresolved(
            "no interior nodes in the ring".into(),
        ));
    }

    let kernel = if grid.dim == 1 {
        build_kernel_1d(grid.nx - 1, grid.h, params)
    } else {
        build_kernel_2d(grid.nx - 1, grid.ny - 1, grid.h, params)
    };
    let s_sum = kernel.in_box_sums(grid.nx, grid.ny);

    let c = frac_constant(params);
    let alpha = params.alpha();
    let gl16 = GlRule::new(16);
    let mut tail = vec![0.0; n_box];
    let mut r_trunc = f64::INFINITY;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let p = grid.node(i, j);
            let dxm = p.x - (grid.origin.x - 0.5 * grid.h);
            let dxp = grid.max_x() + 0.5 * grid.h - p.x;
            let b = grid.idx(i, j);
            if grid.dim == 1 {
                tail[b] = tail_1d(dxm, dxp, alpha, c);
                if classes[b] == NodeClass::Interior {
                    r_trunc = r_trunc.min(dxm.min(dxp));
                }
            } else {
                let dym = p.y - (grid.origin.y - 0.5 * grid.h);
                let dyp = grid.max_y() + 0.5 * grid.h - p.y;
                tail[b] = tail_2d(dxm, dxp, dym, dyp, alpha, c, &gl16);
                if classes[b] == NodeClass::Interior {
                    r_trunc = r_trunc.min(dxm.min(dxp).min(dym.min(dyp)));
                }
            }
        }
    }

    let conv = Conv::new(&kernel, grid.nx, grid.ny, ConvMode::Auto);
    Ok(DiscreteOperator {
        grid: grid.clone(),
        params: *params,
        kernel,
        s_sum,
        tail,
        classes,
        interior,
        conv,
        r_trunc,
    })
}

impl DiscreteOperator {
    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.classes
    }

    pub fn interior_point(&self, unknown: usize) -> Point {
        let b = self.interior[unknown];
        self.grid.node(b % self.grid.nx, b / self.grid.nx)
    }

    /// Operator applied to a full box of values assuming `b_inf` beyond the
    /// box; meaningful at interior nodes.
    pub fn apply_box(&self, values: &[f64], b_inf: f64) -> Vec<f64> {
        let w = self.conv.apply(values);
        let mut out = vec![0.0; values.len()];
        for i in 0..values.len() {
            out[i] = (self.s_sum[i] + self.tail[i]) * values[i] - w[i] - self.tail[i] * b_inf;
        }
        out
    }

    /// Matrix-vector product of the interior block, including `- q u`.
    fn matvec(&self, v: &[f64], q_diag: &[f64]) -> Vec<f64> {
        let mut box_values = vec![0.0; self.grid.n_nodes()];
        for (u, &b) in self.interior.iter().enumerate() {
            box_values[b] = v[u];
        }
        let w = self.conv.apply(&box_values);
        let mut out = vec![0.0; v.len()];
        for (u, &b) in self.interior.iter().enumerate() {
            out[u] = (self.s_sum[b] + self.tail[b] - q_diag[u]) * v[u] - w[b];
        }
        out
    }

    /// Contribution of the known (exterior and inner) node values to the
    /// right-hand side.
    fn affine(&self, known_box: &[f64], b_inf: f64) -> Vec<f64> {
        let w = self.conv.apply(known_box);
        self.interior
            .iter()
            .map(|&b| w[b] + self.tail[b] * b_inf)
            .collect()
    }

    fn diag(&self, q_diag: &[f64]) -> Vec<f64> {
        self.interior
            .iter()
            .enumerate()
            .map(|(u, &b)| self.s_sum[b] + self.tail[b] - q_diag[u])
            .collect()
    }

    /// Smallest off-diagonal kernel weight; the sign-pattern certificate
    /// requires this to be nonnegative.
    pub fn min_kernel_weight(&self) -> f64 {
        self.kernel.min_weight()
    }

    /// Worst deviation of the operator from zero on the constant-one
    /// extension, over interior nodes.
    pub fn constant_consistency(&self) -> f64 {
        let ones = vec![1.0; self.grid.n_nodes()];
        let out = self.apply_box(&ones, 1.0);
        self.interior
            .iter()
            .map(|&b| out[b].abs())
            .fold(0.0, f64::max)
    }

    /// Box vector carrying the known node values, zero at interior nodes.
    pub fn known_values_box(&self, inner: &DataFn, exterior: &DataFn) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.n_nodes()];
        for j in 0..self.grid.ny {
            for i in 0..self.grid.nx {
                let b = self.grid.idx(i, j);
                match self.classes[b] {
                    NodeClass::InnerData => out[b] = inner.eval(self.grid.node(i, j)),
                    NodeClass::ExteriorData => out[b] = exterior.eval(self.grid.node(i, j)),
                    NodeClass::Interior => {}
                }
            }
        }
        out
    }

    fn validated_q_diag(&self, q: &DataFn) -> Result<Vec<f64>, SolverError> {
        let mut q_diag = Vec::with_capacity(self.n_interior());
        for u in 0..self.n_interior() {
            let p = self.interior_point(u);
            let qv = q.eval(p);
            if qv > 1e-14 {
                return Err(SolverError::QSignViolation {
                    x: p.x,
                    y: p.y,
                    value: qv,
                });
            }
            q_diag.push(qv);
        }
        Ok(q_diag)
    }
}

/// Solver knobs; the defaults match the shipped problem sizes.
#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Unknown-count threshold below which a dense factorization is used.
    pub dense_limit: usize,
    pub cg_rel_tol: f64,
    pub cg_abs_tol: f64,
    pub max_cg_iter: usize,
    /// Residual bound the `converged` flag certifies.
    pub resid_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            dense_limit: 1600,
            cg_rel_tol: 1e-13,
            cg_abs_tol: 1e-13,
            max_cg_iter: 50_000,
            resid_tol: 1e-8,
        }
    }
}

/// A solved field with its certification data.
#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub field: ScalarField,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn pcg(
    op: &DiscreteOperator,
    q_diag: &[f64],
    b: &[f64],
    x0: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, usize), SolverError> {
    let n = b.len();
    let diag = op.diag(q_diag);
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut r = {
        let ax = op.matvec(&x, q_diag);
        b.iter()
            .zip(&ax)
            .map(|(bi, ai)| bi - ai)
            .collect::<Vec<f64>>()
    };
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tol = opts.cg_abs_tol.max(opts.cg_rel_tol * bnorm);
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for it in 0..opts.max_cg_iter {
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= tol {
            return Ok((x, it));
        }
        let ap = op.matvec(&p, q_diag);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(SolverError::LinearSolve(format!(
                "conjugate gradients broke down (p^T A p = {pap}); matrix is not positive definite"
            )));
        }
        let gamma = rz / pap;
        for i in 0..n {
            x[i] += gamma * p[i];
            r[i] -= gamma * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rnorm <= tol.max(1e-10 * bnorm.max(1.0)) {
        Ok((x, opts.max_cg_iter))
    } else {
        Err(SolverError::LinearSolve(format!(
            "conjugate gradients stalled at residual {rnorm} (target {tol})"
        )))
    }
}

fn dense_solve(op: &DiscreteOperator, q_diag: &[f64], b: &[f64]) -> Result<Vec<f64>, SolverError> {
    let n = b.len();
    let diag = op.diag(q_diag);
    let nx = op.grid.nx;
    let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
    for (r, &br) in op.interior.iter().enumerate() {
        let (rx, ry) = (br % nx, br / nx);
        for (c, &bc) in op.interior.iter().enumerate() {
            if r == c {
                a[(r, c)] = diag[r];
            } else {
                let (cx, cy) = (bc % nx, bc / nx);
                a[(r, c)] = -op.kernel.get(cx as isize - rx as isize, cy as isize - ry as isize);
            }
        }
    }
    let rhs = nalgebra::DVector::from_column_slice(b);
    let lu = a.lu();
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| SolverError::LinearSolve("dense factorization is singular".into()))?;
    Ok(sol.as_slice().to_vec())
}

/// Core linear solve against explicit per-node source values.
fn solve_interior(
    op: &DiscreteOperator,
    q_diag: &[f64],
    g_values: &[f64],
    known_box: &[f64],
    b_inf: f64,
    opts: &SolveOptions,
    warm: Option<&[f64]>,
) -> Result<(Vec<f64>, usize), SolverError> {
    let aff = op.affine(known_box, b_inf);
    let rhs: Vec<f64> = g_values
        .iter()
        .zip(&aff)
        .map(|(g, a)| g + a)
        .collect();
    if op.n_interior() <= opts.dense_limit {
        Ok((dense_solve(op, q_diag, &rhs)?, 1))
    } else {
        pcg(op, q_diag, &rhs, warm, opts)
    }
}

fn assemble_field(
    op: &DiscreteOperator,
    solution: &[f64],
    known_box: &[f64],
    exterior: DataFn,
) -> ScalarField {
    let mut values = known_box.to_vec();
    for (u, &b) in op.interior.iter().enumerate() {
        values[b] = solution[u];
    }
    ScalarField {
        grid: op.grid.clone(),
        values,
        exterior,
    }
}

/// Max-norm residual of the discrete equation on the interior nodes.
pub fn residual(op: &DiscreteOperator, field: &ScalarField, data: &ProblemData) -> f64 {
    let b_inf = field.exterior.far_value();
    let applied = op.apply_box(&field.values, b_inf);
    let mut worst = 0.0f64;
    for &b in &op.interior {
        let p = op.grid.node(b % op.grid.nx, b / op.grid.nx);
        let u = field.values[b];
        let r = match data {
            ProblemData::Linear { q, g, .. } => applied[b] - q.eval(p) * u - g.eval(p),
            ProblemData::Nonlinear { f, .. } => applied[b] + f.eval(p, u.clamp(0.0, 1.0)),
        };
        worst = worst.max(r.abs());
    }
    worst
}

/// Solves the linear problem `(op - q) u = g` with exterior data `h` on the
/// whole complement. Requires `q <= 0` on the interior nodes.
///
/// Exterior data is read exactly at box nodes and replaced by its far-field
/// value beyond the box; size the grid to cover any structured part of `h`.
pub fn solve_linear(
    op: &DiscreteOperator,
    q: &DataFn,
    g: &DataFn,
    h: &DataFn,
) -> Result<SolveOutcome, SolverError> {
    solve_linear_with(op, q, g, h, &SolveOptions::default())
}

pub fn solve_linear_with(
    op: &DiscreteOperator,
    q: &DataFn,
    g: &DataFn,
    h: &DataFn,
    opts: &SolveOptions,
) -> Result<SolveOutcome, SolverError> {
    let q_diag = op.validated_q_diag(q)?;
    let g_values: Vec<f64> = (0..op.n_interior())
        .map(|u| g.eval(op.interior_point(u)))
        .collect();
    let known_box = op.known_values_box(h, h);
    let (solution, iterations) = solve_interior(
        op,
        &q_diag,
        &g_values,
        &known_box,
        h.far_value(),
        opts,
        None,
    )?;
    let field = assemble_field(op, &solution, &known_box, h.clone());
    let data = ProblemData::Linear {
        q: q.clone(),
        g: g.clone(),
        h: h.clone(),
    };
    let res = residual(op, &field, &data);
    Ok(SolveOutcome {
        field,
        residual: res,
        iterations,
        converged: res <= opts.resid_tol,
    })
}

/// Fixed-point iteration for the semilinear problem: repeated linear solves
/// against `g = -f(x, clamp(u))`, with the update damped when it starts to
/// oscillate. The nonlinearity is extended by clamping `u` to `[0, 1]`.
pub fn solve_nonlinear_picard(
    op: &DiscreteOperator,
    f: &NonlinearitySpec,
    b0: &DataFn,
    b1: &DataFn,
    max_iter: usize,
    tol: f64,
) -> Result<SolveOutcome, SolverError> {
    solve_nonlinear_picard_with(op, f, b0, b1, max_iter, tol, &SolveOptions::default())
}

pub fn solve_nonlinear_picard_with(
    op: &DiscreteOperator,
    f: &NonlinearitySpec,
    b0: &DataFn,
    b1: &DataFn,
    max_iter: usize,
    tol: f64,
    opts: &SolveOptions,
) -> Result<SolveOutcome, SolverError> {
    let known_box = op.known_values_box(b1, b0);
    let b_inf = b0.far_value();
    let n = op.n_interior();
    let points: Vec<Point> = (0..n).map(|u| op.interior_point(u)).collect();
    let q_diag = vec![0.0; n];
    let zeros = vec![0.0; n];

    // start from the harmonic solution (f == 0)
    let (mut current, _) =
        solve_interior(op, &q_diag, &zeros, &known_box, b_inf, opts, None)?;

    let finish = |solution: &[f64], iterations: usize| -> SolveOutcome {
        let field = assemble_field(op, solution, &known_box, b0.clone());
        let data = ProblemData::Nonlinear {
            f: f.clone(),
            b0: b0.clone(),
            b1: b1.clone(),
        };
        let res = residual(op, &field, &data);
        SolveOutcome {
            field,
            residual: res,
            iterations,
            converged: res <= tol.max(opts.resid_tol),
        }
    };
    if max_iter == 0 {
        return Ok(finish(&current, 0));
    }

    let mut omega = 1.0f64;
    let mut last_diff = f64::INFINITY;
    let mut iterations = 0usize;
    for it in 1..=max_iter {
        iterations = it;
        let g_values: Vec<f64> = points
            .iter()
            .zip(&current)
            .map(|(p, &u)| -f.eval(*p, u.clamp(0.0, 1.0)))
            .collect();
        let (step, _) = solve_interior(
            op,
            &q_diag,
            &g_values,
            &known_box,
            b_inf,
            opts,
            Some(&current),
        )?;
        let mut diff = 0.0f64;
        for (c, s) in current.iter().zip(&step) {
            diff = diff.max((c - s).abs());
        }
        if diff > last_diff && omega > 1.0 / 32.0 {
            omega *= 0.5;
        }
        for (c, s) in current.iter_mut().zip(&step) {
            *c = (1.0 - omega) * *c + omega * s;
        }
        if omega * diff < tol {
            return Ok(finish(&current, iterations));
        }
        last_diff = diff;
    }
    Err(SolverError::PicardNonConvergence {
        iterations,
        last_diff,
    })
}

/// Discrete maximum principle: interior values must be nonnegative (up to
/// round-off), strictly positive whenever the known data is positive
/// somewhere.
pub fn maximum_principle_check(op: &DiscreteOperator, field: &ScalarField, h: &DataFn) -> bool {
    let mut min_interior = f64::INFINITY;
    for &b in &op.interior {
        min_interior = min_interior.min(field.values[b]);
    }
    if min_interior < -1e-12 {
        return false;
    }
    let mut data_positive = false;
    for j in 0..op.grid.ny {
        for i in 0..op.grid.nx {
            let b = op.grid.idx(i, j);
            if op.classes[b] != NodeClass::Interior && h.eval(op.grid.node(i, j)) > 0.0 {
                data_positive = true;
            }
        }
    }
    if data_positive {
        min_interior > 0.0
    } else {
        true
    }
}

/// Exterior data equal to one on the inner body and zero elsewhere: the
/// complement data of the basic two-valued problem.
pub fn indicator_inner(ring: &RingDomain) -> DataFn {
    let ring = ring.clone();
    DataFn::custom(
        move |p| match ring.classify(p) {
            Region::InnerClosed => 1.0,
            _ => 0.0,
        },
        0.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::StarDomain;
    use crate::kernels::{exit_time_constant, expected_exit_time_ball};
    use approx::assert_relative_eq;

    fn interval_ring(inner: Option<f64>) -> RingDomain {
        RingDomain::new(
            Some(StarDomain::ball(Point::ZERO, 1.0).unwrap()),
            inner.map(|r| StarDomain::ball(Point::ZERO, r).unwrap()),
        )
        .unwrap()
    }

    fn fp(alpha: f64, dim: u32) -> FracParams {
        FracParams::new(alpha, dim).unwrap()
    }

    #[test]
    fn constant_extension_maps_to_zero() {
        for &(alpha, dim, h) in &[
            (1.0, 1, 1.0 / 64.0),
            (0.6, 1, 1.0 / 32.0),
            (1.3, 2, 1.0 / 16.0),
        ] {
            let params = fp(alpha, dim);
            let ring = interval_ring(Some(0.3));
            let grid = grid_for_ring(&ring, dim, h).unwrap();
            let op = assemble(&ring, &params, &grid).unwrap();
            let dev = op.constant_consistency();
            assert!(dev <= 1e-10, "alpha={alpha} dim={dim}: deviation {dev}");
        }
    }

    #[test]
    fn m_matrix_sign_pattern() {
        let params = fp(1.0, 2);
        let ring = interval_ring(Some(0.3));
        let grid = grid_for_ring(&ring, 2, 1.0 / 12.0).unwrap();
        let op = assemble(&ring, &params, &grid).unwrap();
        assert!(op.min_kernel_weight() >= 0.0);
        let q = vec![0.0; op.n_interior()];
        assert!(op.diag(&q).iter().all(|&d| d > 0.0));
    }

    #[test]
    fn assembly_rejects_bad_setups() {
        let params = fp(1.0, 1);
        // boundaries closer than the grid can separate
        let ring = interval_ring(Some(0.95));
        let grid = GridSpec::centered(1, 1.0 / 8.0, 1.0);
        assert!(matches!(
            assemble(&ring, &params, &grid),
            Err(SolverError::DegenerateRing { .. })
        ));
        // a grid whose nodes all miss a tiny inner body (origin not a node)
        let ring = interval_ring(Some(0.02));
        let grid = GridSpec {
            dim: 1,
            h: 0.125,
            nx: 18,
            ny: 1,
            origin: Point::new(-1.0 - 0.125 / 3.0, 0.0),
        };
        assert!(matches!(
            assemble(&ring, &params, &grid),
            Err(SolverError::RingUnresolved(_))
        ));
        // box not covering the outer body
        let ring = interval_ring(Some(0.3));
        let grid = GridSpec::centered(1, 1.0 / 8.0, 0.5);
        assert!(matches!(
            assemble(&ring, &params, &grid),
            Err(SolverError::BoxTooSmall)
        ));
        // dimension mismatch
        let grid = GridSpec::centered(2, 1.0 / 8.0, 1.0);
        assert!(matches!(
            assemble(&ring, &params, &grid),
            Err(SolverError::DimMismatch { .. })
        ));
    }

    #[test]
    fn harmonic_constant_data_gives_constant_solution() {
        let params = fp(1.0, 1);
        let ring = interval_ring(Some(0.3));
        let grid = grid_for_ring(&ring, 1, 1.0 / 64.0).unwrap();
        let op = assemble(&ring, &params, &grid).unwrap();
        let c = 0.75;
        let out = solve_linear(
            &op,
            &DataFn::Zero,
            &DataFn::Zero,
            &DataFn::Constant { value: c },
        )
        .unwrap();
        assert!(out.residual <= 1e-10, "residual {}", out.residual);
        for &b in op.interior_nodes() {
            assert_relative_eq!(out.field.values[b], c, epsilon = 1e-9);
        }
    }

    #[test]
    fn harmonic_ring_solution_strictly_between_data() {
        for &(alpha, dim, h) in &[
            (1.0, 1, 1.0 / 64.0),
            (1.5, 1, 1.0 / 64.0),
            (1.0, 2, 1.0 / 16.0),
        ] {
            let params = fp(alpha, dim);
            let ring = interval_ring(Some(0.3));
            let grid = grid_for_ring(&ring, dim, h).unwrap();
            let op = assemble(&ring, &params, &grid).unwrap();
            let h_data = indicator_inner(&ring);
            let out = solve_linear(&op, &DataFn::Zero, &DataFn::Zero, &h_data).unwrap();
            for &b in op.interior_nodes() {
                let v = out.field.values[b];
                assert!(v > 0.0 && v < 1.0, "alpha={alpha} dim={dim}: u={v}");
            }
            assert!(maximum_principle_check(&op, &out.field, &h_data));
        }
    }

    #[test]
    fn source_problem_reproduces_exit_time_with_grid_convergence() {
        // (op) u = 1 on (-1,1), u = 0 outside: u(x) = C (1-x^2)^{a/2}
        for &alpha in &[0.5, 1.0, 1.5] {
            let params = fp(alpha, 1);
            let ring = interval_ring(None);
            let mut errs = Vec::new();
            for &h in &[1.0 / 64.0, 1.0 / 128.0] {
                let grid = grid_for_ring(&ring, 1, h).unwrap();
                let op = assemble(&ring, &params, &grid).unwrap();
                let out = solve_linear(&op, &DataFn::Zero, &DataFn::One, &DataFn::Zero).unwrap();
                let mut err = 0.0f64;
                for &x in &[0.0, 0.25, -0.4] {
                    let exact =
                        expected_exit_time_ball(Point::x1d(x), Point::ZERO, 1.0, &params).unwrap();
                    err = err.max((out.field.eval(Point::x1d(x)) - exact).abs());
                }
                errs.push(err);
            }
            let ratio = errs[0] / errs[1];
            assert!(ratio > 1.5, "alpha={alpha}: errors {errs:?} ratio {ratio}");
            assert!(errs[1] < 0.02 * exit_time_constant(&params));
        }
    }

    #[test]
    fn comparison_principle_on_random_data() {
        let params = fp(1.2, 1);
        let ring = interval_ring(Some(0.3));
        let grid = grid_for_ring(&ring, 1, 1.0 / 32.0).unwrap();
        let op = assemble(&ring, &params, &grid).unwrap();
        let mut seed = 99u64;
        let mut rng = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..5 {
            let (a1, a2) = (rng(), rng());
            let (b1v, b2v) = (rng(), rng());
            let g_hi = DataFn::Constant { value: a1 + a2 };
            let g_lo = DataFn::Constant { value: a1 };
            let h_hi = DataFn::Constant { value: b1v + b2v };
            let h_lo = DataFn::Constant { value: b1v };
            let q = DataFn::Constant { value: -rng() };
            let u_hi = solve_linear(&op, &q, &g_hi, &h_hi).unwrap();
            let u_lo = solve_linear(&op, &q, &g_lo, &h_lo).unwrap();
            for &b in op.interior_nodes() {
                assert!(u_hi.field.values[b] >= u_lo.field.values[b] - 1e-11);
            }
        }
    }

    #[test]
    fn rejects_positive_potential() {
        let params = fp(1.0, 1);
        let ring = interval_ring(Some(0.3));
        let grid = grid_for_ring(&ring, 1, 1.0 / 32.0).unwrap();
        let op = assemble(&ring, &params, &grid).unwrap();
        let err = solve_linear(
            &op,
            &DataFn::Constant { value: 0.5 },
            &DataFn::Zero,
            &DataFn::Zero,
        );
        assert!(matches!(err, Err(SolverError::QSignViolation { .. })));
    }

    #[test]
    fn perturbed_solution_has_large_residual() {
        let params = fp(1.0, 1);
        let ring = interval_ring(Some(0.3));
        let grid = grid_for_ring(&ring, 1, 1.0 / 64.0).unwrap();
        let op = assemble(&ring, &params, &grid).unwrap();
        let h = DataFn::Zero;
        let data = ProblemData::Linear {
            q: DataFn::Zero,
            g: DataFn::One,
            h: h.clone(),
        };
        let out = solve_linear(&op, &DataFn::Zero, &DataFn::One, &h).unwrap();
        assert!(out.residual <= 1e-10);
        let mut field = out.field.clone();
        let b = op.interior_nodes()[op.n_interior() / 2];
        let delta = 1e-3;
        field.values[b] += delta;
        let res = residual(&op, &field, &data);
        let diag = op.s_sum[b] + op.tail[b];
        assert!(res >= 0.5 * diag * delta, "res {res}, diag {diag}");
    }

    #[test]
    fn picard_zero_nonlinearity_matches_linear() {
        let params = fp(1.0, 1);
        let ring = interval_ring(Some(0.3));
        let grid = grid_for_ring(&ring, 1, 1.0 / 32.0).unwrap();
        let op = assemble(&ring, &params, &grid).unwrap();
        let pic = solve_nonlinear_picard(
            &op,
            &NonlinearitySpec::zero(),
            &DataFn::Zero,
            &DataFn::One,
            5,
            1e-10,
        )
        .unwrap();
        let lin = solve_linear(&op, &DataFn::Zero, &DataFn::Zero, &indicator_inner(&ring)).unwrap();
        for &b in op.interior_nodes() {
            assert_relative_eq!(pic.field.values[b], lin.field.values[b], epsilon = 1e-9);
        }
    }

    #[test]
    fn picard_multiplicative_potential_matches_direct_linear_route() {
        // f(x,u) = q(x) u with q >= 0 solved by iteration must agree with the
        // direct linear solve with potential -q
        let params = fp(1.0, 1);
        let ring = interval_ring(Some(0.3));
        let grid = grid_for_ring(&ring, 1, 1.0 / 32.0).unwrap();
        let op = assemble(&ring, &params, &grid).unwrap();
        let f = NonlinearitySpec::new(|x: Point, u| x.norm_sq() * u, Some(1.0), "r2u");
        let pic = solve_nonlinear_picard(&op, &f, &DataFn::Zero, &DataFn::One, 400, 1e-11).unwrap();
        assert!(pic.converged, "residual {}", pic.residual);

        let q = DataFn::custom(move |p: Point| -p.norm_sq(), 0.0);
        let lin = solve_linear(&op, &q, &DataFn::Zero, &indicator_inner(&ring)).unwrap();
        for &b in op.interior_nodes() {
            assert!(
                (pic.field.values[b] - lin.field.values[b]).abs() < 1e-8,
                "picard {} vs linear {}",
                pic.field.values[b],
                lin.field.values[b]
            );
        }
    }

    #[test]
    fn picard_allen_cahn_converges_into_unit_interval() {
        let params = fp(1.0, 1);
        let ring = interval_ring(Some(0.3));
        let grid = grid_for_ring(&ring, 1, 1.0 / 64.0).unwrap();
        let op = assemble(&ring, &params, &grid).unwrap();
        let (f, _) = crate::conditions::make_allen_cahn(0.5, 0.25, 2.0).unwrap();
        let out = solve_nonlinear_picard(&op, &f, &DataFn::Zero, &DataFn::One, 300, 1e-9).unwrap();
        assert!(out.converged);
        for &b in op.interior_nodes() {
            let v = out.field.values[b];
            assert!((-1e-9..=1.0 + 1e-9).contains(&v), "u = {v}");
        }
    }

    #[test]
    fn discrete_scaling_consistency() {
        // v(x) = u(x/t) solves the problem on the scaled ring with source
        // t^{-a} g(x/t); compare the two discrete solutions
        let alpha = 1.0;
        let params = fp(alpha, 1);
        let t: f64 = 1.5;
        let h = 1.0 / 96.0;
        let ring = interval_ring(None);
        let grid = grid_for_ring(&ring, 1, h).unwrap();
        let op = assemble(&ring, &params, &grid).unwrap();
        let base = solve_linear(&op, &DataFn::Zero, &DataFn::One, &DataFn::Zero).unwrap();

        let scaled_ring =
            RingDomain::new(Some(StarDomain::ball(Point::ZERO, t).unwrap()), None).unwrap();
        let sgrid = grid_for_ring(&scaled_ring, 1, h).unwrap();
        let sop = assemble(&scaled_ring, &params, &sgrid).unwrap();
        let g = DataFn::Constant {
            value: t.powf(-alpha),
        };
        let scaled = solve_linear(&sop, &DataFn::Zero, &g, &DataFn::Zero).unwrap();
        for &x in &[0.0, 0.3, -0.55] {
            let a = base.field.eval(Point::x1d(x));
            let b = scaled.field.eval(Point::x1d(t * x));
            assert!((a - b).abs() < 10.0 * h, "u({x})={a} vs v({x} t)={b}");
        }
    }
}
