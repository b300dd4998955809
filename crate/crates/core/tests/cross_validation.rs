//! Cross-module oracles: the lattice operator against the pointwise
//! quadrature evaluation, and the Monte Carlo harmonic measure against the
//! lattice solve. Each route is implemented independently, so agreement is
//! evidence, not tautology.

use fracstar::data::DataFn;
use fracstar::fracop::{frac_laplacian_point, QuadratureConfig};
use fracstar::geometry::{GridSpec, RingDomain, ScalarField, StarDomain};
use fracstar::solver::{assemble, grid_for_ring, solve_linear};
use fracstar::wos::{estimate_solution, WalkConfig};
use fracstar::{FracParams, Point};

#[test]
fn lattice_operator_matches_pointwise_quadrature_on_a_gaussian() {
    // 1D, h = 1/128, box wide enough that the constant far-field assumption
    // of the lattice route costs only an exponentially small error
    let params = FracParams::new(1.0, 1).unwrap();
    let h = 1.0 / 128.0;
    let ring = RingDomain::new(Some(StarDomain::ball(Point::ZERO, 4.0).unwrap()), None).unwrap();
    let grid = grid_for_ring(&ring, 1, h).unwrap();
    let op = assemble(&ring, &params, &grid).unwrap();
    let gauss = |p: Point| (-p.norm_sq()).exp();
    let field = ScalarField::from_fn(grid.clone(), gauss, DataFn::Zero);
    let applied = op.apply_box(&field.values, 0.0);

    let q = QuadratureConfig::default();
    for k in 0..10 {
        let x = -0.9 + 0.2 * k as f64;
        let i = ((x - grid.origin.x) / h).round() as usize;
        let node = grid.node(i, 0);
        let lattice = applied[grid.idx(i, 0)];
        let pointwise = frac_laplacian_point(&gauss, node, &params, &q).unwrap();
        assert!(
            (lattice - pointwise).abs() < 5e-3,
            "at x={}: lattice {lattice} vs quadrature {pointwise}",
            node.x
        );
    }
}

#[test]
fn lattice_operator_self_convergence_on_the_exact_profile() {
    // the image of (1-x^2)_+^{a/2} is constant inside the interval; measure
    // the spread of the lattice image over interior nodes at two spacings
    for &alpha in &[0.5, 1.0] {
        let params = FracParams::new(alpha, 1).unwrap();
        let ring =
            RingDomain::new(Some(StarDomain::ball(Point::ZERO, 1.0).unwrap()), None).unwrap();
        let profile = move |p: Point| {
            let s = 1.0 - p.norm_sq();
            if s > 0.0 {
                s.powf(alpha / 2.0)
            } else {
                0.0
            }
        };
        let spread_at = |h: f64| -> f64 {
            let grid = grid_for_ring(&ring, 1, h).unwrap();
            let op = assemble(&ring, &params, &grid).unwrap();
            let field = ScalarField::from_fn(grid.clone(), profile, DataFn::Zero);
            let applied = op.apply_box(&field.values, 0.0);
            // stay away from the boundary kink where the profile is not C^2
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &b in op.interior_nodes() {
                let x = grid.node(b % grid.nx, 0).x;
                if x.abs() <= 0.5 {
                    lo = lo.min(applied[b]);
                    hi = hi.max(applied[b]);
                }
            }
            hi - lo
        };
        let s1 = spread_at(1.0 / 64.0);
        let s2 = spread_at(1.0 / 128.0);
        assert!(
            s2 < s1 && s1 / s2 > 1.5,
            "alpha={alpha}: spreads {s1} vs {s2} do not converge at first order"
        );
    }
}

#[test]
fn harmonic_measure_agrees_between_sampler_and_grid_solver() {
    // P_x(exit (-1,1) into (1,2)): Monte Carlo versus the lattice solution
    // with indicator exterior data; closed form 1/3 at x = 0 for alpha = 1
    let params = FracParams::new(1.0, 1).unwrap();
    let ring = RingDomain::new(Some(StarDomain::ball(Point::ZERO, 1.0).unwrap()), None).unwrap();
    let indicator = DataFn::RadialIndicator { lo: 1.0, hi: 2.0 };
    // the grid box must cover the support of the exterior data: beyond the
    // box the operator sees only the far-field constant
    let grid = GridSpec::centered(1, 1.0 / 128.0, 2.0);
    let op = assemble(&ring, &params, &grid).unwrap();
    let solved = solve_linear(&op, &DataFn::Zero, &DataFn::Zero, &indicator).unwrap();

    let cfg = WalkConfig {
        n_samples: 120_000,
        base_seed: 31,
        ..WalkConfig::default()
    };
    for &x in &[0.0, 0.35, -0.6] {
        let est = estimate_solution(
            Point::x1d(x),
            &ring,
            &indicator,
            &DataFn::Zero,
            None,
            &params,
            &cfg,
        )
        .unwrap();
        let grid_value = solved.field.eval(Point::x1d(x));
        assert!(
            (est.mean - grid_value).abs() < 3.0 * est.stderr + 0.01,
            "x={x}: mc {} vs grid {grid_value} (stderr {})",
            est.mean,
            est.stderr
        );
    }
    let at_zero = solved.field.eval(Point::ZERO);
    assert!(
        (at_zero - 2.0 / 3.0).abs() < 0.01,
        "two-sided slab measure at 0: {at_zero} vs 2/3"
    );
}
