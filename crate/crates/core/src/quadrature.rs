//! One-dimensional quadrature building blocks: Gauss-Legendre rules and an
//! adaptive Simpson scheme with dyadic pre-splitting for wide intervals.

use std::sync::OnceLock;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, computed by Newton
/// iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_n(x) and derivative by recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// A reusable Gauss-Legendre rule.
#[derive(Clone, Debug)]
pub struct GlRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GlRule {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        GlRule { nodes, weights }
    }

    /// Integrate `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let c = 0.5 * (a + b);
        let hw = 0.5 * (b - a);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(c + hw * x);
        }
        acc * hw
    }
}

/// Shared 16-point rule for smooth panel integrands.
pub fn gl16() -> &'static GlRule {
    static RULE: OnceLock<GlRule> = OnceLock::new();
    RULE.get_or_init(|| GlRule::new(16))
}

/// Shared 32-point rule.
pub fn gl32() -> &'static GlRule {
    static RULE: OnceLock<GlRule> = OnceLock::new();
    RULE.get_or_init(|| GlRule::new(32))
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_rec(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    // stop on convergence, depth, or when subdivision hits round-off scale
    if depth == 0
        || delta.abs() <= 15.0 * tol
        || m - a <= f64::EPSILON * (a.abs() + b.abs())
    {
        return left + right + delta / 15.0;
    }
    // halve the tolerance per side, but never below the round-off floor of
    // the panel values; without the floor noise-limited panels recurse to
    // full depth
    let child_tol = (0.5 * tol).max(0.25 * f64::EPSILON * (left.abs() + right.abs()));
    adaptive_rec(f, a, m, fa, flm, fm, left, child_tol, depth - 1)
        + adaptive_rec(f, m, b, fm, frm, fb, right, child_tol, depth - 1)
}

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance
/// `tol`.
pub fn adaptive_simpson(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, b - a);
    adaptive_rec(&mut f, a, b, fa, fm, fb, whole, tol, 32)
}

/// Integrate over `[a, b]` with `0 <= a < b`, pre-splitting dyadically when
/// `b/a` spans many scales so the adaptive pass starts from panels of
/// comparable relative width.
pub fn integrate_scaled(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    assert!(a >= 0.0 && b >= a);
    if b == a {
        return 0.0;
    }
    let start = if a > 0.0 { a } else { b.min(1e-12) * 0.0 };
    // Collect panel edges: [a, a0], then a0*2^k up to b.
    let mut edges = vec![a];
    let mut lo = if start > 0.0 { start } else { b / (1u64 << 40) as f64 };
    if a == 0.0 {
        edges.push(lo);
    }
    while lo * 2.0 < b {
        lo *= 2.0;
        edges.push(lo);
    }
    edges.push(b);
    let n_panels = edges.len() - 1;
    let mut acc = 0.0;
    for w in edges.windows(2) {
        acc += adaptive_simpson(&mut f, w[0], w[1], tol / n_panels as f64);
    }
    acc
}
