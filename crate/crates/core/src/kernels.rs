//! Closed-form kernels and constants for the fractional operator of order
//! `alpha` in dimension `N`: the normalization constant, the Riesz and
//! compensated kernels, the explicit Green function of the unit interval with
//! its derivative, and the expected exit time of a ball.
//!
//! Everything here is an exact (quadrature-grade) reference; the lattice
//! solver and the Monte Carlo estimator are validated against these values.

use crate::point::Point;
use crate::quadrature::integrate_scaled;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Gamma function for positive arguments (all uses in this crate are > 0).
#[inline]
pub(crate) fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("invalid parameters: alpha must lie in (0,2) and dim >= 1, got alpha={alpha}, dim={dim}")]
    InvalidParams { alpha: f64, dim: u32 },
    #[error("Riesz constant requires dim > alpha (got alpha={alpha}, dim={dim}); use the compensated kernel")]
    CompensatedRegime { alpha: f64, dim: u32 },
    #[error("kernel is singular at the origin for this (alpha, dim)")]
    SingularPoint,
    #[error("interval Green function requires N = 1 and arguments strictly inside (-1,1)")]
    OutsideInterval,
    #[error("interval Green derivative is singular on the diagonal x = y")]
    DiagonalDerivative,
    #[error("point lies outside the ball")]
    OutsideBall,
}

/// The fractional order and ambient dimension `(alpha, N)`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FracParams {
    alpha: f64,
    dim: u32,
}

impl FracParams {
    pub fn new(alpha: f64, dim: u32) -> Result<Self, KernelError> {
        if !(alpha > 0.0 && alpha < 2.0) || dim < 1 {
            return Err(KernelError::InvalidParams { alpha, dim });
        }
        Ok(FracParams { alpha, dim })
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn dim(&self) -> u32 {
        self.dim
    }
}

/// Which kernel applies for a given `(alpha, N)`; uniquely determined.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum KernelKind {
    /// `N > alpha`: the Riesz kernel.
    Riesz,
    /// `1 = N < alpha`: compensated kernel with a negative constant for
    /// `alpha > 1`.
    CompensatedSub,
    /// `1 = N = alpha`: logarithmic kernel.
    CompensatedLog,
}

pub fn kernel_kind(p: &FracParams) -> KernelKind {
    if (p.dim as f64) > p.alpha {
        KernelKind::Riesz
    } else if p.alpha == 1.0 {
        KernelKind::CompensatedLog
    } else {
        KernelKind::CompensatedSub
    }
}

/// Normalization constant of the singular-integral definition of the
/// operator: `2^{a-2} pi^{-N/2} a (2-a) Gamma((N+a)/2) / Gamma(2 - a/2)`.
pub fn frac_constant(p: &FracParams) -> f64 {
    let a = p.alpha;
    let n = p.dim as f64;
    2f64.powf(a - 2.0)
        * std::f64::consts::PI.powf(-n / 2.0)
        * a
        * (2.0 - a)
        * gamma((n + a) / 2.0)
        / gamma(2.0 - a / 2.0)
}

/// Riesz-kernel constant `Gamma((N-a)/2) / (2^a pi^{N/2} Gamma(a/2))`,
/// defined for `N > alpha` only.
pub fn riesz_constant(p: &FracParams) -> Result<f64, KernelError> {
    if (p.dim as f64) <= p.alpha {
        return Err(KernelError::CompensatedRegime {
            alpha: p.alpha,
            dim: p.dim,
        });
    }
    let a = p.alpha;
    let n = p.dim as f64;
    Ok(gamma((n - a) / 2.0) / (2f64.powf(a) * std::f64::consts::PI.powf(n / 2.0) * gamma(a / 2.0)))
}

/// Radial profile of the kernel `K_alpha` at distance `radius` from the pole.
///
/// Dispatches on [`kernel_kind`]: `C_{N,a} r^{a-N}` (Riesz),
/// `r^{a-1} / (2 Gamma(a) cos(pi a/2))` (`1 = N < alpha`), and
/// `(1/pi) log(1/r)` (`1 = N = alpha`).
pub fn kernel(p: &FracParams, radius: f64) -> Result<f64, KernelError> {
    match kernel_kind(p) {
        KernelKind::Riesz => {
            if radius <= 0.0 {
                return Err(KernelError::SingularPoint);
            }
            Ok(riesz_constant(p)? * radius.powf(p.alpha - p.dim as f64))
        }
        KernelKind::CompensatedSub => {
            let a = p.alpha;
            Ok(radius.powf(a - 1.0) / (2.0 * gamma(a) * (std::f64::consts::PI * a / 2.0).cos()))
        }
        KernelKind::CompensatedLog => {
            if radius <= 0.0 {
                return Err(KernelError::SingularPoint);
            }
            Ok((1.0 / std::f64::consts::PI) * (1.0 / radius).ln())
        }
    }
}

/// `w(x,y) = (1-x^2)(1-y^2)/(x-y)^2`, the similarity variable of the interval
/// Green function.
#[inline]
pub fn interval_w(x: f64, y: f64) -> f64 {
    (1.0 - x * x) * (1.0 - y * y) / ((x - y) * (x - y))
}

#[inline]
fn c_tilde(alpha: f64) -> f64 {
    1.0 / (2f64.powf(alpha) * gamma(alpha / 2.0).powi(2))
}

/// `int_0^w r^{a/2-1} (r+1)^{-1/2} dr`, evaluated after the substitution
/// `r = s^{2/a}` which removes the endpoint singularity.
fn green_core_integral(w: f64, alpha: f64, tol: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let upper = w.powf(alpha / 2.0);
    let e = 2.0 / alpha;
    (2.0 / alpha) * integrate_scaled(|s| 1.0 / (1.0 + s.powf(e)).sqrt(), 0.0, upper, tol)
}

fn check_interval_args(x: f64, y: f64, p: &FracParams) -> Result<(), KernelError> {
    if p.dim != 1 || !(x > -1.0 && x < 1.0 && y > -1.0 && y < 1.0) {
        return Err(KernelError::OutsideInterval);
    }
    Ok(())
}

/// Green function of the interval `(-1,1)` for the fractional operator.
///
/// On the diagonal the value is `+inf` for `alpha <= 1` and the closed-form
/// `(1-x^2)^{a-1} / (2^{a-1} Gamma(a/2)^2 (a-1))` for `alpha > 1`; an
/// unbounded value is representable on purpose, since level-set analysis must
/// handle levels above any finite cap.
pub fn interval_green(x: f64, y: f64, p: &FracParams) -> Result<f64, KernelError> {
    check_interval_args(x, y, p)?;
    let a = p.alpha;
    if x == y {
        if a <= 1.0 {
            return Ok(f64::INFINITY);
        }
        let v = (1.0 - x * x).powf(a - 1.0)
            / (2f64.powf(a - 1.0) * gamma(a / 2.0).powi(2) * (a - 1.0));
        return Ok(v);
    }
    let w = interval_w(x, y);
    let core = green_core_integral(w, a, 1e-12);
    Ok(c_tilde(a) * (x - y).abs().powf(a - 1.0) * core)
}

/// `d/dx` of [`interval_green`]; singular on the diagonal.
pub fn interval_green_dx(x: f64, y: f64, p: &FracParams) -> Result<f64, KernelError> {
    check_interval_args(x, y, p)?;
    if x == y {
        return Err(KernelError::DiagonalDerivative);
    }
    let a = p.alpha;
    let ct = c_tilde(a);
    let w = interval_w(x, y);
    let dw_dx = (2.0 * x * y - 2.0) * (1.0 - y * y) / (x - y).powi(3);
    if a <= 1.0 {
        // Differentiate |x-y|^{a-1} * F(w) directly; for a = 1 the first term
        // vanishes and this reduces to the closed form for the log kernel.
        let core = green_core_integral(w, a, 1e-12);
        let g_w = w.powf(a / 2.0 - 1.0) / (w + 1.0).sqrt();
        let sgn = if x > y { 1.0 } else { -1.0 };
        let term1 = (a - 1.0) * (x - y).abs().powf(a - 2.0) * sgn * core;
        let term2 = (x - y).abs().powf(a - 1.0) * g_w * dw_dx;
        Ok(ct * (term1 + term2))
    } else {
        // Substituted form: G = ct * int_0^{(1-x^2)(1-y^2)} t^{a/2-1} (t+d^2)^{-1/2} dt.
        let d = x - y;
        let prod = (1.0 - x * x) * (1.0 - y * y);
        let boundary = -2.0 * x * (1.0 - y * y) * prod.powf(a / 2.0 - 1.0)
            / (prod + d * d).sqrt();
        let e = 2.0 / a;
        let upper = prod.powf(a / 2.0);
        let tail_int = (2.0 / a)
            * integrate_scaled(
                |s| (s.powf(e) + d * d).powf(-1.5),
                0.0,
                upper,
                1e-12,
            );
        Ok(ct * (boundary + (y - x) * tail_int))
    }
}

/// Scale factor of the expected ball exit time:
/// `Gamma(N/2) / (2^a Gamma(1+a/2) Gamma((N+a)/2))`.
///
/// The 1D value is pinned by the Green-mass identity
/// `E^x tau = int G(x, .)` in the test suite; the `N`-dependence is reused
/// from the same closed form and cross-checked by the radius-scaling law.
pub fn exit_time_constant(p: &FracParams) -> f64 {
    let a = p.alpha;
    let n = p.dim as f64;
    gamma(n / 2.0) / (2f64.powf(a) * gamma(1.0 + a / 2.0) * gamma((n + a) / 2.0))
}

/// Expected exit time of the ball `B_r(center)` for the process started at
/// `x`, i.e. `C_{N,a} (r^2 - |x-center|^2)^{a/2}`.
pub fn expected_exit_time_ball(
    x: Point,
    center: Point,
    r: f64,
    p: &FracParams,
) -> Result<f64, KernelError> {
    let d2 = (x - center).norm_sq();
    if d2 > r * r {
        return Err(KernelError::OutsideBall);
    }
    Ok(exit_time_constant(p) * (r * r - d2).max(0.0).powf(p.alpha / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fp(alpha: f64, dim: u32) -> FracParams {
        FracParams::new(alpha, dim).unwrap()
    }

    #[test]
    fn frac_constant_matches_gamma_formula() {
        // alpha=1, N=1: 1/pi.
        assert_relative_eq!(
            frac_constant(&fp(1.0, 1)),
            1.0 / std::f64::consts::PI,
            max_relative = 1e-14
        );
        // alpha=1, N=2: 1/(2 pi).
        assert_relative_eq!(
            frac_constant(&fp(1.0, 2)),
            1.0 / (2.0 * std::f64::consts::PI),
            max_relative = 1e-14
        );
        // factor (2 - alpha) vanishes in the limit alpha -> 2.
        assert!(frac_constant(&fp(2.0 - 1e-12, 1)) < 1e-11);
    }

    #[test]
    fn riesz_constant_values_and_regime() {
        let pi = std::f64::consts::PI;
        assert_relative_eq!(
            riesz_constant(&fp(1.0, 2)).unwrap(),
            1.0 / (2.0 * pi),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            riesz_constant(&fp(1.0, 3)).unwrap(),
            1.0 / (2.0 * pi * pi),
            max_relative = 1e-14
        );
        assert!(matches!(
            riesz_constant(&fp(1.0, 1)),
            Err(KernelError::CompensatedRegime { .. })
        ));
    }

    #[test]
    fn kernel_dispatch_and_values() {
        // log kernel vanishes at radius 1
        assert_eq!(kernel_kind(&fp(1.0, 1)), KernelKind::CompensatedLog);
        assert_relative_eq!(kernel(&fp(1.0, 1), 1.0).unwrap(), 0.0);
        // compensated kernel is negative for alpha in (1,2)
        assert_eq!(kernel_kind(&fp(1.5, 1)), KernelKind::CompensatedSub);
        assert_relative_eq!(
            kernel(&fp(1.5, 1), 1.0).unwrap(),
            -0.7978845608028654,
            max_relative = 1e-12
        );
        // Riesz kernel: C_{2,1}/2 at radius 2
        assert_eq!(kernel_kind(&fp(1.0, 2)), KernelKind::Riesz);
        assert_relative_eq!(
            kernel(&fp(1.0, 2), 2.0).unwrap(),
            1.0 / (4.0 * std::f64::consts::PI),
            max_relative = 1e-13
        );
        // N=1, alpha<1 is the Riesz case
        assert_eq!(kernel_kind(&fp(0.5, 1)), KernelKind::Riesz);
        assert!(kernel(&fp(1.0, 2), 0.0).is_err());
    }

    #[test]
    fn interval_green_against_log_closed_form() {
        // alpha = 1: G = (1/pi) ln(sqrt(w) + sqrt(1+w))
        let p = fp(1.0, 1);
        for &(x, y) in &[(0.0, 0.5), (-0.3, 0.7), (0.2, 0.25), (0.9, -0.9)] {
            let w = interval_w(x, y);
            let exact = (w.sqrt() + (1.0 + w).sqrt()).ln() / std::f64::consts::PI;
            assert_relative_eq!(interval_green(x, y, &p).unwrap(), exact, epsilon = 1e-10);
        }
        assert_relative_eq!(
            interval_green(0.0, 0.5, &p).unwrap(),
            0.41920071827898273,
            epsilon = 1e-9
        );
    }

    #[test]
    fn interval_green_diagonal_conventions() {
        assert!(interval_green(0.3, 0.3, &fp(1.0, 1)).unwrap().is_infinite());
        assert!(interval_green(0.3, 0.3, &fp(0.5, 1)).unwrap().is_infinite());
        let diag = interval_green(0.0, 0.0, &fp(1.5, 1)).unwrap();
        assert_relative_eq!(diag, 0.9417755404437489, epsilon = 1e-12);
        // off-diagonal values approach the diagonal one at the Hoelder rate
        // |x - y|^{alpha - 1}
        let near = interval_green(0.0, 1e-7, &fp(1.5, 1)).unwrap();
        assert_relative_eq!(near, diag, epsilon = 1e-3);
        let nearer = interval_green(0.0, 1e-11, &fp(1.5, 1)).unwrap();
        assert!((nearer - diag).abs() < (near - diag).abs());
    }

    #[test]
    fn interval_green_boundary_decay() {
        let p = fp(1.0, 1);
        for &y in &[-0.4f64, 0.0, 0.55] {
            let mut prev = interval_green(0.9, y.max(-0.85), &p).unwrap_or(f64::INFINITY);
            let mut x = 0.902;
            while x < 0.9995 {
                let v = interval_green(x, y, &p).unwrap();
                assert!(v <= prev + 1e-12, "not decaying at x={x}, y={y}");
                assert!(v > 0.0);
                prev = v;
                x += 0.002;
            }
            assert!(prev < 0.05, "G({x}, {y}) = {prev} has not decayed");
        }
    }

    #[test]
    fn interval_green_dx_matches_finite_differences() {
        let mut worst: f64 = 0.0;
        for &alpha in &[0.5, 1.0, 1.5] {
            let p = fp(alpha, 1);
            let mut s = 0x9e3779b97f4a7c15u64;
            let mut rngf = move || {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s >> 11) as f64 / (1u64 << 53) as f64
            };
            for _ in 0..100 {
                let x = -0.95 + 1.9 * rngf();
                let mut y = -0.95 + 1.9 * rngf();
                if (x - y).abs() < 0.05 {
                    y = if y < x { x - 0.06 } else { x + 0.06 };
                    if y.abs() >= 0.95 {
                        continue;
                    }
                }
                let h = 1e-5;
                let fd = (interval_green(x + h, y, &p).unwrap()
                    - interval_green(x - h, y, &p).unwrap())
                    / (2.0 * h);
                let dx = interval_green_dx(x, y, &p).unwrap();
                worst = worst.max((fd - dx).abs());
            }
        }
        assert!(worst < 1e-6, "worst FD mismatch {worst}");
    }

    #[test]
    fn interval_green_dx_sign_pattern() {
        // increasing left of y, decreasing right of y (alpha = 1)
        let p = fp(1.0, 1);
        assert!(interval_green_dx(0.2, 0.5, &p).unwrap() > 0.0);
        assert!(interval_green_dx(0.8, 0.5, &p).unwrap() < 0.0);
    }

    #[test]
    fn exit_time_matches_green_mass_in_1d() {
        // E^x tau = int_{-1}^1 G(x,y) dy, computed by quadrature of
        // interval_green; this pins the exit-time constant.
        for &alpha in &[0.5, 1.0, 1.5] {
            let p = fp(alpha, 1);
            for &x in &[0.0f64, 0.4] {
                // substitute t = sqrt(|y - x|) on each side of the pole so
                // the integrand is bounded there
                // lower limit sits above the ulp scale of x so x + t^2 != x
                let right = crate::quadrature::adaptive_simpson(
                    |t| 2.0 * t * interval_green(x, x + t * t, &p).unwrap(),
                    1e-7,
                    (1.0 - x).sqrt() - 1e-10,
                    1e-9,
                );
                let left = crate::quadrature::adaptive_simpson(
                    |t| 2.0 * t * interval_green(x, x - t * t, &p).unwrap(),
                    1e-7,
                    (1.0 + x).sqrt() - 1e-10,
                    1e-9,
                );
                let mass = left + right;
                let et =
                    expected_exit_time_ball(Point::x1d(x), Point::ZERO, 1.0, &p).unwrap();
                assert_relative_eq!(mass, et, epsilon = 2e-6);
            }
        }
    }

    #[test]
    fn exit_time_scaling_and_edges() {
        let p = fp(1.3, 2);
        let at_r = expected_exit_time_ball(Point::ZERO, Point::ZERO, 1.0, &p).unwrap();
        let at_2r = expected_exit_time_ball(Point::ZERO, Point::ZERO, 2.0, &p).unwrap();
        assert_relative_eq!(at_2r / at_r, 2f64.powf(1.3), max_relative = 1e-12);
        // boundary start exits immediately
        let b = expected_exit_time_ball(Point::new(1.0, 0.0), Point::ZERO, 1.0, &p).unwrap();
        assert_eq!(b, 0.0);
        assert!(expected_exit_time_ball(Point::new(1.5, 0.0), Point::ZERO, 1.0, &p).is_err());
    }

    proptest! {
        #[test]
        fn green_symmetry_and_positivity(
            x in -0.99f64..0.99,
            y in -0.99f64..0.99,
            ai in 1usize..4,
        ) {
            let alpha = [0.5, 1.0, 1.5][ai - 1];
            let p = fp(alpha, 1);
            let gxy = interval_green(x, y, &p).unwrap();
            let gyx = interval_green(y, x, &p).unwrap();
            if gxy.is_finite() {
                prop_assert!((gxy - gyx).abs() <= 1e-12 * gxy.abs().max(1.0));
                prop_assert!(gxy > 0.0);
            }
        }
    }
}
