//! Executable checkers for the structural conditions on nonlinearities
//! (monotonicity, Lipschitz bounds, scaling inequalities, sign conditions),
//! the radial-monotonicity condition on Schrödinger potentials, and
//! constructors for the named nonlinearities.
//!
//! All checks sample the admissible set with a deterministic low-discrepancy
//! (Halton) sequence, report the worst margin of the defining inequality, and
//! attach a witness on failure. Sampling can falsify a condition but not
//! prove it; reports carry sample counts for that reason.

use crate::data::DataFn;
use crate::geometry::RingDomain;
use crate::kernels::FracParams;
use crate::point::Point;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConditionError {
    #[error("invalid nonlinearity parameters: {0}")]
    InvalidParams(String),
}

/// A nonlinearity `f(x, u)` on the ring cross `[0, 1]`.
#[derive(Clone)]
pub struct NonlinearitySpec {
    pub f: Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>,
    pub declared_lipschitz: Option<f64>,
    pub label: String,
}

impl fmt::Debug for NonlinearitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NonlinearitySpec({})", self.label)
    }
}

impl NonlinearitySpec {
    pub fn new(
        f: impl Fn(Point, f64) -> f64 + Send + Sync + 'static,
        declared_lipschitz: Option<f64>,
        label: impl Into<String>,
    ) -> Self {
        NonlinearitySpec {
            f: Arc::new(f),
            declared_lipschitz,
            label: label.into(),
        }
    }

    #[inline]
    pub fn eval(&self, x: Point, u: f64) -> f64 {
        (self.f)(x, u)
    }

    pub fn zero() -> Self {
        NonlinearitySpec::new(|_, _| 0.0, Some(0.0), "zero")
    }
}

/// Hypothesis flags of the two bistable-nonlinearity cases.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllenCahnFlags {
    /// `beta >= gamma`.
    pub case_i: bool,
    /// `beta >= p * gamma`.
    pub case_ii: bool,
}

/// `f(x, u) = beta u - gamma u^p` with `beta >= 0`, `p >= 1`, together with
/// the case flags and the Lipschitz constant `beta + |gamma| p` on `[0,1]`.
pub fn make_allen_cahn(
    beta: f64,
    gamma: f64,
    p: f64,
) -> Result<(NonlinearitySpec, AllenCahnFlags), ConditionError> {
    if beta < 0.0 {
        return Err(ConditionError::InvalidParams(format!(
            "beta must be nonnegative, got {beta}"
        )));
    }
    if p < 1.0 {
        return Err(ConditionError::InvalidParams(format!(
            "exponent must be at least 1, got {p}"
        )));
    }
    let spec = NonlinearitySpec::new(
        move |_x, u| beta * u - gamma * u.powf(p),
        Some(beta + gamma.abs() * p),
        format!("allen_cahn(beta={beta}, gamma={gamma}, p={p})"),
    );
    Ok((
        spec,
        AllenCahnFlags {
            case_i: beta >= gamma,
            case_ii: beta >= p * gamma,
        },
    ))
}

/// The structural conditions on `f` that the checkers understand.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    /// `t^a f(tx, u) >= f(x, u)` wherever both points lie in the ring.
    F1,
    /// Lipschitz in `u`; the sampled constant must not exceed the declared one.
    F2,
    /// Increasing in `u`.
    F3,
    /// `f(x, 0) = 0`.
    F4,
    /// `f >= 0`.
    F5,
    /// `<x, grad_x f(x,u)> >= 0`.
    F6,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Sampling controls: the number of quasi-random base points, the `t` grid
/// for the scaling condition, and a bounding radius for unbounded rings.
#[derive(Clone, Debug)]
pub struct SamplePlan {
    pub n_samples: usize,
    pub t_grid: Vec<f64>,
    pub bounding_radius: f64,
}

impl Default for SamplePlan {
    fn default() -> Self {
        SamplePlan {
            n_samples: 10_000,
            t_grid: vec![1.01, 1.1, 1.25, 1.5, 2.0],
            bounding_radius: 8.0,
        }
    }
}

/// Worst sample of a condition check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionWitness {
    pub x: Point,
    pub u: f64,
    pub t: Option<f64>,
}

/// Outcome of one condition check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: String,
    pub pass: bool,
    /// Minimal margin of the defining inequality over the samples (for F2:
    /// declared constant minus sampled constant).
    pub margin: f64,
    pub witness: Option<ConditionWitness>,
    pub samples_used: usize,
    pub notes: Vec<String>,
}

impl ConditionReport {
    fn new(condition: impl Into<String>) -> Self {
        ConditionReport {
            condition: condition.into(),
            pass: true,
            margin: f64::INFINITY,
            witness: None,
            samples_used: 0,
            notes: Vec::new(),
        }
    }

    fn record(&mut self, margin: f64, witness: ConditionWitness) {
        if margin < self.margin {
            self.margin = margin;
            self.witness = Some(witness);
        }
    }

    fn finish(mut self, tol: f64) -> Self {
        if self.margin == f64::INFINITY {
            self.margin = 0.0;
            self.notes
                .push("empty admissible sample set; nothing checked".into());
            self.pass = true;
            self.witness = None;
            return self;
        }
        self.pass = self.margin >= -tol;
        if self.pass {
            self.witness = None;
        }
        self
    }
}

fn halton(index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index + 1;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Quasi-random points of the ring (paired with a `u` coordinate), produced
/// deterministically.
fn ring_samples(ring: &RingDomain, dim: u32, plan: &SamplePlan) -> Vec<(Point, f64)> {
    let r_max = ring
        .max_outer_radius()
        .unwrap_or(plan.bounding_radius)
        .min(plan.bounding_radius);
    let mut out = Vec::with_capacity(plan.n_samples);
    let mut k = 0usize;
    let mut tried = 0usize;
    while out.len() < plan.n_samples && tried < 64 * plan.n_samples {
        let u = halton(k, 2);
        let p = if dim == 1 {
            let x = r_max * (2.0 * halton(k, 3) - 1.0);
            Point::x1d(x)
        } else {
            let theta = 2.0 * std::f64::consts::PI * halton(k, 3);
            // area-uniform radial coordinate
            let r = r_max * halton(k, 5).sqrt();
            Point::from_polar(r, theta)
        };
        k += 1;
        tried += 1;
        if ring.contains_ring(p) {
            out.push((p, u));
        }
    }
    out
}

const FD_GRAD_STEP: f64 = 1e-5;

fn grad_x(f: &NonlinearitySpec, x: Point, u: f64, dim: u32) -> Point {
    let h = FD_GRAD_STEP * (1.0 + x.norm());
    let dx = (f.eval(x + Point::new(h, 0.0), u) - f.eval(x - Point::new(h, 0.0), u)) / (2.0 * h);
    let dy = if dim == 2 {
        (f.eval(x + Point::new(0.0, h), u) - f.eval(x - Point::new(0.0, h), u)) / (2.0 * h)
    } else {
        0.0
    };
    Point::new(dx, dy)
}

/// Samples the defining inequality of `which` over the ring cross `[0,1]`
/// (cross the `t` grid for the scaling condition) and reports the worst
/// margin.
pub fn check_condition(
    f: &NonlinearitySpec,
    ring: &RingDomain,
    params: &FracParams,
    which: Condition,
    plan: &SamplePlan,
) -> ConditionReport {
    let dim = params.dim();
    let alpha = params.alpha();
    let samples = ring_samples(ring, dim, plan);
    let mut report = ConditionReport::new(which.to_string());
    report.samples_used = samples.len();
    if samples.is_empty() {
        report
            .notes
            .push("no ring samples found; check the domain".into());
        return report.finish(0.0);
    }
    match which {
        Condition::F1 => {
            let mut admissible = 0usize;
            for &(x, u) in &samples {
                for &t in &plan.t_grid {
                    if t < 1.0 {
                        continue;
                    }
                    let tx = x * t;
                    if !ring.contains_ring(tx) {
                        continue;
                    }
                    admissible += 1;
                    let margin = t.powf(alpha) * f.eval(tx, u) - f.eval(x, u);
                    report.record(
                        margin,
                        ConditionWitness {
                            x,
                            u,
                            t: Some(t),
                        },
                    );
                }
            }
            if admissible == 0 {
                report
                    .notes
                    .push("no admissible (x, t) pairs: every t x left the ring".into());
            }
            if ring.outer.is_none() {
                report.notes.push(format!(
                    "outer body is the whole space; admissible set truncated to |x| <= {}",
                    plan.bounding_radius
                ));
            }
            report.samples_used = admissible;
            report.finish(1e-12)
        }
        Condition::F2 => {
            let mut estimate = 0.0f64;
            let mut witness = None;
            for (k, &(x, u)) in samples.iter().enumerate() {
                let u2 = halton(k, 7);
                if (u - u2).abs() < 1e-9 {
                    continue;
                }
                let slope = (f.eval(x, u) - f.eval(x, u2)).abs() / (u - u2).abs();
                if slope > estimate {
                    estimate = slope;
                    witness = Some(ConditionWitness { x, u, t: None });
                }
            }
            report.notes.push(format!("sampled lipschitz estimate {estimate}"));
            match f.declared_lipschitz {
                Some(declared) => {
                    report.margin = declared - estimate;
                    report.pass = estimate <= declared + 1e-9;
                    if !report.pass {
                        report.witness = witness;
                    }
                }
                None => {
                    report.margin = -estimate;
                    report.pass = true;
                    report
                        .notes
                        .push("no declared constant; estimate reported only".into());
                }
            }
            report
        }
        Condition::F3 => {
            for (k, &(x, u)) in samples.iter().enumerate() {
                let u2 = halton(k, 7);
                let (lo, hi) = if u <= u2 { (u, u2) } else { (u2, u) };
                if hi - lo < 1e-9 {
                    continue;
                }
                let margin = f.eval(x, hi) - f.eval(x, lo);
                report.record(margin, ConditionWitness { x, u: lo, t: None });
            }
            report.finish(1e-12)
        }
        Condition::F4 => {
            for &(x, _) in &samples {
                let margin = -f.eval(x, 0.0).abs();
                report.record(margin, ConditionWitness { x, u: 0.0, t: None });
            }
            report.finish(1e-12)
        }
        Condition::F5 => {
            for &(x, u) in &samples {
                report.record(f.eval(x, u), ConditionWitness { x, u, t: None });
            }
            report.finish(1e-12)
        }
        Condition::F6 => {
            for &(x, u) in &samples {
                let g = grad_x(f, x, u, dim);
                report.record(x.dot(g), ConditionWitness { x, u, t: None });
            }
            // finite differences leave noise of order h^2 plus cancellation
            report.finish(1e-7)
        }
    }
}

/// Checks the implication "nonnegative and radially nondecreasing implies the
/// scaling inequality": wherever the sign and radial-gradient conditions hold
/// along the whole segment from `x` to `t x`, the scaling inequality must
/// hold at `(x, u, t)`. Reports any counterexample; if the preconditions fail
/// globally, says so instead of claiming anything.
pub fn verify_remark_f5f6(
    f: &NonlinearitySpec,
    ring: &RingDomain,
    params: &FracParams,
    plan: &SamplePlan,
) -> ConditionReport {
    let dim = params.dim();
    let alpha = params.alpha();
    let mut report = ConditionReport::new("F5F6_implies_F1");
    let f5 = check_condition(f, ring, params, Condition::F5, plan);
    let f6 = check_condition(f, ring, params, Condition::F6, plan);
    if !f5.pass || !f6.pass {
        report.pass = true;
        report.margin = 0.0;
        report.notes.push(format!(
            "precondition not met (F5 pass: {}, F6 pass: {}); implication not claimed",
            f5.pass, f6.pass
        ));
        return report;
    }
    let samples = ring_samples(ring, dim, plan);
    let mut checked = 0usize;
    let seg_steps = 8;
    for &(x, u) in &samples {
        for &t in &plan.t_grid {
            if t < 1.0 {
                continue;
            }
            let tx = x * t;
            if !ring.contains_ring(tx) {
                continue;
            }
            // preconditions along the segment, with positive margin
            let mut pre_ok = true;
            for s_idx in 0..=seg_steps {
                let s = 1.0 + (t - 1.0) * s_idx as f64 / seg_steps as f64;
                let xs = x * s;
                if !ring.contains_ring(xs) {
                    pre_ok = false;
                    break;
                }
                if f.eval(xs, u) < -1e-12 || xs.dot(grad_x(f, xs, u, dim)) < -1e-7 {
                    pre_ok = false;
                    break;
                }
            }
            if !pre_ok {
                continue;
            }
            checked += 1;
            let margin = t.powf(alpha) * f.eval(tx, u) - f.eval(x, u);
            report.record(
                margin,
                ConditionWitness {
                    x,
                    u,
                    t: Some(t),
                },
            );
        }
    }
    report.samples_used = checked;
    report
        .notes
        .push(format!("{checked} admissible samples with preconditions held"));
    report.finish(1e-9)
}

/// Nonnegativity and outward monotonicity `q(t x) >= q(x)` of a potential,
/// sampled over the ring.
pub fn check_schrodinger_q(
    q: &DataFn,
    ring: &RingDomain,
    params: &FracParams,
    plan: &SamplePlan,
) -> ConditionReport {
    let dim = params.dim();
    let mut report = ConditionReport::new("schrodinger_q");
    let samples = ring_samples(ring, dim, plan);
    report.samples_used = samples.len();
    for &(x, u) in &samples {
        report.record(q.eval(x), ConditionWitness { x, u, t: None });
        for &t in &plan.t_grid {
            if t <= 1.0 {
                continue;
            }
            // the admissible set is x in (t^{-1} outer) minus the inner closure
            let tx = x * t;
            if !ring.contains_ring(tx) {
                continue;
            }
            report.record(
                q.eval(tx) - q.eval(x),
                ConditionWitness {
                    x,
                    u,
                    t: Some(t),
                },
            );
        }
    }
    report.finish(1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::StarDomain;

    fn annulus() -> RingDomain {
        RingDomain::new(
            Some(StarDomain::ball(Point::ZERO, 1.0).unwrap()),
            Some(StarDomain::ball(Point::ZERO, 0.3).unwrap()),
        )
        .unwrap()
    }

    fn fp2() -> FracParams {
        FracParams::new(1.0, 2).unwrap()
    }

    #[test]
    fn zero_nonlinearity_passes_everything() {
        let f = NonlinearitySpec::zero();
        let ring = annulus();
        let plan = SamplePlan {
            n_samples: 500,
            ..SamplePlan::default()
        };
        for which in [
            Condition::F1,
            Condition::F2,
            Condition::F3,
            Condition::F4,
            Condition::F5,
            Condition::F6,
        ] {
            let rep = check_condition(&f, &ring, &fp2(), which, &plan);
            assert!(rep.pass, "{which} failed: {rep:?}");
        }
    }

    #[test]
    fn allen_cahn_flags_and_conditions() {
        let (_, flags) = make_allen_cahn(1.0, 1.0, 2.0).unwrap();
        assert!(flags.case_i && !flags.case_ii);
        let (_, flags) = make_allen_cahn(2.0, 1.0, 2.0).unwrap();
        assert!(flags.case_i && flags.case_ii);
        let (f0, flags) = make_allen_cahn(0.0, 0.0, 1.0).unwrap();
        assert!(flags.case_i && flags.case_ii);
        assert_eq!(f0.eval(Point::ZERO, 0.7), 0.0);
        assert!(make_allen_cahn(-0.1, 0.0, 1.0).is_err());
        assert!(make_allen_cahn(1.0, 0.0, 0.5).is_err());

        // with case_ii true, the theorem-hypothesis conditions hold on a ring
        let (f, flags) = make_allen_cahn(0.5, 0.25, 2.0).unwrap();
        assert!(flags.case_ii);
        let ring = annulus();
        let plan = SamplePlan {
            n_samples: 1500,
            ..SamplePlan::default()
        };
        for which in [Condition::F1, Condition::F2, Condition::F3, Condition::F4] {
            let rep = check_condition(&f, &ring, &fp2(), which, &plan);
            assert!(rep.pass, "{which} failed: {rep:?}");
        }
    }

    #[test]
    fn decreasing_in_u_fails_f3_with_witness() {
        let f = NonlinearitySpec::new(|_, u| -u, Some(1.0), "minus_u");
        let rep = check_condition(
            &f,
            &annulus(),
            &fp2(),
            Condition::F3,
            &SamplePlan {
                n_samples: 300,
                ..SamplePlan::default()
            },
        );
        assert!(!rep.pass);
        assert!(rep.witness.is_some());
        assert!(rep.margin < 0.0);
    }

    #[test]
    fn lipschitz_estimate_respects_exact_declared_constant() {
        let (f, _) = make_allen_cahn(1.0, 1.0, 2.0).unwrap();
        let rep = check_condition(
            &f,
            &annulus(),
            &fp2(),
            Condition::F2,
            &SamplePlan {
                n_samples: 4000,
                ..SamplePlan::default()
            },
        );
        assert!(rep.pass, "{rep:?}");
        assert!(rep.margin >= -1e-9);
    }

    #[test]
    fn remark_implication_holds_for_radial_increasing_f() {
        // f = |x|^2 u: the sign and radial conditions hold, so the scaling
        // inequality must too
        let f = NonlinearitySpec::new(|x: Point, u| x.norm_sq() * u, Some(1.0), "r2u");
        let rep = verify_remark_f5f6(&f, &annulus(), &fp2(), &SamplePlan {
            n_samples: 1000,
            ..SamplePlan::default()
        });
        assert!(rep.pass, "{rep:?}");
        assert!(rep.samples_used > 0);

        // constants: scaling margin is t^a - 1 >= 0
        let f1 = NonlinearitySpec::new(|_, _| 1.0, Some(0.0), "one");
        let rep = verify_remark_f5f6(&f1, &annulus(), &fp2(), &SamplePlan::default());
        assert!(rep.pass);

        // radially decreasing: precondition fails, implication not claimed
        let fd = NonlinearitySpec::new(|x: Point, u| (2.0 - x.norm()) * u, Some(2.0), "dec");
        let rep = verify_remark_f5f6(&fd, &annulus(), &fp2(), &SamplePlan::default());
        assert!(rep.pass);
        assert!(rep.notes.iter().any(|n| n.contains("precondition not met")));
    }

    #[test]
    fn schrodinger_q_monotonicity() {
        let ring = annulus();
        let plan = SamplePlan {
            n_samples: 2000,
            ..SamplePlan::default()
        };
        let ok = check_schrodinger_q(
            &DataFn::Constant { value: 0.5 },
            &ring,
            &fp2(),
            &plan,
        );
        assert!(ok.pass);
        let ok = check_schrodinger_q(
            &DataFn::RadialPower {
                coeff: 1.0,
                power: 2.0,
            },
            &ring,
            &fp2(),
            &plan,
        );
        assert!(ok.pass);
        let bad = check_schrodinger_q(&DataFn::ExpRadialDecay { rate: 1.0 }, &ring, &fp2(), &plan);
        assert!(!bad.pass);
        assert!(bad.witness.is_some());
    }

    #[test]
    fn f1_margins_are_deterministic() {
        let (f, _) = make_allen_cahn(0.5, 0.25, 2.0).unwrap();
        let ring = annulus();
        let plan = SamplePlan::default();
        let a = check_condition(&f, &ring, &fp2(), Condition::F1, &plan);
        let b = check_condition(&f, &ring, &fp2(), Condition::F1, &plan);
        assert_eq!(a.margin, b.margin);
        assert_eq!(a.samples_used, b.samples_used);
    }
}
