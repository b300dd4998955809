//! Numerical toolkit for nonlocal Dirichlet problems on star-shaped ring
//! domains.
//!
//! The crate bundles three independent routes to the same solutions —
//! closed-form kernels ([`kernels`]), a lattice collocation solver
//! ([`solver`]), and a walk-on-spheres Monte Carlo estimator ([`wos`]) —
//! together with the geometric machinery ([`geometry`], [`analysis`]) that
//! checks star-shapedness of superlevel sets of the computed fields.

pub mod analysis;
pub mod conditions;
pub mod data;
pub mod fracop;
pub mod geometry;
pub mod kernels;
pub mod point;
pub mod quadrature;
pub mod rng;
pub mod solver;
pub mod wos;

pub use kernels::FracParams;
pub use point::Point;
