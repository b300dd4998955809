//! Plane points shared by the geometry, solver, and Monte Carlo modules.
//!
//! One-dimensional problems embed into the plane with `y = 0`, so every
//! module works with the same type regardless of the ambient dimension.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ZERO: Point = Point { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    /// A 1D coordinate embedded in the plane.
    #[inline]
    pub const fn x1d(x: f64) -> Self {
        Point { x, y: 0.0 }
    }

    #[inline]
    pub fn dot(self, rhs: Point) -> f64 {
        self.x * rhs.x + self.y * rhs.y
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn theta(self) -> f64 {
        self.y.atan2(self.x)
    }

    #[inline]
    pub fn from_polar(r: f64, theta: f64) -> Self {
        Point::new(r * theta.cos(), r * theta.sin())
    }
}

impl Add for Point {
    type Output = Point;
    #[inline]
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    #[inline]
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    #[inline]
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Neg for Point {
    type Output = Point;
    #[inline]
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}
