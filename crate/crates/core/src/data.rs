//! Named scalar data functions used for exterior values, sources, and
//! potentials. Each variant is serializable so problem configurations can
//! reference it by name; `Custom` exists for in-process use only.

use crate::point::Point;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum DataFn {
    Zero,
    One,
    Constant {
        value: f64,
    },
    /// `peak * max(0, 1 - |x|/radius)`.
    RadialCone {
        peak: f64,
        radius: f64,
    },
    /// `1 + extra * max(0, 1 - |x|/radius)`; equals 1 on `|x| = radius`.
    OnePlusRadialCone {
        extra: f64,
        radius: f64,
    },
    /// `coeff * |x|^power`.
    RadialPower {
        coeff: f64,
        power: f64,
    },
    /// `exp(-rate * |x|)`.
    ExpRadialDecay {
        rate: f64,
    },
    /// `amp * exp(-|x|^2 / width^2)`.
    GaussianBump {
        amp: f64,
        width: f64,
    },
    /// Indicator of `lo <= |x| < hi`.
    RadialIndicator {
        lo: f64,
        hi: f64,
    },
    #[serde(skip)]
    Custom {
        f: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
        far_value: f64,
    },
}

impl fmt::Debug for DataFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataFn::Zero => write!(f, "Zero"),
            DataFn::One => write!(f, "One"),
            DataFn::Constant { value } => write!(f, "Constant({value})"),
            DataFn::RadialCone { peak, radius } => write!(f, "RadialCone({peak},{radius})"),
            DataFn::OnePlusRadialCone { extra, radius } => {
                write!(f, "OnePlusRadialCone({extra},{radius})")
            }
            DataFn::RadialPower { coeff, power } => write!(f, "RadialPower({coeff},{power})"),
            DataFn::ExpRadialDecay { rate } => write!(f, "ExpRadialDecay({rate})"),
            DataFn::GaussianBump { amp, width } => write!(f, "GaussianBump({amp},{width})"),
            DataFn::RadialIndicator { lo, hi } => write!(f, "RadialIndicator({lo},{hi})"),
            DataFn::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl DataFn {
    pub fn eval(&self, p: Point) -> f64 {
        match self {
            DataFn::Zero => 0.0,
            DataFn::One => 1.0,
            DataFn::Constant { value } => *value,
            DataFn::RadialCone { peak, radius } => peak * (1.0 - p.norm() / radius).max(0.0),
            DataFn::OnePlusRadialCone { extra, radius } => {
                1.0 + extra * (1.0 - p.norm() / radius).max(0.0)
            }
            DataFn::RadialPower { coeff, power } => coeff * p.norm().powf(*power),
            DataFn::ExpRadialDecay { rate } => (-rate * p.norm()).exp(),
            DataFn::GaussianBump { amp, width } => amp * (-p.norm_sq() / (width * width)).exp(),
            DataFn::RadialIndicator { lo, hi } => {
                let r = p.norm();
                if r >= *lo && r < *hi {
                    1.0
                } else {
                    0.0
                }
            }
            DataFn::Custom { f, .. } => f(p),
        }
    }

    /// The value the function settles to far from the origin; used for the
    /// analytic far-field terms.
    pub fn far_value(&self) -> f64 {
        match self {
            DataFn::Zero => 0.0,
            DataFn::One => 1.0,
            DataFn::Constant { value } => *value,
            DataFn::RadialCone { .. } => 0.0,
            DataFn::OnePlusRadialCone { .. } => 1.0,
            DataFn::RadialPower { coeff, power } => {
                if *power == 0.0 {
                    *coeff
                } else {
                    // unbounded growth is the caller's responsibility
                    0.0
                }
            }
            DataFn::ExpRadialDecay { .. } => 0.0,
            DataFn::GaussianBump { .. } => 0.0,
            DataFn::RadialIndicator { .. } => 0.0,
            DataFn::Custom { far_value, .. } => *far_value,
        }
    }

    pub fn custom(f: impl Fn(Point) -> f64 + Send + Sync + 'static, far_value: f64) -> Self {
        DataFn::Custom {
            f: Arc::new(f),
            far_value,
        }
    }
}
