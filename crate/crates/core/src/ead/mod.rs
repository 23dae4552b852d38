//! The elliptical active disc.
//!
//! A unit template of two concentric circles (inner radius 1, outer radius
//! √2, so the annulus and the inner disc have equal area) is mapped into the
//! image by
//!
//! ```text
//! X = A cosθ · x + B sinθ · y + xc
//! Y = −A sinθ · x + B cosθ · y + yc
//! ```
//!
//! so `A` and `B` are the semi-axes of the inner ellipse. The contrast energy
//! `E = (E1 − 2·E2) / (A·B)` compares the integral of the image over the
//! outer region `R1` with twice the integral over the inner region `R2`; it is
//! `−π·c` when a bright region of contrast `c` exactly fills the inner
//! ellipse. Fitting minimizes `E` by gradient descent.
//!
//! See `DERIVATIONS.md` at the repository root for the gradient formulas.

mod descent;
mod field;
mod shape;

pub use descent::{fit, DescentConfig, FitTrace, StepSizes, Termination};
pub use field::{energy, energy_pixelsum, gradient, EnergyField};
pub use shape::{boundary_points, contour, rasterize, BoundaryPoint};

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

/// The five free parameters of the disc.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscParams {
    pub a: f64,
    pub b: f64,
    pub theta: f64,
    pub xc: f64,
    pub yc: f64,
}

impl DiscParams {
    /// Builds parameters with `theta` reduced into `[0, π)`.
    pub fn new(a: f64, b: f64, theta: f64, xc: f64, yc: f64) -> Self {
        Self {
            a,
            b,
            theta: normalize_angle(theta),
            xc,
            yc,
        }
    }

    pub fn circle(radius: f64, xc: f64, yc: f64) -> Self {
        Self::new(radius, radius, 0.0, xc, yc)
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.a, self.b, self.theta, self.xc, self.yc]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        Self {
            a: v[0],
            b: v[1],
            theta: v[2],
            xc: v[3],
            yc: v[4],
        }
    }

    /// Area of the inner ellipse, `π·A·B`.
    pub fn inner_area(&self) -> f64 {
        PI * self.a * self.b
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Reduces an angle into `[0, π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    // rem_euclid can round up to exactly π
    if t >= PI {
        0.0
    } else {
        t
    }
}

/// Allowed range for the semi-axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisBounds {
    pub min: f64,
    pub max: f64,
}

impl AxisBounds {
    /// Default bounds for an image: `[2, min(width, height) / 2]`.
    pub fn for_image(width: usize, height: usize) -> Self {
        Self {
            min: 2.0,
            max: (width.min(height) as f64 / 2.0).max(2.0),
        }
    }

    pub fn contains(&self, p: &DiscParams) -> bool {
        (self.min..=self.max).contains(&p.a) && (self.min..=self.max).contains(&p.b)
    }

    /// Clamps the axes into bounds and reduces `theta` into `[0, π)`.
    pub fn project(&self, p: DiscParams) -> DiscParams {
        DiscParams {
            a: p.a.clamp(self.min, self.max),
            b: p.b.clamp(self.min, self.max),
            theta: normalize_angle(p.theta),
            xc: p.xc,
            yc: p.yc,
        }
    }
}

/// Inner or outer boundary of the disc.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ring {
    Inner,
    Outer,
}

impl Ring {
    /// Template radius: 1 for the inner circle, √2 for the outer.
    pub fn radius(self) -> f64 {
        match self {
            Ring::Inner => DiscTemplate::R_INNER,
            Ring::Outer => DiscTemplate::R_OUTER,
        }
    }
}

/// Template geometry plus the boundary sampling policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiscTemplate {
    /// `max(min, ceil(2π·√2·max(A, B)))`: about one sample per pixel of the
    /// outer perimeter.
    Adaptive {
        min: usize,
    },
    Fixed {
        n: usize,
    },
}

impl Default for DiscTemplate {
    fn default() -> Self {
        DiscTemplate::Adaptive { min: 64 }
    }
}

impl DiscTemplate {
    pub const R_INNER: f64 = 1.0;
    pub const R_OUTER: f64 = SQRT_2;

    pub fn n_samples(&self, p: &DiscParams) -> usize {
        match *self {
            DiscTemplate::Adaptive { min } => {
                let n = (2.0 * PI * SQRT_2 * p.a.max(p.b)).ceil();
                if n.is_finite() {
                    (n as usize).max(min).max(8)
                } else {
                    min.max(8)
                }
            }
            DiscTemplate::Fixed { n } => n.max(8),
        }
    }
}

/// `E` and its two region integrals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub e: f64,
    /// Integral of the image over the outer region.
    pub e1: f64,
    /// Integral of the image over the inner region.
    pub e2: f64,
}

impl EnergyBreakdown {
    pub(crate) fn from_parts(e1: f64, e2: f64, p: &DiscParams) -> Self {
        Self {
            e: (e1 - 2.0 * e2) / (p.a * p.b),
            e1,
            e2,
        }
    }
}

/// Partial derivatives of `E`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Gradient {
    pub d_a: f64,
    pub d_b: f64,
    pub d_theta: f64,
    pub d_xc: f64,
    pub d_yc: f64,
}

impl Gradient {
    pub fn to_array(self) -> [f64; 5] {
        [self.d_a, self.d_b, self.d_theta, self.d_xc, self.d_yc]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        Self {
            d_a: v[0],
            d_b: v[1],
            d_theta: v[2],
            d_xc: v[3],
            d_yc: v[4],
        }
    }

    pub fn clipped(self, limit: f64) -> Self {
        Self::from_array(self.to_array().map(|g| g.clamp(-limit, limit)))
    }
}
