//! Two-dimensional conformal charts `h(x, y) (dx^2 + dy^2)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::RMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartPoint {
    pub x: f64,
    pub y: f64,
}

impl ChartPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

type ScalarField = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Conformal factor of a chart metric.
#[derive(Clone)]
pub enum ConformalFactor {
    /// `h = 1`.
    Flat,
    /// `h = 1 / (1 + x^2 + y^2)^2`, normalized so that `h(0) = 1`.
    Stereographic,
    /// `h = 4 / (1 + x^2 + y^2)^2`, the factor induced by the unit sphere.
    UnitSphereStereographic,
    /// Arbitrary positive factor; partials are taken by finite differences.
    Custom(ScalarField),
}

impl fmt::Debug for ConformalFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Flat => f.write_str("Flat"),
            Self::Stereographic => f.write_str("Stereographic"),
            Self::UnitSphereStereographic => f.write_str("UnitSphereStereographic"),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl ConformalFactor {
    pub fn custom(h: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom(Arc::new(h))
    }

    pub fn value(&self, p: ChartPoint) -> f64 {
        let r2 = p.x * p.x + p.y * p.y;
        match self {
            Self::Flat => 1.0,
            Self::Stereographic => (1.0 + r2).powi(-2),
            Self::UnitSphereStereographic => 4.0 * (1.0 + r2).powi(-2),
            Self::Custom(h) => h(p.x, p.y),
        }
    }

    /// `(h_x, h_y)`.
    pub fn gradient(&self, p: ChartPoint) -> (f64, f64) {
        let r2 = p.x * p.x + p.y * p.y;
        match self {
            Self::Flat => (0.0, 0.0),
            Self::Stereographic | Self::UnitSphereStereographic => {
                let scale = if matches!(self, Self::Stereographic) { 1.0 } else { 4.0 };
                let d = -4.0 * scale * (1.0 + r2).powi(-3);
                (d * p.x, d * p.y)
            }
            Self::Custom(h) => {
                let step = 1e-4;
                let stencil = |f: &dyn Fn(f64) -> f64| {
                    (f(-2.0 * step) - 8.0 * f(-step) + 8.0 * f(step) - f(2.0 * step))
                        / (12.0 * step)
                };
                (
                    stencil(&|t| h(p.x + t, p.y)),
                    stencil(&|t| h(p.x, p.y + t)),
                )
            }
        }
    }

    pub fn check(&self, p: ChartPoint) -> Result<f64> {
        let h = self.value(p);
        if !h.is_finite() || h <= 0.0 {
            return Err(Error::Metric(format!(
                "conformal factor {h} at ({}, {}) is not positive",
                p.x, p.y
            )));
        }
        Ok(h)
    }
}

/// Christoffel symbols of a conformal metric. All eight symbols are
/// generated from the two ratios `h_x / 2h` and `h_y / 2h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Christoffel {
    pub hx_over_2h: f64,
    pub hy_over_2h: f64,
}

impl Christoffel {
    /// `Gamma^upper_{lower1 lower2}` with indices 0 = x, 1 = y.
    pub fn symbol(&self, upper: usize, j: usize, k: usize) -> f64 {
        let (a, b) = (self.hx_over_2h, self.hy_over_2h);
        match (upper, j, k) {
            (0, 0, 0) => a,
            (0, 0, 1) | (0, 1, 0) => b,
            (0, 1, 1) => -a,
            (1, 0, 0) => -b,
            (1, 0, 1) | (1, 1, 0) => a,
            (1, 1, 1) => b,
            _ => panic!("chart index out of range"),
        }
    }

    /// `[G^x_xx, G^x_xy, G^x_yx, G^x_yy, G^y_xx, G^y_xy, G^y_yx, G^y_yy]`.
    pub fn all(&self) -> [f64; 8] {
        let mut out = [0.0; 8];
        for (idx, slot) in out.iter_mut().enumerate() {
            *slot = self.symbol(idx >> 2, (idx >> 1) & 1, idx & 1);
        }
        out
    }

    /// Connection matrix for direction `k`: entry `(i, l)` is `Gamma^i_{k l}`.
    pub fn connection_matrix(&self, k: usize) -> RMatrix {
        RMatrix::from_fn(2, 2, |i, l| self.symbol(i, k, l))
    }
}

pub fn christoffel_conformal(h: &ConformalFactor, p: ChartPoint) -> Result<Christoffel> {
    let value = h.check(p)?;
    let (hx, hy) = h.gradient(p);
    Ok(Christoffel {
        hx_over_2h: hx / (2.0 * value),
        hy_over_2h: hy / (2.0 * value),
    })
}
