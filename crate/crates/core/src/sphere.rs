//! The unit sphere `S^{2n}` in `R^{2n+1}`.
//!
//! Points are ambient unit vectors and the outward normal at `p` is `p`
//! itself. The Levi-Civita derivative of a tangent field is the tangential
//! part of its ambient derivative (Gauss formula), so every covariant
//! derivative in this crate is "differentiate along a great circle, then
//! project with `I - p p^T`".

use crate::error::{Error, Result};
use crate::linalg::{RMatrix, RVector};

const UNIT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SpherePoint(RVector);

impl SpherePoint {
    /// Wraps coordinates that already have unit Euclidean norm.
    pub fn new(coords: RVector) -> Result<Self> {
        let dev = (coords.norm() - 1.0).abs();
        if dev.is_nan() || dev > UNIT_TOL {
            return Err(Error::Domain(format!(
                "sphere point has norm deviating from 1 by {dev:.3e}"
            )));
        }
        Ok(Self(coords))
    }

    /// Normalizes a nonzero vector onto the sphere.
    pub fn normalize(v: RVector) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || n <= 0.0 {
            return Err(Error::Domain("cannot normalize a zero vector".into()));
        }
        Ok(Self(v / n))
    }

    /// The `k`-th ambient basis vector (0-based) in `R^dim`.
    pub fn axis(dim: usize, k: usize) -> Self {
        let mut v = RVector::zeros(dim);
        v[k] = 1.0;
        Self(v)
    }

    pub fn coords(&self) -> &RVector {
        &self.0
    }

    pub fn into_coords(self) -> RVector {
        self.0
    }
}

/// `I - p p^T`.
pub fn tangent_projection(p: &RVector) -> RMatrix {
    let n = p.len();
    RMatrix::identity(n, n) - p * p.transpose()
}

pub fn check_tangent(p: &RVector, x: &RVector) -> Result<()> {
    if p.len() != x.len() {
        return Err(Error::Dimension {
            expected: p.len(),
            found: x.len(),
        });
    }
    let normal = p.dot(x).abs();
    if normal > 1e-10 * x.norm().max(1.0) {
        return Err(Error::Tangency { residual: normal });
    }
    Ok(())
}

/// Great circle through `p` with initial velocity `x`, evaluated at `t`.
pub fn geodesic(p: &RVector, x: &RVector, t: f64) -> Result<RVector> {
    check_tangent(p, x)?;
    Ok(geodesic_unchecked(p, x, t))
}

pub(crate) fn geodesic_unchecked(p: &RVector, x: &RVector, t: f64) -> RVector {
    let speed = x.norm();
    if speed == 0.0 {
        return p.clone();
    }
    let angle = t * speed;
    p * angle.cos() + x * (angle.sin() / speed)
}
