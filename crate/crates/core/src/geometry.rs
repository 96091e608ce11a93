//! Geometric backends and finite-difference derivatives along curves.
//!
//! A backend fixes the ambient coordinates of points and tangent vectors,
//! the tangent projector, the metric, and how curves through a point are
//! drawn. Sphere backends differentiate along great circles; chart
//! backends along coordinate lines and add Christoffel corrections.

use nalgebra::{allocator::Allocator, ComplexField, DefaultAllocator, Dim, OMatrix};

use crate::chart::{christoffel_conformal, ChartPoint, ConformalFactor};
use crate::error::{Error, Result};
use crate::linalg::{RMatrix, RVector};
use crate::sphere;

/// Default step for derivatives along great circles.
pub const SPHERE_STEP: f64 = 1e-3;
/// Default step for derivatives along chart coordinate lines.
pub const CHART_STEP: f64 = 1e-4;

/// Values that can be combined by a difference stencil.
pub trait FdValue: Sized {
    /// `((m2 - p2) + 8 (p1 - m1)) / (12 h)` for samples at `-2h, -h, h, 2h`.
    fn stencil(m2: &Self, m1: &Self, p1: &Self, p2: &Self, step: f64) -> Self;
}

impl<T, R, C> FdValue for OMatrix<T, R, C>
where
    T: ComplexField,
    R: Dim,
    C: Dim,
    DefaultAllocator: Allocator<R, C>,
{
    fn stencil(m2: &Self, m1: &Self, p1: &Self, p2: &Self, step: f64) -> Self {
        let w = |x: f64| T::from_real(nalgebra::convert(x));
        let (eight, inv) = (w(8.0), w(1.0 / (12.0 * step)));
        (m2 - p2 + (p1 - m1).map(|e| e * eight.clone())).map(|e| e * inv.clone())
    }
}

/// Fourth-order central difference of `f` at 0 with stencil
/// `(-2h, -h, h, 2h)` and weights `(1, -8, 8, -1) / 12h`.
pub fn central_difference<T: FdValue>(f: impl Fn(f64) -> Result<T>, step: f64) -> Result<T> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::Precondition(format!("step must be positive, got {step}")));
    }
    let m2 = f(-2.0 * step)?;
    let m1 = f(-step)?;
    let p1 = f(step)?;
    let p2 = f(2.0 * step)?;
    Ok(T::stencil(&m2, &m1, &p1, &p2, step))
}

#[derive(Clone, Debug)]
pub enum Backend {
    /// Unit sphere `S^{2n}` in `R^{2n+1}`.
    Sphere { n: usize },
    /// Conformal chart on an open subset of `R^2`.
    Chart(ConformalFactor),
}

impl Backend {
    pub fn sphere(n: usize) -> Self {
        Self::Sphere { n }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self, Self::Sphere { .. })
    }

    /// Length of point and tangent coordinate vectors.
    pub fn ambient_dim(&self) -> usize {
        match self {
            Self::Sphere { n } => 2 * n + 1,
            Self::Chart(_) => 2,
        }
    }

    /// Complex dimension of the tangent spaces.
    pub fn complex_dim(&self) -> usize {
        match self {
            Self::Sphere { n } => *n,
            Self::Chart(_) => 1,
        }
    }

    pub fn default_step(&self) -> f64 {
        match self {
            Self::Sphere { .. } => SPHERE_STEP,
            Self::Chart(_) => CHART_STEP,
        }
    }

    pub fn check_point(&self, p: &RVector) -> Result<()> {
        if p.len() != self.ambient_dim() {
            return Err(Error::Dimension {
                expected: self.ambient_dim(),
                found: p.len(),
            });
        }
        match self {
            Self::Sphere { .. } => sphere::SpherePoint::new(p.clone()).map(|_| ()),
            Self::Chart(h) => h.check(chart_point(p)).map(|_| ()),
        }
    }

    pub fn check_tangent(&self, p: &RVector, x: &RVector) -> Result<()> {
        match self {
            Self::Sphere { .. } => sphere::check_tangent(p, x),
            Self::Chart(_) if x.len() != 2 => Err(Error::Dimension {
                expected: 2,
                found: x.len(),
            }),
            Self::Chart(_) => Ok(()),
        }
    }

    /// Orthogonal projector onto the tangent space, in ambient coordinates.
    pub fn tangent_projector(&self, p: &RVector) -> RMatrix {
        match self {
            Self::Sphere { .. } => sphere::tangent_projection(p),
            Self::Chart(_) => RMatrix::identity(2, 2),
        }
    }

    /// Conformal factor of the metric at `p`; the sphere metric is Euclidean.
    pub fn metric_scale(&self, p: &RVector) -> Result<f64> {
        match self {
            Self::Sphere { .. } => Ok(1.0),
            Self::Chart(h) => h.check(chart_point(p)),
        }
    }

    pub fn inner(&self, p: &RVector, a: &RVector, b: &RVector) -> Result<f64> {
        Ok(self.metric_scale(p)? * a.dot(b))
    }

    /// Point reached at parameter `t` along the backend's curve through
    /// `p` with velocity `x`.
    pub fn curve(&self, p: &RVector, x: &RVector, t: f64) -> RVector {
        match self {
            Self::Sphere { .. } => sphere::geodesic_unchecked(p, x, t),
            Self::Chart(_) => p + x * t,
        }
    }

    /// Derivative of `f` along the backend curve through `(p, x)`.
    pub fn derivative_along<T: FdValue>(
        &self,
        f: impl Fn(&RVector) -> Result<T>,
        p: &RVector,
        x: &RVector,
        step: f64,
    ) -> Result<T> {
        self.check_tangent(p, x)?;
        central_difference(|t| f(&self.curve(p, x, t)), step)
    }

    /// Covariant derivative of a tangent vector field at `p` along `x`.
    pub fn covariant_derivative_vec(
        &self,
        w: impl Fn(&RVector) -> Result<RVector>,
        p: &RVector,
        x: &RVector,
        step: f64,
    ) -> Result<RVector> {
        let raw = self.derivative_along(&w, p, x, step)?;
        match self {
            Self::Sphere { .. } => Ok(sphere::tangent_projection(p) * raw),
            Self::Chart(h) => {
                let gamma = christoffel_conformal(h, chart_point(p))?;
                let wp = w(p)?;
                let correction = (0..2).fold(RVector::zeros(2), |acc, k| {
                    acc + gamma.connection_matrix(k) * &wp * x[k]
                });
                Ok(raw + correction)
            }
        }
    }

    /// Covariant derivative at `p` along `x` of an endomorphism field given
    /// in ambient form. On the sphere the second slot is extended by
    /// `Y(q) = Pi_q Y`, which is parallel at `p`, so no correction term is
    /// needed: `(nabla_X A) = Pi_p d/dt[A(q) Pi_q] Pi_p`.
    pub fn covariant_derivative_endo(
        &self,
        a: impl Fn(&RVector) -> Result<RMatrix>,
        p: &RVector,
        x: &RVector,
        step: f64,
    ) -> Result<RMatrix> {
        match self {
            Self::Sphere { .. } => {
                let raw = self.derivative_along(
                    |q| Ok(a(q)? * sphere::tangent_projection(q)),
                    p,
                    x,
                    step,
                )?;
                let pi = sphere::tangent_projection(p);
                Ok(&pi * raw * &pi)
            }
            Self::Chart(h) => {
                let raw = self.derivative_along(&a, p, x, step)?;
                let gamma = christoffel_conformal(h, chart_point(p))?;
                let ap = a(p)?;
                let correction = (0..2).fold(RMatrix::zeros(2, 2), |acc, k| {
                    let g = gamma.connection_matrix(k);
                    acc + (&g * &ap - &ap * &g) * x[k]
                });
                Ok(raw + correction)
            }
        }
    }

    /// Metric-orthonormal real frame of the tangent space, in a fixed order.
    pub fn tangent_frame(&self, p: &RVector) -> Result<Vec<RVector>> {
        match self {
            Self::Sphere { .. } => {
                let pi = sphere::tangent_projection(p);
                let mut frame: Vec<RVector> = Vec::with_capacity(p.len() - 1);
                for col in pi.column_iter() {
                    let mut v = col.into_owned();
                    for _ in 0..2 {
                        for e in &frame {
                            let c = v.dot(e);
                            v -= e * c;
                        }
                    }
                    let n = v.norm();
                    if n > 1e-8 {
                        frame.push(v / n);
                    }
                }
                Ok(frame)
            }
            Self::Chart(h) => {
                let s = h.check(chart_point(p))?.sqrt();
                Ok(vec![
                    RVector::from_vec(vec![1.0 / s, 0.0]),
                    RVector::from_vec(vec![0.0, 1.0 / s]),
                ])
            }
        }
    }
}

pub fn chart_point(p: &RVector) -> ChartPoint {
    ChartPoint::new(p[0], p[1])
}

pub fn chart_vector(p: ChartPoint) -> RVector {
    RVector::from_vec(vec![p.x, p.y])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CMatrix;
    use crate::sphere::{tangent_projection, SpherePoint};

    fn sample_pair() -> (RVector, RVector) {
        let p = SpherePoint::normalize(RVector::from_vec(vec![0.3, -1.2, 0.5, 0.9, -0.1, 0.4, 0.7]))
            .unwrap()
            .into_coords();
        let x = tangent_projection(&p) * RVector::from_vec(vec![1.0, 0.2, -0.5, 0.3, 0.8, -0.6, 0.1]);
        (p, x)
    }

    #[test]
    fn constant_field_has_zero_derivative() {
        let (p, x) = sample_pair();
        let b = Backend::sphere(3);
        let m = RMatrix::from_fn(7, 7, |i, j| (i * 7 + j) as f64);
        let d = b.derivative_along(|_| Ok(m.clone()), &p, &x, 1e-3).unwrap();
        assert!(d.norm() <= 1e-13 * m.norm().max(1.0) * 10.0);
    }

    #[test]
    fn outer_product_derivative() {
        let (p, x) = sample_pair();
        let b = Backend::sphere(3);
        let d = b
            .derivative_along(|q| Ok(q * q.transpose()), &p, &x, 1e-3)
            .unwrap();
        let exact = &x * p.transpose() + &p * x.transpose();
        assert!((d - exact).norm() <= 1e-9);
    }

    #[test]
    fn projector_derivative_and_fourth_order_convergence() {
        let (p, x) = sample_pair();
        let b = Backend::sphere(3);
        let exact = -(&x * p.transpose() + &p * x.transpose());
        let err = |h: f64| {
            let d = b
                .derivative_along(|q| Ok(tangent_projection(q)), &p, &x, h)
                .unwrap();
            (d - &exact).norm()
        };
        assert!(err(1e-3) <= 1e-9);
        let ratio = err(0.1) / err(0.05);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn complex_matrix_fields_are_supported() {
        let (p, x) = sample_pair();
        let b = Backend::sphere(3);
        let d: CMatrix = b
            .derivative_along(|q| Ok(crate::linalg::complexify(&(q * q.transpose()))), &p, &x, 1e-3)
            .unwrap();
        let exact = crate::linalg::complexify(&(&x * p.transpose() + &p * x.transpose()));
        assert!((d - exact).norm() <= 1e-9);
    }

    #[test]
    fn projected_ambient_field_is_parallel_for_tangent_v() {
        let (p, x) = sample_pair();
        let b = Backend::sphere(3);
        let v = tangent_projection(&p) * RVector::from_vec(vec![0.5, 0.5, -1.0, 0.0, 2.0, 0.1, -0.3]);
        let nabla = b
            .covariant_derivative_vec(|q| Ok(tangent_projection(q) * &v), &p, &x, 1e-3)
            .unwrap();
        assert!(nabla.norm() <= 1e-9);

        // general ambient v: nabla_X (Pi v) = -<p, v> X
        let v = RVector::from_vec(vec![0.5, 0.5, -1.0, 0.0, 2.0, 0.1, -0.3]);
        let nabla = b
            .covariant_derivative_vec(|q| Ok(tangent_projection(q) * &v), &p, &x, 1e-3)
            .unwrap();
        let exact = &x * (-p.dot(&v));
        assert!((&nabla - exact).norm() <= 1e-9);

        // raw minus covariant derivative is normal
        let raw = b
            .derivative_along(|q| Ok(tangent_projection(q) * &v), &p, &x, 1e-3)
            .unwrap();
        assert!((tangent_projection(&p) * (raw - nabla)).norm() <= 1e-9);
    }

    #[test]
    fn zero_field() {
        let (p, x) = sample_pair();
        let nabla = Backend::sphere(3)
            .covariant_derivative_vec(|_| Ok(RVector::zeros(7)), &p, &x, 1e-3)
            .unwrap();
        assert_eq!(nabla.norm(), 0.0);
    }

    #[test]
    fn flat_chart_constant_field() {
        let b = Backend::Chart(ConformalFactor::Flat);
        let p = RVector::from_vec(vec![0.3, 0.2]);
        let x = RVector::from_vec(vec![1.0, -2.0]);
        let m = RMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let d = b
            .covariant_derivative_endo(|_| Ok(m.clone()), &p, &x, 1e-4)
            .unwrap();
        assert!(d.norm() <= 1e-11);
    }

    #[test]
    fn rejects_bad_step() {
        let r: Result<RMatrix> = central_difference(|_| Ok(RMatrix::zeros(1, 1)), 0.0);
        assert!(r.is_err());
    }
}
