//! Almost complex structure fields and their pointwise linear algebra.
//!
//! A field evaluates to an ambient matrix `J_p`. On a sphere backend this
//! is a `(2n+1) x (2n+1)` matrix with `J Pi = Pi J = J` and `J^2 = -Pi`,
//! so the normal direction is annihilated; on a chart backend it is a
//! `2 x 2` matrix with `J^2 = -I`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::chart::ConformalFactor;
use crate::error::{Error, Result};
use crate::geometry::Backend;
use crate::linalg::{self, CMatrix, CVector, RMatrix, RVector, C64, I};
use crate::poly::Poly2;

pub trait AcsField: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn backend(&self) -> &Backend;

    /// `J_p` in ambient coordinates. Callers are expected to pass a point
    /// accepted by [`Backend::check_point`]; domain violations specific to
    /// the field are reported as [`Error::Domain`].
    fn eval(&self, p: &RVector) -> Result<RMatrix>;

    fn metadata(&self) -> BTreeMap<String, String> {
        BTreeMap::new()
    }

    /// Draws a point from the field's sampling region.
    fn sample_point(&self, rng: &mut ChaCha8Rng) -> RVector {
        match self.backend() {
            Backend::Sphere { n } => gaussian_unit(2 * n + 1, rng),
            Backend::Chart(_) => RVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)),
        }
    }

    /// Pointwise data at a checked point.
    fn structure(&self, p: &RVector) -> Result<PointStructure> {
        let backend = self.backend();
        backend.check_point(p)?;
        let j = self.eval(p)?;
        Ok(PointStructure {
            j,
            pi: backend.tangent_projector(p),
            scale: backend.metric_scale(p)?,
            complex_dim: backend.complex_dim(),
            normal: backend.is_sphere().then(|| p.clone()),
        })
    }
}

fn gaussian_unit(dim: usize, rng: &mut ChaCha8Rng) -> RVector {
    loop {
        let v = RVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-8 {
            return v / n;
        }
    }
}

/// A tangent vector at `p` of unit length in the backend metric, uniform
/// on the unit tangent sphere.
pub fn sample_unit_tangent(backend: &Backend, p: &RVector, rng: &mut ChaCha8Rng) -> Result<RVector> {
    let pi = backend.tangent_projector(p);
    let scale = backend.metric_scale(p)?;
    loop {
        let v = &pi * RVector::from_fn(p.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm() * scale.sqrt();
        if n > 1e-8 {
            return Ok(v / n);
        }
    }
}

/// `J_p` together with the tangent projector and metric scale at `p`.
#[derive(Clone, Debug)]
pub struct PointStructure {
    pub j: RMatrix,
    pub pi: RMatrix,
    /// Conformal factor of the metric (1 on the sphere).
    pub scale: f64,
    pub complex_dim: usize,
    /// Unit normal on sphere backends.
    pub normal: Option<RVector>,
}

impl PointStructure {
    /// `1/2 (Pi + iJ)`, the projection onto `T^{0,1}` along `T^{1,0}`.
    pub fn p_minus(&self) -> CMatrix {
        (linalg::complexify(&self.pi) + linalg::complexify(&self.j) * I) * C64::new(0.5, 0.0)
    }

    /// `1/2 (Pi - iJ)`, the projection onto `T^{1,0}` along `T^{0,1}`.
    pub fn p_plus(&self) -> CMatrix {
        (linalg::complexify(&self.pi) - linalg::complexify(&self.j) * I) * C64::new(0.5, 0.0)
    }

    /// `max(||J^2 + Pi||, ||J Pi - J||, ||Pi J - J||)`.
    pub fn square_residual(&self) -> f64 {
        let j = &self.j;
        let sq = (j * j + &self.pi).norm();
        let right = (j * &self.pi - j).norm();
        let left = (&self.pi * j - j).norm();
        sq.max(right).max(left)
    }

    /// `||J^T J - Pi||`; the metric is conformal, so orthogonality is the
    /// Euclidean condition on the tangent space.
    pub fn orthogonality_residual(&self) -> f64 {
        (self.j.transpose() * &self.j - &self.pi).norm()
    }

    pub fn is_orthogonal(&self) -> bool {
        self.orthogonality_residual() <= 1e-10
    }

    /// Orthonormal basis of `T^{0,1}` seeded from the columns of `Pi` in
    /// index order.
    pub fn t01_basis(&self) -> Result<T01Basis> {
        let seeds: Vec<RVector> = self.pi.column_iter().map(|c| c.into_owned()).collect();
        self.t01_basis_from(&seeds)
    }

    /// Orthonormal basis of `T^{0,1}` obtained by Gram-Schmidt on
    /// `P^-` applied to the given real vectors.
    pub fn t01_basis_from(&self, seeds: &[RVector]) -> Result<T01Basis> {
        let pm = self.p_minus();
        let images: Vec<CVector> = seeds
            .iter()
            .map(|v| &pm * linalg::complexify_vec(&(&self.pi * v)))
            .collect();
        let scale = images.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return Err(Error::Degenerate {
                rank: 0,
                expected: self.complex_dim,
            });
        }
        let w = linalg::gram_schmidt_hermitian(&images, 1e-8 * scale);
        if w.len() != self.complex_dim {
            return Err(Error::Degenerate {
                rank: w.len(),
                expected: self.complex_dim,
            });
        }
        let z = w.iter().map(linalg::real_part).collect();
        Ok(T01Basis { w, z })
    }

    /// Basis seeded from random tangent vectors drawn from `seed`.
    pub fn t01_basis_seeded(&self, seed: u64) -> Result<T01Basis> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = self.pi.nrows();
        let seeds: Vec<RVector> = (0..dim)
            .map(|_| RVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        self.t01_basis_from(&seeds)
    }

    /// The same point with `J` replaced by `A J A^{-1}`, where
    /// `A = I + eps * Pi B Pi` and `B` is a random matrix of unit spectral
    /// norm. For `eps < 1` the result is again an almost complex structure
    /// and is generically not orthogonal.
    pub fn conjugated(&self, eps: f64, rng: &mut ChaCha8Rng) -> Result<PointStructure> {
        let dim = self.pi.nrows();
        let b = unit_spectral(RMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal)));
        let j = conjugate(&self.j, &self.pi, &b, eps)?;
        Ok(PointStructure { j, ..self.clone() })
    }
}

fn unit_spectral(b: RMatrix) -> RMatrix {
    let s = b.clone().svd(false, false).singular_values.max();
    b / s
}

fn conjugate(j: &RMatrix, pi: &RMatrix, b: &RMatrix, eps: f64) -> Result<RMatrix> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::Precondition(format!("eps must lie in [0, 1), got {eps}")));
    }
    let dim = j.nrows();
    let a = RMatrix::identity(dim, dim) + pi * b * pi * eps;
    let inv = a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Precondition("conjugating matrix is singular".into()))?;
    Ok(a * j * inv)
}

/// Orthonormal basis `w_k` of `T^{0,1}` with real parts `z_k`, so that
/// `w_k = z_k + i J z_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct T01Basis {
    pub w: Vec<CVector>,
    pub z: Vec<RVector>,
}

impl T01Basis {
    /// `sum_k w_k w_k^*`, the orthogonal projector onto `T^{0,1}`.
    pub fn projector(&self) -> CMatrix {
        let dim = self.w.first().map_or(0, |w| w.len());
        self.w
            .iter()
            .fold(CMatrix::zeros(dim, dim), |acc, w| acc + w * w.adjoint())
    }
}

/// Summary of [`validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub samples: usize,
    /// Worst `||J^2 + Pi||` (or `||J^2 + I||` on charts).
    pub square_residual: f64,
    /// Worst `max(||J Pi - J||, ||Pi J - J||)`.
    pub tangency_residual: f64,
    /// Worst second difference of `J` along a random curve with step
    /// `1e-7`, relative to `1 + ||J||`.
    pub continuity_residual: f64,
    /// Points where evaluation failed.
    pub failures: Vec<String>,
    pub tol: f64,
    pub pass: bool,
}

const CONTINUITY_STEP: f64 = 1e-7;

pub fn validate(field: &dyn AcsField, samples: usize, seed: u64, tol: f64) -> Result<ValidationReport> {
    if samples == 0 {
        return Err(Error::Precondition("validation needs at least one sample".into()));
    }
    let backend = field.backend();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(samples);
    for _ in 0..samples {
        let p = field.sample_point(&mut rng);
        let x = sample_unit_tangent(backend, &p, &mut rng)?;
        draws.push((p, x));
    }
    let per_sample: Vec<std::result::Result<[f64; 3], String>> = draws
        .par_iter()
        .map(|(p, x)| {
            let s = field.structure(p).map_err(|e| e.to_string())?;
            let sq = (&s.j * &s.j + &s.pi).norm();
            let tan = (&s.j * &s.pi - &s.j).norm().max((&s.pi * &s.j - &s.j).norm());
            let before = field.eval(&backend.curve(p, x, -CONTINUITY_STEP)).map_err(|e| e.to_string())?;
            let after = field.eval(&backend.curve(p, x, CONTINUITY_STEP)).map_err(|e| e.to_string())?;
            let cont = (before - &s.j * 2.0 + after).norm() / (1.0 + s.j.norm());
            Ok([sq, tan, cont])
        })
        .collect();
    let mut worst = [0.0f64; 3];
    let mut failures = Vec::new();
    for r in per_sample {
        match r {
            Ok(v) => {
                for (w, x) in worst.iter_mut().zip(v) {
                    *w = if x.is_nan() { f64::NAN } else { w.max(x) };
                }
            }
            Err(e) => failures.push(e),
        }
    }
    let pass = failures.is_empty() && worst.iter().all(|&r| r <= tol);
    Ok(ValidationReport {
        samples,
        square_residual: worst[0],
        tangency_residual: worst[1],
        continuity_residual: worst[2],
        failures,
        tol,
        pass,
    })
}

/// Fano triples `(i, j, k)` with `e_i e_j = e_k` (1-based), closed under
/// cyclic permutation. Reversing the order flips the sign.
pub const FANO_TRIPLES: [(usize, usize, usize); 7] =
    [(1, 2, 3), (1, 4, 5), (1, 7, 6), (2, 4, 6), (2, 5, 7), (3, 4, 7), (3, 6, 5)];

/// `cross[i][j][k]`: coefficient of `e_k` in `e_i x e_j` (0-based).
fn cross_constants() -> [[[f64; 7]; 7]; 7] {
    let mut c = [[[0.0; 7]; 7]; 7];
    for &(a, b, d) in &FANO_TRIPLES {
        let (a, b, d) = (a - 1, b - 1, d - 1);
        for (i, j, k) in [(a, b, d), (b, d, a), (d, a, b)] {
            c[i][j][k] = 1.0;
            c[j][i][k] = -1.0;
        }
    }
    c
}

/// The 7-dimensional cross product `u x v`.
pub fn cross7(u: &RVector, v: &RVector) -> RVector {
    let c = cross_constants();
    RVector::from_fn(7, |k, _| {
        let mut s = 0.0;
        for i in 0..7 {
            for j in 0..7 {
                s += c[i][j][k] * u[i] * v[j];
            }
        }
        s
    })
}

/// Matrix of `v -> p x v` on `R^7`.
pub fn octonionic_j(p: &RVector) -> RMatrix {
    let c = cross_constants();
    RMatrix::from_fn(7, 7, |k, j| (0..7).map(|i| c[i][j][k] * p[i]).sum())
}

/// Matrix of `v -> p x v` on `R^3`.
pub fn standard_s2_j(p: &RVector) -> RMatrix {
    RMatrix::from_row_slice(3, 3, &[0.0, -p[2], p[1], p[2], 0.0, -p[0], -p[1], p[0], 0.0])
}

/// `[[0, x], [-1/x, 0]]`.
pub fn planar_j(x: f64) -> Result<RMatrix> {
    if x == 0.0 || !x.is_finite() {
        return Err(Error::Domain(format!("planar structure needs x != 0, got {x}")));
    }
    Ok(RMatrix::from_row_slice(2, 2, &[0.0, x, -1.0 / x, 0.0]))
}

/// `[[f, -(1 + f^2)/g], [g, -f]]`.
pub fn stereo_fg_j(f: f64, g: f64) -> Result<RMatrix> {
    if g == 0.0 || !g.is_finite() || !f.is_finite() {
        return Err(Error::Domain(format!("stereographic family needs g != 0, got g = {g}")));
    }
    Ok(RMatrix::from_row_slice(2, 2, &[f, -(1.0 + f * f) / g, g, -f]))
}

#[derive(Debug)]
pub struct OctonionicS6 {
    backend: Backend,
}

impl Default for OctonionicS6 {
    fn default() -> Self {
        Self {
            backend: Backend::sphere(3),
        }
    }
}

impl AcsField for OctonionicS6 {
    fn name(&self) -> &str {
        "octonionic-s6"
    }
    fn backend(&self) -> &Backend {
        &self.backend
    }
    fn eval(&self, p: &RVector) -> Result<RMatrix> {
        Ok(octonionic_j(p))
    }
}

#[derive(Debug)]
pub struct StandardS2 {
    backend: Backend,
}

impl Default for StandardS2 {
    fn default() -> Self {
        Self {
            backend: Backend::sphere(1),
        }
    }
}

impl AcsField for StandardS2 {
    fn name(&self) -> &str {
        "standard-s2"
    }
    fn backend(&self) -> &Backend {
        &self.backend
    }
    fn eval(&self, p: &RVector) -> Result<RMatrix> {
        Ok(standard_s2_j(p))
    }
}

/// The planar structure `[[0, x], [-1/x, 0]]` on the flat half-plane.
#[derive(Debug)]
pub struct PlanarField {
    backend: Backend,
}

impl Default for PlanarField {
    fn default() -> Self {
        Self {
            backend: Backend::Chart(ConformalFactor::Flat),
        }
    }
}

impl AcsField for PlanarField {
    fn name(&self) -> &str {
        "example-2-4"
    }
    fn backend(&self) -> &Backend {
        &self.backend
    }
    fn eval(&self, p: &RVector) -> Result<RMatrix> {
        planar_j(p[0])
    }
    fn sample_point(&self, rng: &mut ChaCha8Rng) -> RVector {
        RVector::from_vec(vec![rng.random_range(0.2..3.0), rng.random_range(-1.0..1.0)])
    }
}

/// `[[f, -(1 + f^2)/g], [g, -f]]` for polynomial `f`, `g` on a
/// stereographic chart.
#[derive(Debug)]
pub struct StereoFg {
    pub f: Poly2,
    pub g: Poly2,
    backend: Backend,
}

impl StereoFg {
    pub fn new(f: Poly2, g: Poly2) -> Self {
        Self::with_factor(f, g, ConformalFactor::Stereographic)
    }

    pub fn with_factor(f: Poly2, g: Poly2, h: ConformalFactor) -> Self {
        Self {
            f,
            g,
            backend: Backend::Chart(h),
        }
    }
}

impl AcsField for StereoFg {
    fn name(&self) -> &str {
        "stereo-fg"
    }
    fn backend(&self) -> &Backend {
        &self.backend
    }
    fn eval(&self, p: &RVector) -> Result<RMatrix> {
        stereo_fg_j(self.f.eval(p[0], p[1]), self.g.eval(p[0], p[1]))
    }
    fn metadata(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("f".to_string(), self.f.to_string()),
            ("g".to_string(), self.g.to_string()),
        ])
    }
    /// Points in the disk of radius 0.5 where `|g|` is not tiny.
    fn sample_point(&self, rng: &mut ChaCha8Rng) -> RVector {
        let mut last = RVector::zeros(2);
        for _ in 0..1000 {
            let r = 0.5 * rng.random_range(0.0f64..1.0).sqrt();
            let t = rng.random_range(0.0..std::f64::consts::TAU);
            last = RVector::from_vec(vec![r * t.cos(), r * t.sin()]);
            if self.g.eval(last[0], last[1]).abs() > 1e-3 {
                break;
            }
        }
        last
    }
}

/// A non-orthogonal structure on a sphere: `J_q = A_q J0_q A_q^{-1}` with
/// `A_q = I + eps * Pi_q B Pi_q` for a fixed random `B` of unit spectral
/// norm.
#[derive(Debug)]
pub struct Conjugated {
    base: Arc<dyn AcsField>,
    b: RMatrix,
    eps: f64,
    name: String,
}

impl Conjugated {
    pub fn new(base: Arc<dyn AcsField>, eps: f64, seed: u64) -> Result<Self> {
        if !base.backend().is_sphere() {
            return Err(Error::Precondition("conjugated fields need a sphere backend".into()));
        }
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::Precondition(format!("eps must lie in [0, 1), got {eps}")));
        }
        let dim = base.backend().ambient_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = unit_spectral(RMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal)));
        let name = format!("conjugated-{}", base.name().rsplit('-').next().unwrap_or("field"));
        Ok(Self { base, b, eps, name })
    }

    pub fn octonionic(eps: f64, seed: u64) -> Result<Self> {
        Self::new(Arc::new(OctonionicS6::default()), eps, seed)
    }
}

impl AcsField for Conjugated {
    fn name(&self) -> &str {
        &self.name
    }
    fn backend(&self) -> &Backend {
        self.base.backend()
    }
    fn eval(&self, p: &RVector) -> Result<RMatrix> {
        let pi = self.backend().tangent_projector(p);
        conjugate(&self.base.eval(p)?, &pi, &self.b, self.eps)
    }
    fn metadata(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("base".to_string(), self.base.name().to_string()),
            ("eps".to_string(), self.eps.to_string()),
        ])
    }
}

type MatrixFn = Arc<dyn Fn(&RVector) -> Result<RMatrix> + Send + Sync>;

/// A field given by a closure.
pub struct FnField {
    name: String,
    backend: Backend,
    f: MatrixFn,
}

impl FnField {
    pub fn new(
        name: impl Into<String>,
        backend: Backend,
        f: impl Fn(&RVector) -> Result<RMatrix> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            backend,
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for FnField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnField")
            .field("name", &self.name)
            .field("backend", &self.backend)
            .finish_non_exhaustive()
    }
}

impl AcsField for FnField {
    fn name(&self) -> &str {
        &self.name
    }
    fn backend(&self) -> &Backend {
        &self.backend
    }
    fn eval(&self, p: &RVector) -> Result<RMatrix> {
        (self.f)(p)
    }
}

/// Parameters for fields built by name.
#[derive(Clone, Debug)]
pub struct FieldParams {
    /// Coefficients for `stereo-fg`; defaults to `f = 0`, `g = 1`.
    pub fg: Option<(Poly2, Poly2)>,
    /// Strength of the conjugation for `conjugated-s6`.
    pub eps: f64,
    /// Seed of the conjugating matrix for `conjugated-s6`.
    pub seed: u64,
}

impl Default for FieldParams {
    fn default() -> Self {
        Self {
            fg: None,
            eps: 0.2,
            seed: 7,
        }
    }
}

pub const FIELD_NAMES: [&str; 5] = ["octonionic-s6", "standard-s2", "example-2-4", "stereo-fg", "conjugated-s6"];

pub fn field_by_name(name: &str, params: &FieldParams) -> Result<Arc<dyn AcsField>> {
    Ok(match name {
        "octonionic-s6" => Arc::new(OctonionicS6::default()),
        "standard-s2" => Arc::new(StandardS2::default()),
        "example-2-4" => Arc::new(PlanarField::default()),
        "stereo-fg" => {
            let (f, g) = params
                .fg
                .clone()
                .unwrap_or_else(|| (Poly2::default(), Poly2::constant(1.0)));
            Arc::new(StereoFg::new(f, g))
        }
        "conjugated-s6" => Arc::new(Conjugated::octonionic(params.eps, params.seed)?),
        other => {
            return Err(Error::Config(format!(
                "unknown field `{other}` (known: {})",
                FIELD_NAMES.join(", ")
            )))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_dot;
    use crate::sphere::tangent_projection;
    use proptest::prelude::{prop, prop_assert, prop_assume, proptest};

    fn e(dim: usize, k: usize) -> RVector {
        let mut v = RVector::zeros(dim);
        v[k] = 1.0;
        v
    }

    fn unit7(raw: Vec<f64>) -> RVector {
        RVector::from_vec(raw).normalize()
    }

    #[test]
    fn octonion_table_first_product() {
        let j = octonionic_j(&e(7, 0));
        assert_eq!(&j * e(7, 1), e(7, 2));
    }

    #[test]
    fn octonionic_annihilates_normal() {
        let p = unit7(vec![0.3, -0.2, 0.9, 0.1, -0.5, 0.4, 0.2]);
        assert!((octonionic_j(&p) * &p).norm() <= 1e-15);
    }

    #[test]
    fn fano_table_is_alternative() {
        // p x (p x v) = -v + <p, v> p for unit p
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let p = gaussian_unit(7, &mut rng);
            let v = RVector::from_fn(7, |_, _| rng.sample::<f64, _>(StandardNormal));
            let lhs = cross7(&p, &cross7(&p, &v));
            let rhs = -&v + &p * p.dot(&v);
            assert!((lhs - rhs).norm() <= 1e-14);
        }
    }

    #[test]
    fn cross_matches_matrix() {
        let p = unit7(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let v = RVector::from_vec(vec![0.5, -1.0, 0.0, 2.0, 1.5, -0.5, 0.25]);
        assert!((cross7(&p, &v) - octonionic_j(&p) * &v).norm() <= 1e-15);
    }

    #[test]
    fn standard_s2_at_north_pole() {
        let j = standard_s2_j(&e(3, 2));
        assert_eq!(&j * e(3, 0), e(3, 1));
        let p = RVector::from_vec(vec![0.6, 0.0, 0.8]);
        let j = standard_s2_j(&p);
        assert!((&j * &j + tangent_projection(&p)).norm() <= 1e-15);
    }

    #[test]
    fn planar_matrices() {
        assert_eq!(planar_j(1.0).unwrap(), RMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        assert_eq!(planar_j(2.0).unwrap(), RMatrix::from_row_slice(2, 2, &[0.0, 2.0, -0.5, 0.0]));
        assert!(matches!(planar_j(0.0), Err(Error::Domain(_))));
        for x in [0.1, 0.3, 7.0, -2.5] {
            let j = planar_j(x).unwrap();
            assert!((&j * &j + RMatrix::identity(2, 2)).norm() <= 1e-15);
        }
    }

    #[test]
    fn stereo_family_matrices() {
        assert_eq!(stereo_fg_j(0.0, 1.0).unwrap(), RMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        let j = stereo_fg_j(1.0, 1.0).unwrap();
        assert_eq!(j, RMatrix::from_row_slice(2, 2, &[1.0, -2.0, 1.0, -1.0]));
        assert_eq!(&j * &j, -RMatrix::identity(2, 2));
        assert!(matches!(stereo_fg_j(1.0, 0.0), Err(Error::Domain(_))));
        let j = stereo_fg_j(0.7, -1.9).unwrap();
        assert!((j.determinant() - 1.0).abs() <= 1e-15);
        assert_eq!(j.trace(), 0.0);
    }

    #[test]
    fn builtin_fields_validate() {
        for name in FIELD_NAMES {
            let field = field_by_name(name, &FieldParams::default()).unwrap();
            let report = validate(field.as_ref(), 1000, 3, 1e-10).unwrap();
            assert!(report.pass, "{name}: {report:?}");
        }
        for field in [
            Arc::new(StandardS2::default()) as Arc<dyn AcsField>,
            Arc::new(OctonionicS6::default()),
        ] {
            assert!(validate(field.as_ref(), 200, 5, 1e-12).unwrap().pass);
        }
    }

    #[test]
    fn nilpotent_field_fails_validation() {
        let field = FnField::new("nilpotent", Backend::Chart(ConformalFactor::Flat), |p| {
            Ok(RMatrix::from_row_slice(2, 2, &[0.0, p[0], 0.0, 0.0]))
        });
        let report = validate(&field, 10, 1, 1e-10).unwrap();
        assert!(!report.pass);
        assert!(report.square_residual >= 1.0);
    }

    #[test]
    fn validation_records_domain_failures() {
        let field = FnField::new("broken", Backend::Chart(ConformalFactor::Flat), |_| {
            Err(Error::Domain("nowhere defined".into()))
        });
        let report = validate(&field, 3, 1, 1e-10).unwrap();
        assert_eq!(report.failures.len(), 3);
        assert!(!report.pass);
        assert!(validate(&field, 0, 1, 1e-10).is_err());
    }

    #[test]
    fn unknown_field_is_config_error() {
        assert!(matches!(
            field_by_name("hopf", &FieldParams::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn eigenprojectors_on_octonionic() {
        let field = OctonionicS6::default();
        let p = unit7(vec![0.2, 0.4, -0.1, 0.7, 0.3, -0.3, 0.35]);
        let s = field.structure(&p).unwrap();
        let (pm, pp) = (s.p_minus(), s.p_plus());
        let pi = linalg::complexify(&s.pi);
        assert!((&pm + &pp - &pi).norm() <= 1e-15);
        assert!((&pm * &pm - &pm).norm() <= 1e-12);
        assert!((&pp * &pp - &pp).norm() <= 1e-12);
        assert!((&pp * &pm).norm() <= 1e-12);
        assert!((&pm * &pp).norm() <= 1e-12);
        assert!((pm.adjoint() - &pm).norm() <= 1e-12);
        let z = tangent_projection(&p) * RVector::from_vec(vec![1.0, -0.5, 0.3, 0.2, 0.0, 0.9, -1.1]);
        let w = linalg::combine(&z, &(&s.j * &z));
        assert!((&pm * &w - &w).norm() <= 1e-12);
        assert!(s.is_orthogonal());
    }

    #[test]
    fn orthogonality_detector() {
        let field = PlanarField::default();
        for x in [0.5, 2.0, -3.0] {
            let s = field.structure(&RVector::from_vec(vec![x, 0.1])).unwrap();
            assert!(!s.is_orthogonal());
            assert!((s.p_minus().adjoint() - s.p_minus()).norm() > 0.1);
        }
        assert!(field.structure(&RVector::from_vec(vec![1.0, 0.1])).unwrap().is_orthogonal());
    }

    #[test]
    fn t01_basis_south_pole() {
        let field = StandardS2::default();
        let s = field.structure(&RVector::from_vec(vec![0.0, 0.0, -1.0])).unwrap();
        let basis = s.t01_basis().unwrap();
        assert_eq!(basis.w.len(), 1);
        let w = &basis.w[0];
        assert!((hermitian_dot(w, w).unwrap().re - 1.0).abs() <= 1e-15);
        // J e1 = -e3 x e1 = -e2 here, so T^{0,1} is spanned by e1 - i e2
        let target = CVector::from_vec(vec![C64::new(1.0, 0.0), -I, C64::new(0.0, 0.0)]);
        let overlap = hermitian_dot(&target, w).unwrap().norm();
        assert!((overlap - 2f64.sqrt()).abs() <= 1e-14);
    }

    #[test]
    fn t01_basis_octonionic_contract() {
        let field = OctonionicS6::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let p = field.sample_point(&mut rng);
            let s = field.structure(&p).unwrap();
            let basis = s.t01_basis().unwrap();
            assert_eq!(basis.w.len(), 3);
            let jc = linalg::complexify(&s.j);
            for (a, wa) in basis.w.iter().enumerate() {
                assert!((&jc * wa + wa * I).norm() <= 1e-9);
                let za = &basis.z[a];
                assert!((linalg::combine(za, &(&s.j * za)) - wa).norm() <= 1e-9);
                for (b, wb) in basis.w.iter().enumerate() {
                    let d = hermitian_dot(wa, wb).unwrap() - C64::new((a == b) as u8 as f64, 0.0);
                    assert!(d.norm() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn t01_basis_planar_x2() {
        let s = PlanarField::default().structure(&RVector::from_vec(vec![2.0, 0.0])).unwrap();
        let w = &s.t01_basis().unwrap().w[0];
        let c = 1.0 / (1.0f64 + 0.25).sqrt();
        let expected = CVector::from_vec(vec![C64::new(c, 0.0), C64::new(0.0, -0.5 * c)]);
        assert!((w - expected).norm() <= 1e-14);
    }

    #[test]
    fn t01_basis_is_reproducible() {
        let s = OctonionicS6::default()
            .structure(&unit7(vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]))
            .unwrap();
        assert_eq!(s.t01_basis().unwrap(), s.t01_basis().unwrap());
        assert_eq!(s.t01_basis_seeded(4).unwrap(), s.t01_basis_seeded(4).unwrap());
    }

    #[test]
    fn degenerate_basis_detected() {
        let s = PointStructure {
            j: RMatrix::zeros(2, 2),
            pi: RMatrix::identity(2, 2),
            scale: 1.0,
            complex_dim: 1,
            normal: None,
        };
        assert!(matches!(s.t01_basis(), Err(Error::Degenerate { rank: 2, .. })));
    }

    #[test]
    fn conjugated_field_is_not_orthogonal() {
        let field = Conjugated::octonionic(0.2, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = field.sample_point(&mut rng);
        let s = field.structure(&p).unwrap();
        assert!(s.square_residual() <= 1e-12);
        assert!(!s.is_orthogonal());
        assert!(s.t01_basis().is_ok());
    }

    proptest! {
        #[test]
        fn octonionic_is_isometry(
            raw_p in prop::collection::vec(-1.0f64..1.0, 7),
            raw_u in prop::collection::vec(-1.0f64..1.0, 7),
            raw_v in prop::collection::vec(-1.0f64..1.0, 7),
        ) {
            let p = RVector::from_vec(raw_p);
            prop_assume!(p.norm() > 1e-2);
            let p = p.normalize();
            let pi = tangent_projection(&p);
            let (u, v) = (RVector::from_vec(raw_u), RVector::from_vec(raw_v));
            let j = octonionic_j(&p);
            let lhs = (&j * &u).dot(&(&j * &v));
            let rhs = (&pi * &u).dot(&(&pi * &v));
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }

        #[test]
        fn pointwise_conjugation_stays_complex(seed in 0u64..1000, eps in 0.0f64..0.3) {
            let field = OctonionicS6::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = field.sample_point(&mut rng);
            let s = field.structure(&p).unwrap().conjugated(eps, &mut rng).unwrap();
            prop_assert!(s.square_residual() <= 1e-12);
        }
    }
}
