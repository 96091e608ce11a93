//! Idempotent matrices, the tautological 2-form `omega = (1/2i) Tr(P dP^2)`,
//! and the canonical maps of a field into projector manifolds.
//!
//! Tangent vectors at an idempotent `P` are matrices `T` with
//! `T P = (I - P) T`; they split into `B = P T (I - P)` and
//! `C = (I - P) T P`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fields::{AcsField, PointStructure};
use crate::geometry::Backend;
use crate::linalg::{self, CMatrix, CVector, RVector, C64, I};
use crate::poly::Poly2;
use crate::tensor::Tensors;

const IDEMPOTENT_TOL: f64 = 1e-9;
const RANK_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    pub mat: CMatrix,
    pub rank: usize,
    pub idem_residual: f64,
    pub selfadj_residual: f64,
}

impl Projector {
    /// Checks idempotency and that the trace matches `rank`.
    pub fn new(mat: CMatrix, rank: usize) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::Dimension {
                expected: mat.nrows(),
                found: mat.ncols(),
            });
        }
        let idem_residual = (&mat * &mat - &mat).norm();
        if idem_residual > IDEMPOTENT_TOL {
            return Err(Error::Precondition(format!(
                "matrix is not idempotent (residual {idem_residual:.3e})"
            )));
        }
        let trace_dev = (mat.trace() - C64::new(rank as f64, 0.0)).norm();
        if trace_dev > RANK_TOL {
            return Err(Error::Precondition(format!(
                "trace deviates from rank {rank} by {trace_dev:.3e}"
            )));
        }
        let selfadj_residual = (mat.adjoint() - &mat).norm();
        Ok(Self {
            mat,
            rank,
            idem_residual,
            selfadj_residual,
        })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.selfadj_residual <= IDEMPOTENT_TOL
    }

    /// `I - P`.
    pub fn complement(&self) -> CMatrix {
        CMatrix::identity(self.dim(), self.dim()) - &self.mat
    }

    /// `max(||T P - (I - P) T||, ||P T - T (I - P)||)`.
    pub fn tangency_residual(&self, t: &CMatrix) -> f64 {
        let q = self.complement();
        let a = (t * &self.mat - &q * t).norm();
        let b = (&self.mat * t - t * &q).norm();
        a.max(b)
    }

    /// Checks tangency within `tol`.
    pub fn tangent(&self, mat: CMatrix, tol: f64) -> Result<GrassTangent> {
        let residual = self.tangency_residual(&mat);
        if residual > tol {
            return Err(Error::Tangency { residual });
        }
        Ok(self.tangent_unchecked(mat))
    }

    /// Wraps a matrix without checking tangency; the residual is recorded.
    pub fn tangent_unchecked(&self, mat: CMatrix) -> GrassTangent {
        let tangency_residual = self.tangency_residual(&mat);
        let (b, c) = linalg::block_split(&self.mat, &mat).expect("square matrices of equal size");
        GrassTangent {
            mat,
            b,
            c,
            tangency_residual,
        }
    }
}

/// Tangent vector at an idempotent, with its off-diagonal blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct GrassTangent {
    pub mat: CMatrix,
    pub b: CMatrix,
    pub c: CMatrix,
    pub tangency_residual: f64,
}

/// Default tangency tolerance for exact tangent vectors.
pub const TANGENT_TOL: f64 = 1e-9;

fn check_tangent(p: &Projector, t: &GrassTangent) -> Result<()> {
    let residual = p.tangency_residual(&t.mat);
    if residual > TANGENT_TOL * t.mat.norm().max(1.0) {
        return Err(Error::Tangency { residual });
    }
    Ok(())
}

/// `(1/2i) Tr(P (S T - T S))`.
pub fn omega(p: &Projector, s: &GrassTangent, t: &GrassTangent) -> Result<C64> {
    check_tangent(p, s)?;
    check_tangent(p, t)?;
    Ok(omega_unchecked(&p.mat, &s.mat, &t.mat))
}

fn omega_unchecked(p: &CMatrix, s: &CMatrix, t: &CMatrix) -> C64 {
    (p * (s * t - t * s)).trace() / (I * 2.0)
}

/// `Im Tr(B_S B_T^*)`, which equals `omega` at self-adjoint `P` for
/// self-adjoint `S`, `T`.
pub fn omega_blocks(s: &GrassTangent, t: &GrassTangent) -> f64 {
    (&s.b * t.b.adjoint()).trace().im
}

/// Taming structure on idempotents for the standard inner product:
/// `T = B + C` maps to `-i pi_Im C^* (I - P) + i pi_Ker B^* P`, where
/// `pi_Im`, `pi_Ker` are the orthogonal projections onto the image and
/// kernel of `P`.
pub fn taming_structure(p: &Projector, t: &GrassTangent) -> Result<GrassTangent> {
    check_tangent(p, t)?;
    let q = p.complement();
    let pi_im = linalg::column_span_projector(&p.mat);
    let pi_ker = linalg::column_span_projector(&q);
    let mat = (&pi_im * t.c.adjoint() * &q) * (-I) + (&pi_ker * t.b.adjoint() * &p.mat) * I;
    Ok(p.tangent_unchecked(mat))
}

/// `Re omega(T, J_I T)`; equals `1/2 (||B pi_Ker||^2 + ||C pi_Im||^2)`.
pub fn taming_check(p: &Projector, t: &GrassTangent) -> Result<f64> {
    let jt = taming_structure(p, t)?;
    Ok(omega_unchecked(&p.mat, &t.mat, &jt.mat).re)
}

fn require_self_adjoint(p: &Projector) -> Result<()> {
    if !p.is_self_adjoint() {
        return Err(Error::Precondition(format!(
            "complex structure on projectors needs a self-adjoint base (residual {:.3e})",
            p.selfadj_residual
        )));
    }
    Ok(())
}

/// Complex structure of the Grassmannian, `K(T) = i (T P - P T)`.
pub fn grassmann_k(p: &Projector, t: &GrassTangent) -> Result<GrassTangent> {
    require_self_adjoint(p)?;
    check_tangent(p, t)?;
    Ok(p.tangent_unchecked((&t.mat * &p.mat - &p.mat * &t.mat) * I))
}

/// `K` by its block definition: in a unitary basis adapted to
/// `Im P + Ker P`, `[[0, A], [A^*, 0]]` maps to `[[0, -iA], [iA^*, 0]]`.
pub fn grassmann_k_blocks(p: &Projector, t: &GrassTangent) -> Result<CMatrix> {
    require_self_adjoint(p)?;
    let n = p.dim();
    let cols = |m: &CMatrix| -> Vec<CVector> { m.column_iter().map(|c| c.into_owned()).collect() };
    let im = linalg::gram_schmidt_default(&cols(&p.mat));
    let ker = linalg::gram_schmidt_default(&cols(&p.complement()));
    if im.len() + ker.len() != n {
        return Err(Error::Degenerate {
            rank: im.len() + ker.len(),
            expected: n,
        });
    }
    let k = im.len();
    let u = CMatrix::from_columns(&im.iter().chain(&ker).cloned().collect::<Vec<_>>());
    let local = u.adjoint() * &t.mat * &u;
    let mut out = CMatrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let top = r < k;
            let left = c < k;
            if top && !left {
                out[(r, c)] = -I * local[(r, c)];
            } else if !top && left {
                out[(r, c)] = I * local[(r, c)];
            }
        }
    }
    Ok(&u * out * u.adjoint())
}

/// Which map of the field into projectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapKind {
    /// Image `T^{0,1} + N`, kernel `T^{1,0}`.
    Canonical,
    /// Orthogonal projection onto `T^{0,1} + N`.
    Perp,
}

fn normal_part(s: &PointStructure) -> CMatrix {
    let dim = s.pi.nrows();
    match &s.normal {
        Some(n) => linalg::complexify(&(n * n.transpose())),
        None => CMatrix::zeros(dim, dim),
    }
}

fn map_matrix(s: &PointStructure, kind: MapKind) -> Result<CMatrix> {
    let core = match kind {
        MapKind::Canonical => s.p_minus(),
        MapKind::Perp => s.t01_basis()?.projector(),
    };
    Ok(core + normal_part(s))
}

fn map_rank(s: &PointStructure) -> usize {
    s.complex_dim + usize::from(s.normal.is_some())
}

/// `1/2 (Pi + iJ) + n n^T`.
pub fn canonical_p(field: &dyn AcsField, p: &RVector) -> Result<Projector> {
    let s = field.structure(p)?;
    Projector::new(map_matrix(&s, MapKind::Canonical)?, map_rank(&s))
}

/// `sum_k w_k w_k^* + n n^T`.
pub fn perp_p(field: &dyn AcsField, p: &RVector) -> Result<Projector> {
    let s = field.structure(p)?;
    Projector::new(map_matrix(&s, MapKind::Perp)?, map_rank(&s))
}

pub fn map_projector(field: &dyn AcsField, p: &RVector, kind: MapKind) -> Result<Projector> {
    match kind {
        MapKind::Canonical => canonical_p(field, p),
        MapKind::Perp => perp_p(field, p),
    }
}

/// Differentials of the canonical maps by finite differences.
#[derive(Clone, Copy, Debug)]
pub struct Maps<'a> {
    pub field: &'a dyn AcsField,
    pub step: f64,
}

impl<'a> Maps<'a> {
    pub fn new(field: &'a dyn AcsField) -> Self {
        Self {
            field,
            step: field.backend().default_step(),
        }
    }

    pub fn with_step(field: &'a dyn AcsField, step: f64) -> Self {
        Self { field, step }
    }

    fn backend(&self) -> &Backend {
        self.field.backend()
    }

    fn tensors(&self) -> Tensors<'a> {
        Tensors::with_step(self.field, self.step)
    }

    /// `d_X P` at `p`. The tangency residual of the result is of the
    /// order of the truncation error.
    pub fn d_map(&self, p: &RVector, x: &RVector, kind: MapKind) -> Result<(Projector, GrassTangent)> {
        let base = map_projector(self.field, p, kind)?;
        let field = self.field;
        let d: CMatrix = self.backend().derivative_along(
            |q| map_matrix(&field.structure(q)?, kind),
            p,
            x,
            self.step,
        )?;
        let t = base.tangent_unchecked(d);
        Ok((base, t))
    }

    fn require_sphere(&self) -> Result<()> {
        if !self.backend().is_sphere() {
            return Err(Error::Precondition(
                "finite-difference pullbacks need a sphere backend; a chart carries no normal direction".into(),
            ));
        }
        Ok(())
    }

    /// `Re omega(d_X P, d_Y P)` for the canonical map.
    pub fn pullback_reomega_fd(&self, p: &RVector, x: &RVector, y: &RVector) -> Result<f64> {
        self.require_sphere()?;
        let (base, dx) = self.d_map(p, x, MapKind::Canonical)?;
        let (_, dy) = self.d_map(p, y, MapKind::Canonical)?;
        Ok(omega_unchecked(&base.mat, &dx.mat, &dy.mat).re)
    }

    /// `-1/8 Im Tr([nabla_X J, nabla_Y J] | T^{0,1}) - 1/4 <X, JY> + 1/4 <Y, JX>`.
    pub fn pullback_reomega_closed(&self, p: &RVector, x: &RVector, y: &RVector) -> Result<f64> {
        let t = self.tensors();
        let j = t.j(p)?;
        let trace = t.commutator_trace_t01(p, x, y)?;
        Ok(-trace.im / 8.0 - 0.25 * x.dot(&(&j * y)) + 0.25 * y.dot(&(&j * x)))
    }

    pub fn pullback_reomega(&self, p: &RVector, x: &RVector, y: &RVector, mode: Mode) -> Result<f64> {
        match mode {
            Mode::Fd => self.pullback_reomega_fd(p, x, y),
            Mode::Closed => self.pullback_reomega_closed(p, x, y),
        }
    }

    /// `Im Tr(B_X B_Y^*)` with blocks of `d P_perp`.
    pub fn pullback_kahler_fd(&self, p: &RVector, x: &RVector, y: &RVector) -> Result<f64> {
        self.require_sphere()?;
        let (_, dx) = self.d_map(p, x, MapKind::Perp)?;
        let (_, dy) = self.d_map(p, y, MapKind::Perp)?;
        Ok(omega_blocks(&dx, &dy))
    }

    /// `eta(X, Y) + nu(X, Y)`.
    pub fn pullback_kahler_closed(&self, p: &RVector, x: &RVector, y: &RVector) -> Result<f64> {
        let t = self.tensors();
        let split = t.jrm_split(p)?;
        Ok(t.eta_form(p, x, y)? + split.nu(x, y))
    }

    /// On chart backends only the closed form is available: it describes
    /// the map of the surface the chart metric comes from, which moves its
    /// normal direction, while the chart itself has none.
    pub fn pullback_kahler(&self, p: &RVector, x: &RVector, y: &RVector, mode: Mode) -> Result<f64> {
        match mode {
            Mode::Fd => self.pullback_kahler_fd(p, x, y),
            Mode::Closed => self.pullback_kahler_closed(p, x, y),
        }
    }

    /// `(d_{JX} P_perp - K(d_X P_perp)) v`.
    pub fn dbar_perp(&self, p: &RVector, x: &RVector, v: &CVector) -> Result<CVector> {
        let j = self.tensors().j(p)?;
        let (base, dx) = self.d_map(p, x, MapKind::Perp)?;
        let (_, djx) = self.d_map(p, &(&j * x), MapKind::Perp)?;
        require_self_adjoint(&base)?;
        let k = (&dx.mat * &base.mat - &base.mat * &dx.mat) * I;
        Ok((djx.mat - k) * v)
    }

    /// `(I - P_perp)(J m(X, Y))`, the value of `dbar_perp` on `Y + iJY`.
    pub fn dbar_perp_target(&self, p: &RVector, x: &RVector, y: &RVector) -> Result<CVector> {
        let t = self.tensors();
        let j = t.j(p)?;
        let base = perp_p(self.field, p)?;
        let jm = linalg::complexify_vec(&(&j * t.tangent_algebra_m(p, x, y)?));
        Ok(base.complement() * jm)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Fd,
    Closed,
}

/// Degeneracy test for the pulled-back Kähler form of a structure on the
/// round 2-sphere, written in stereographic coordinates at the origin as
/// `[[f, -(1+f^2)/g], [g, -f]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct S2Criterion {
    /// `f_x g_y - g_x f_y` at the origin.
    pub det_df: f64,
    /// `1 + f^2 + g^2 = ||d/dx + iJ d/dx||^2` at the origin.
    pub threshold: f64,
    /// `(P_perp)^* omega(d/dx, J d/dx) = c^4 g^2 det_df + c^2 g^2`, with
    /// `c^2 = 1 / threshold`.
    pub pullback_value: f64,
    /// The same pullback through the generic chart pipeline.
    pub chart_pullback_value: f64,
    /// `-c^4 g^2 det_df + c^2 g^2`, the value obtained when the first term
    /// is given the opposite sign; kept for comparison.
    pub opposite_sign_value: f64,
    /// True when `|det_df + threshold| <= tol`, i.e. `pullback_value = 0`.
    pub degenerate: bool,
    /// True when `|det_df - threshold| <= tol`.
    pub opposite_sign_degenerate: bool,
}

pub fn s2_criterion(f: &Poly2, g: &Poly2, tol: f64) -> Result<S2Criterion> {
    let (f0, g0) = (f.eval(0.0, 0.0), g.eval(0.0, 0.0));
    if g0 == 0.0 {
        return Err(Error::Domain("g must be nonzero at the origin".into()));
    }
    let det_df = f.d_dx().eval(0.0, 0.0) * g.d_dy().eval(0.0, 0.0) - g.d_dx().eval(0.0, 0.0) * f.d_dy().eval(0.0, 0.0);
    let threshold = 1.0 + f0 * f0 + g0 * g0;
    let c2 = 1.0 / threshold;
    let base = c2 * g0 * g0;
    let field = crate::fields::StereoFg::new(f.clone(), g.clone());
    let origin = RVector::zeros(2);
    let dx = RVector::from_vec(vec![1.0, 0.0]);
    let jdx = field.structure(&origin)?.j * &dx;
    let chart_pullback_value = Maps::new(&field).pullback_kahler_closed(&origin, &dx, &jdx)?;
    Ok(S2Criterion {
        det_df,
        threshold,
        pullback_value: c2 * base * det_df + base,
        chart_pullback_value,
        opposite_sign_value: -c2 * base * det_df + base,
        degenerate: (det_df + threshold).abs() <= tol,
        opposite_sign_degenerate: (det_df - threshold).abs() <= tol,
    })
}

/// A random rank-`k` idempotent `A D A^{-1}` with `D = diag(1,..,1,0,..,0)`
/// and `A` a random complex matrix, generically not self-adjoint.
pub fn random_idempotent(n: usize, k: usize, rng: &mut impl rand::Rng) -> Projector {
    use rand_distr::StandardNormal;
    loop {
        let a = DMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        });
        let Some(inv) = a.clone().try_inverse() else { continue };
        let d = CMatrix::from_fn(n, n, |r, c| if r == c && r < k { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
        let mat = &a * d * inv;
        if let Ok(p) = Projector::new(mat, k) {
            return p;
        }
    }
}

/// A random tangent vector at `p`: blocks of a random complex matrix.
pub fn random_tangent(p: &Projector, rng: &mut impl rand::Rng) -> GrassTangent {
    use rand_distr::StandardNormal;
    let n = p.dim();
    let m = DMatrix::from_fn(n, n, |_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let (b, c) = linalg::block_split(&p.mat, &m).expect("square matrices of equal size");
    p.tangent_unchecked(b + c)
}

/// A random rank-`k` orthogonal projector and a random self-adjoint
/// tangent vector at it.
pub fn random_orthogonal(n: usize, k: usize, rng: &mut impl rand::Rng) -> Projector {
    let p = random_idempotent(n, k, rng);
    Projector::new(linalg::column_span_projector(&p.mat), k).expect("orthogonal projector")
}

pub fn random_self_adjoint_tangent(p: &Projector, rng: &mut impl rand::Rng) -> GrassTangent {
    let t = random_tangent(p, rng);
    p.tangent_unchecked(&t.b + t.b.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Conjugated, PlanarField, OctonionicS6, StandardS2};
    use crate::tensor::TangentSample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn diag10() -> Projector {
        Projector::new(CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]), 1).unwrap()
    }

    #[test]
    fn omega_two_by_two() {
        let p = diag10();
        let s = p.tangent(CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]), 1e-12).unwrap();
        let t = p.tangent(CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(0.0, 0.0)]), 1e-12).unwrap();
        let w = omega(&p, &s, &t).unwrap();
        assert!((w - c(-1.0, 0.0)).norm() <= 1e-15);
        assert!((omega_blocks(&s, &t) + 1.0).abs() <= 1e-15);
        assert_eq!(omega(&p, &s, &s).unwrap(), c(0.0, 0.0));
        assert!((taming_check(&p, &s).unwrap() - 1.0).abs() <= 1e-15);
        let k = grassmann_k(&p, &s).unwrap();
        let expected = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]);
        assert!((k.mat - expected).norm() <= 1e-15);
    }

    #[test]
    fn non_tangent_rejected() {
        let p = diag10();
        assert!(matches!(p.tangent(CMatrix::identity(2, 2), 1e-9), Err(Error::Tangency { .. })));
        let bad = p.tangent_unchecked(CMatrix::identity(2, 2));
        assert!(omega(&p, &bad, &bad).is_err());
        assert!(Projector::new(CMatrix::identity(2, 2) * c(2.0, 0.0), 2).is_err());
    }

    #[test]
    fn omega_is_antisymmetric_and_zero_tangent_is_untamed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let p = random_idempotent(5, 2, &mut rng);
            let s = random_tangent(&p, &mut rng);
            let t = random_tangent(&p, &mut rng);
            assert!((omega(&p, &s, &t).unwrap() + omega(&p, &t, &s).unwrap()).norm() <= 1e-12);
            let zero = p.tangent_unchecked(CMatrix::zeros(5, 5));
            assert_eq!(taming_check(&p, &zero).unwrap(), 0.0);
        }
    }

    #[test]
    fn taming_value_matches_block_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let p = random_idempotent(4, 2, &mut rng);
            assert!(!p.is_self_adjoint());
            let t = random_tangent(&p, &mut rng);
            let pi_im = linalg::column_span_projector(&p.mat);
            let pi_ker = linalg::column_span_projector(&p.complement());
            let expected = 0.5 * ((&t.b * pi_ker).norm_squared() + (&t.c * pi_im).norm_squared());
            let value = taming_check(&p, &t).unwrap();
            assert!(value > 0.0);
            assert!((value - expected).abs() <= 1e-10 * expected.max(1.0));
        }
    }

    #[test]
    fn k_closed_form_matches_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = random_orthogonal(6, 2, &mut rng);
            let t = random_self_adjoint_tangent(&p, &mut rng);
            let k = grassmann_k(&p, &t).unwrap();
            assert!((&k.mat - grassmann_k_blocks(&p, &t).unwrap()).norm() <= 1e-12);
            let kk = grassmann_k(&p, &k).unwrap();
            assert!((kk.mat + &t.mat).norm() <= 1e-12);
            let s = random_self_adjoint_tangent(&p, &mut rng);
            let ks = grassmann_k(&p, &s).unwrap();
            let before = omega(&p, &s, &t).unwrap();
            assert!((omega(&p, &ks, &k).unwrap() - before).norm() <= 1e-10);
            assert!((before.re - omega_blocks(&s, &t)).abs() <= 1e-10);
            let inner = omega(&p, &t, &k).unwrap();
            assert!((inner.re - (&t.b * t.b.adjoint()).trace().re).abs() <= 1e-10);
            assert!(inner.re > 0.0);
        }
    }

    #[test]
    fn k_needs_self_adjoint_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_idempotent(4, 2, &mut rng);
        let t = random_tangent(&p, &mut rng);
        assert!(matches!(grassmann_k(&p, &t), Err(Error::Precondition(_))));
    }

    #[test]
    fn canonical_map_octonionic() {
        let field = OctonionicS6::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = TangentSample::draw(&field, 1, &mut rng).unwrap();
        let (p, x) = (&s.point, &s.vectors[0]);
        let cp = canonical_p(&field, p).unwrap();
        assert_eq!(cp.rank, 4);
        assert!(cp.selfadj_residual <= 1e-10);
        let n = linalg::complexify_vec(p);
        assert!((&cp.mat * &n - &n).norm() <= 1e-12);
        let j = field.eval(p).unwrap();
        let plus = linalg::combine(x, &(&j * x));
        let minus = linalg::combine(x, &(-(&j * x)));
        assert!((&cp.mat * &plus - &plus).norm() <= 1e-12);
        assert!((&cp.mat * &minus).norm() <= 1e-12);
        let pp = perp_p(&field, p).unwrap();
        assert!((&pp.mat - &cp.mat).norm() <= 1e-9);
        assert_eq!(pp.mat.adjoint(), pp.mat);
    }

    #[test]
    fn canonical_map_is_not_self_adjoint_off_orthogonal_locus() {
        let field = Conjugated::octonionic(0.2, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let p = field.sample_point(&mut rng);
            assert!(canonical_p(&field, &p).unwrap().selfadj_residual > 100.0 * 1e-9);
            let pp = perp_p(&field, &p).unwrap();
            assert!(pp.selfadj_residual <= 1e-12);
        }
    }

    #[test]
    fn differentials_hit_the_normal_correctly() {
        let fields: Vec<Box<dyn AcsField>> = vec![
            Box::new(OctonionicS6::default()),
            Box::new(StandardS2::default()),
            Box::new(Conjugated::octonionic(0.2, 7).unwrap()),
        ];
        for field in &fields {
            let maps = Maps::new(field.as_ref());
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            for _ in 0..5 {
                let s = TangentSample::draw(field.as_ref(), 1, &mut rng).unwrap();
                let (p, x) = (&s.point, &s.vectors[0]);
                let n = linalg::complexify_vec(p);
                let j = field.eval(p).unwrap();
                let (_, dp) = maps.d_map(p, x, MapKind::Canonical).unwrap();
                let target = linalg::combine(&(x * 0.5), &(&j * x * -0.5));
                if field.name() != "conjugated-s6" {
                    assert!((&dp.mat * &n - target).norm() <= 1e-6);
                }
                assert!(dp.tangency_residual <= 5.0 * maps.step * maps.step);
                assert!(dp.mat.norm() >= 0.5 * x.norm());
                let (base, dq) = maps.d_map(p, x, MapKind::Perp).unwrap();
                let target = base.complement() * linalg::complexify_vec(x);
                assert!((&dq.mat * &n - target).norm() <= 1e-6);
                assert!(dq.tangency_residual <= 5.0 * maps.step * maps.step);
                let (_, zero) = maps.d_map(p, &RVector::zeros(7.min(p.len())), MapKind::Perp).unwrap();
                assert_eq!(zero.mat.norm(), 0.0);
            }
        }
    }

    #[test]
    fn standard_s2_pullbacks_are_one_half() {
        let field = StandardS2::default();
        let maps = Maps::new(&field);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let s = TangentSample::draw(&field, 1, &mut rng).unwrap();
            let (p, x) = (&s.point, &s.vectors[0]);
            let jx = field.eval(p).unwrap() * x;
            for mode in [Mode::Fd, Mode::Closed] {
                assert!((maps.pullback_reomega(p, x, &jx, mode).unwrap() - 0.5).abs() <= 1e-8);
                assert!((maps.pullback_kahler(p, x, &jx, mode).unwrap() - 0.5).abs() <= 1e-8);
            }
            for v in [linalg::complexify_vec(p), linalg::combine(x, &jx)] {
                assert!(maps.dbar_perp(p, x, &v).unwrap().norm() <= 1e-8);
            }
        }
    }

    #[test]
    fn pullback_identities_octonionic() {
        let field = OctonionicS6::default();
        let maps = Maps::new(&field);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let s = TangentSample::draw(&field, 2, &mut rng).unwrap();
            let (p, x, y) = (&s.point, &s.vectors[0], &s.vectors[1]);
            let fd = maps.pullback_reomega_fd(p, x, y).unwrap();
            let closed = maps.pullback_reomega_closed(p, x, y).unwrap();
            assert!((fd - closed).abs() <= 1e-5 * (1.0 + closed.abs()));
            let twice = maps.pullback_reomega_closed(p, &(x * 2.0), y).unwrap();
            assert!((twice - 2.0 * closed).abs() <= 1e-8 * (1.0 + closed.abs()));
            let fd = maps.pullback_kahler_fd(p, x, y).unwrap();
            let closed = maps.pullback_kahler_closed(p, x, y).unwrap();
            assert!((fd - closed).abs() <= 1e-5 * (1.0 + closed.abs()));
            assert!((closed + maps.pullback_kahler_closed(p, y, x).unwrap()).abs() <= 1e-8);
        }
    }

    #[test]
    fn dbar_perp_matches_tangent_algebra() {
        let fields: Vec<Box<dyn AcsField>> =
            vec![Box::new(OctonionicS6::default()), Box::new(Conjugated::octonionic(0.2, 7).unwrap())];
        for field in &fields {
            let maps = Maps::new(field.as_ref());
            let mut rng = ChaCha8Rng::seed_from_u64(10);
            for _ in 0..5 {
                let s = TangentSample::draw(field.as_ref(), 2, &mut rng).unwrap();
                let (p, x, y) = (&s.point, &s.vectors[0], &s.vectors[1]);
                let n = linalg::complexify_vec(p);
                assert!(maps.dbar_perp(p, x, &n).unwrap().norm() <= 1e-6);
                let j = field.eval(p).unwrap();
                let v = linalg::combine(y, &(&j * y));
                let lhs = maps.dbar_perp(p, x, &v).unwrap();
                let rhs = maps.dbar_perp_target(p, x, y).unwrap();
                assert!((&lhs - &rhs).norm() <= 1e-5 * (1.0 + rhs.norm()), "{}", field.name());
            }
        }
    }

    #[test]
    fn fd_pullbacks_need_a_sphere() {
        let field = PlanarField::default();
        let maps = Maps::new(&field);
        let p = RVector::from_vec(vec![1.7, 0.2]);
        let x = RVector::from_vec(vec![1.0, 0.3]);
        assert!(matches!(maps.pullback_kahler(&p, &x, &x, Mode::Fd), Err(Error::Precondition(_))));
        assert!(matches!(maps.pullback_reomega(&p, &x, &x, Mode::Fd), Err(Error::Precondition(_))));
    }

    /// Stereographic coordinates `u` on the plane tangent to the south pole
    /// of the unit sphere, projecting from the north pole. The induced
    /// metric is `(1 + |u|^2/4)^-2 |du|^2`, which agrees with the chart
    /// factor to first order at the origin.
    fn stereo_embedding(u: &RVector) -> (RVector, nalgebra::DMatrix<f64>) {
        let s = u.norm_squared();
        let d = s + 4.0;
        let q = RVector::from_vec(vec![4.0 * u[0] / d, 4.0 * u[1] / d, (s - 4.0) / d]);
        let jac = nalgebra::DMatrix::from_fn(3, 2, |r, c| {
            if r < 2 {
                let delta = if r == c { 1.0 } else { 0.0 };
                4.0 * delta / d - 8.0 * u[r] * u[c] / (d * d)
            } else {
                16.0 * u[c] / (d * d)
            }
        });
        (q, jac)
    }

    #[test]
    fn s2_sign_confirmed_on_the_round_sphere() {
        // Push a chart structure forward to S^2 and differentiate the
        // projector map there; the sign of the det term follows.
        for (f, g) in [
            (Poly2::new(vec![(1, 0, 1.0)]), Poly2::new(vec![(0, 0, 1.0), (0, 1, 2.0)])),
            (Poly2::new(vec![(0, 0, 0.3), (1, 0, -0.7), (0, 1, 0.4)]), Poly2::new(vec![(0, 0, -1.1), (1, 0, 0.5), (0, 1, 0.9)])),
        ] {
            let (f2, g2) = (f.clone(), g.clone());
            let field = crate::fields::FnField::new("pushed", Backend::sphere(1), move |q| {
                let u = RVector::from_vec(vec![2.0 * q[0] / (1.0 - q[2]), 2.0 * q[1] / (1.0 - q[2])]);
                let (_, jac) = stereo_embedding(&u);
                let jt = crate::fields::stereo_fg_j(f2.eval(u[0], u[1]), g2.eval(u[0], u[1]))?;
                let gram_inv = (jac.transpose() * &jac).try_inverse().expect("immersion");
                Ok(&jac * jt * gram_inv * jac.transpose())
            });
            let (south, jac) = stereo_embedding(&RVector::zeros(2));
            let dx = jac.column(0).into_owned();
            let jdx = field.eval(&south).unwrap() * &dx;
            let on_sphere = Maps::new(&field).pullback_kahler_fd(&south, &dx, &jdx).unwrap();
            let r = s2_criterion(&f, &g, 1e-12).unwrap();
            assert!((on_sphere - r.pullback_value).abs() <= 1e-6, "{on_sphere} vs {r:?}");
            assert!((on_sphere - r.opposite_sign_value).abs() > 1e-2);
        }
    }

    #[test]
    fn s2_criterion_standard_structure() {
        let r = s2_criterion(&Poly2::default(), &Poly2::constant(1.0), 1e-12).unwrap();
        assert_eq!(r.det_df, 0.0);
        assert_eq!(r.threshold, 2.0);
        assert!((r.pullback_value - 0.5).abs() <= 1e-12);
        assert!((r.chart_pullback_value - 0.5).abs() <= 1e-8);
        assert!(!r.degenerate);
    }

    #[test]
    fn s2_criterion_sign_and_degeneracy() {
        // f = x, g = 1 - 2y: det = -2 = -threshold, so the form degenerates
        let f = Poly2::new(vec![(1, 0, 1.0)]);
        let g = Poly2::new(vec![(0, 0, 1.0), (0, 1, -2.0)]);
        let r = s2_criterion(&f, &g, 1e-12).unwrap();
        assert_eq!(r.det_df, -2.0);
        assert!(r.degenerate);
        assert!(r.pullback_value.abs() <= 1e-15);
        assert!(r.chart_pullback_value.abs() <= 1e-8);
        // f = x, g = 1 + 2y: det = +2 = threshold, the form stays nondegenerate
        let g = Poly2::new(vec![(0, 0, 1.0), (0, 1, 2.0)]);
        let r = s2_criterion(&f, &g, 1e-12).unwrap();
        assert!(!r.degenerate && r.opposite_sign_degenerate);
        assert!((r.chart_pullback_value - r.pullback_value).abs() <= 1e-8);
        assert!((r.pullback_value - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn s2_criterion_rejects_vanishing_g() {
        assert!(matches!(
            s2_criterion(&Poly2::default(), &Poly2::new(vec![(1, 0, 1.0)]), 1e-12),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn s2_criterion_matches_chart_pipeline() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        use rand::Rng;
        for _ in 0..10 {
            let mut coeffs = || -> Vec<(u32, u32, f64)> {
                [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
                    .iter()
                    .map(|&(a, b)| (a, b, rng.random_range(-1.0..1.0)))
                    .collect()
            };
            let f = Poly2::new(coeffs());
            let mut gc = coeffs();
            gc[0].2 = 0.5 + gc[0].2.abs();
            let g = Poly2::new(gc);
            let r = s2_criterion(&f, &g, 1e-12).unwrap();
            assert!((r.chart_pullback_value - r.pullback_value).abs() <= 1e-8, "{r:?}");
        }
    }
}
