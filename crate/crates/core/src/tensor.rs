//! Pointwise tensors built from the covariant derivative of `J`: `nabla J`,
//! the tangent algebra `m`, the Nijenhuis tensor, restricted commutator
//! traces, the real/imaginary split of the `T^{0,1}` projector, and the
//! quadratic forms derived from it.
//!
//! `(nabla_X J) Y` is computed by extending `Y` as `q -> Pi_q Y`, which is
//! parallel at `p`, so no correction term is needed on the sphere.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fields::{sample_unit_tangent, AcsField, PointStructure, T01Basis};
use crate::geometry::{central_difference, Backend};
use crate::linalg::{self, CVector, RMatrix, RVector, C64};

/// A base point with real tangent vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentSample {
    pub point: RVector,
    pub vectors: Vec<RVector>,
}

impl TangentSample {
    /// A point from the field's sampling region and `k` metric-unit
    /// tangent vectors.
    pub fn draw(field: &dyn AcsField, k: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let point = field.sample_point(rng);
        let vectors = (0..k)
            .map(|_| sample_unit_tangent(field.backend(), &point, rng))
            .collect::<Result<_>>()?;
        Ok(Self { point, vectors })
    }
}

/// `nabla_X J` at a point, as an ambient matrix acting on tangent vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct NablaJ {
    pub point: RVector,
    pub direction: RVector,
    pub value: RMatrix,
}

impl NablaJ {
    /// `||(nabla_X J) J + J (nabla_X J)||`.
    pub fn anticommutator_residual(&self, j: &RMatrix) -> f64 {
        (&self.value * j + j * &self.value).norm()
    }

    pub fn trace(&self) -> f64 {
        self.value.trace()
    }
}

/// Finite-difference tensor calculus for one field.
#[derive(Clone, Copy, Debug)]
pub struct Tensors<'a> {
    pub field: &'a dyn AcsField,
    pub step: f64,
}

impl<'a> Tensors<'a> {
    /// Uses the backend's default step.
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

    pub fn j(&self, p: &RVector) -> Result<RMatrix> {
        self.backend().check_point(p)?;
        self.field.eval(p)
    }

    pub fn nabla_j(&self, p: &RVector, x: &RVector) -> Result<NablaJ> {
        let value = self.nabla_j_matrix(p, x)?;
        Ok(NablaJ {
            point: p.clone(),
            direction: x.clone(),
            value,
        })
    }

    pub fn nabla_j_matrix(&self, p: &RVector, x: &RVector) -> Result<RMatrix> {
        self.backend().check_point(p)?;
        self.backend()
            .covariant_derivative_endo(|q| self.field.eval(q), p, x, self.step)
    }

    /// `m(X, Y) = (nabla_{JX} J - J nabla_X J) Y`.
    pub fn tangent_algebra_m(&self, p: &RVector, x: &RVector, y: &RVector) -> Result<RVector> {
        let j = self.j(p)?;
        Ok(self.m_operator(p, &j, x)? * y)
    }

    /// `nabla_{JX} J - J nabla_X J`, i.e. `m(X, .)`.
    fn m_operator(&self, p: &RVector, j: &RMatrix, x: &RVector) -> Result<RMatrix> {
        let jx = j * x;
        Ok(self.nabla_j_matrix(p, &jx)? - j * self.nabla_j_matrix(p, x)?)
    }

    /// `N(X, Y) = m(Y, X) - m(X, Y)`.
    pub fn nijenhuis(&self, p: &RVector, x: &RVector, y: &RVector) -> Result<RVector> {
        let j = self.j(p)?;
        Ok(self.m_operator(p, &j, y)? * x - self.m_operator(p, &j, x)? * y)
    }

    /// `J[X,JY] + J[JX,Y] + [X,Y] - [JX,JY]` with the extensions
    /// `X(q) = Pi_q X`, `Y(q) = Pi_q Y`.
    pub fn nijenhuis_bracket_oracle(&self, p: &RVector, x: &RVector, y: &RVector) -> Result<RVector> {
        let backend = self.backend();
        let (x, y) = (x.clone(), y.clone());
        let xf = move |q: &RVector| backend.tangent_projector(q) * &x;
        let yf = move |q: &RVector| backend.tangent_projector(q) * &y;
        self.nijenhuis_bracket_with(p, &xf, &yf)
    }

    /// Bracket form of the Nijenhuis tensor for caller-supplied tangent
    /// extensions of `X` and `Y`.
    ///
    /// Brackets are `[U, V] = D_U V - D_V U` with `D` the flat derivative
    /// of the ambient coordinates, taken along the backend curves. The
    /// ambient connection is torsion free, so this is the Lie bracket.
    pub fn nijenhuis_bracket_with(
        &self,
        p: &RVector,
        x_ext: &dyn Fn(&RVector) -> RVector,
        y_ext: &dyn Fn(&RVector) -> RVector,
    ) -> Result<RVector> {
        self.backend().check_point(p)?;
        let field = self.field;
        let jx_ext = |q: &RVector| -> Result<RVector> { Ok(field.eval(q)? * x_ext(q)) };
        let jy_ext = |q: &RVector| -> Result<RVector> { Ok(field.eval(q)? * y_ext(q)) };
        let x_ok = |q: &RVector| -> Result<RVector> { Ok(x_ext(q)) };
        let y_ok = |q: &RVector| -> Result<RVector> { Ok(y_ext(q)) };

        let j = self.field.eval(p)?;
        let x_jy = self.bracket(p, &x_ok, &jy_ext)?;
        let jx_y = self.bracket(p, &jx_ext, &y_ok)?;
        let x_y = self.bracket(p, &x_ok, &y_ok)?;
        let jx_jy = self.bracket(p, &jx_ext, &jy_ext)?;
        Ok(&j * (x_jy + jx_y) + x_y - jx_jy)
    }

    fn bracket(
        &self,
        p: &RVector,
        u: &dyn Fn(&RVector) -> Result<RVector>,
        v: &dyn Fn(&RVector) -> Result<RVector>,
    ) -> Result<RVector> {
        let backend = self.backend();
        let up = u(p)?;
        let vp = v(p)?;
        let du_v: RVector = central_difference(|t| v(&backend.curve(p, &up, t)), self.step)?;
        let dv_u: RVector = central_difference(|t| u(&backend.curve(p, &vp, t)), self.step)?;
        Ok(du_v - dv_u)
    }

    /// `max ||m(e_i, e_j)||` over a metric-orthonormal frame; zero exactly
    /// when `nabla_{JX} J = J nabla_X J` at `p`.
    pub fn strong_residual(&self, p: &RVector) -> Result<f64> {
        let j = self.j(p)?;
        let scale = self.backend().metric_scale(p)?;
        let frame = self.backend().tangent_frame(p)?;
        let mut worst: f64 = 0.0;
        for ei in &frame {
            let m = self.m_operator(p, &j, ei)?;
            for ej in &frame {
                worst = worst.max((&m * ej).norm() * scale.sqrt());
            }
        }
        Ok(worst)
    }

    /// Trace of `[nabla_X J, nabla_Y J]` on `T^{0,1}`.
    pub fn commutator_trace_t01(&self, p: &RVector, x: &RVector, y: &RVector) -> Result<C64> {
        let s = self.field.structure(p)?;
        let basis = s.t01_basis()?;
        let a = self.nabla_j_matrix(p, x)?;
        let b = self.nabla_j_matrix(p, y)?;
        linalg::restricted_trace(&linalg::complexify(&(&a * &b - &b * &a)), &basis.w)
    }

    /// Both sides of `Im Tr(J (nabla_X J)^2 |T^{0,1}) = 2 sum_k ||(nabla_X J) Z_k||^2`
    /// for orthogonal `J`, where `Z_k` are the real parts of an orthonormal
    /// basis of `T^{0,1}`.
    pub fn skew_trace_identity(&self, p: &RVector, x: &RVector) -> Result<(f64, f64)> {
        let s = self.field.structure(p)?;
        if !s.is_orthogonal() {
            return Err(Error::Precondition(format!(
                "skew trace identity needs orthogonal J (residual {:.3e})",
                s.orthogonality_residual()
            )));
        }
        let basis = s.t01_basis()?;
        let a = self.nabla_j_matrix(p, x)?;
        let lhs = linalg::restricted_trace(&linalg::complexify(&(&s.j * &a * &a)), &basis.w)?.im;
        let rhs = 2.0 * basis.z.iter().map(|z| (&a * z).norm_squared()).sum::<f64>();
        Ok((lhs, rhs))
    }

    pub fn jrm_split(&self, p: &RVector) -> Result<JrmSplit> {
        JrmSplit::new(&self.field.structure(p)?)
    }

    /// `Q_Z(X) = ((nabla_X J) Z, J m(Z, X))` with the inner product of the
    /// real/imaginary split at `p`.
    pub fn q_form(&self, p: &RVector, z: &RVector, x: &RVector) -> Result<f64> {
        let split = self.jrm_split(p)?;
        let j = &split.j;
        let a = self.nabla_j_matrix(p, x)?;
        let mzx = self.m_operator(p, j, z)? * x;
        Ok(split.ip(&(a * z), &(j * mzx)))
    }

    /// `eta(X, Y) = sum_k nu((nabla_X J) Z_k, (nabla_Y J) Z_k)` over the
    /// default basis of `T^{0,1}`.
    pub fn eta_form(&self, p: &RVector, x: &RVector, y: &RVector) -> Result<f64> {
        let s = self.field.structure(p)?;
        self.eta_form_with(p, x, y, &s.t01_basis()?)
    }

    /// [`Tensors::eta_form`] over a given orthonormal basis. The vectors
    /// `Z_k` are rescaled so that `Z_k + iJZ_k` is unit in the metric,
    /// which makes the sum basis independent.
    pub fn eta_form_with(&self, p: &RVector, x: &RVector, y: &RVector, basis: &T01Basis) -> Result<f64> {
        let split = self.jrm_split(p)?;
        let a = self.nabla_j_matrix(p, x)?;
        let b = self.nabla_j_matrix(p, y)?;
        let inv_scale = 1.0 / split.scale;
        Ok(basis
            .z
            .iter()
            .map(|z| split.nu(&(&a * z), &(&b * z)) * inv_scale)
            .sum())
    }

    /// Both sides of `P^+(nabla_{X+iJX}(Y + iJY)) = -P^+(m(X, Y))`, where
    /// `Y + iJY` is extended by `q -> Pi_q Y + i J_q Pi_q Y`.
    pub fn complexified_identity(&self, p: &RVector, x: &RVector, y: &RVector) -> Result<(CVector, CVector)> {
        let s = self.field.structure(p)?;
        let backend = self.backend();
        let field = self.field;
        let re = |q: &RVector| -> Result<RVector> { Ok(backend.tangent_projector(q) * y) };
        let im = |q: &RVector| -> Result<RVector> { Ok(field.eval(q)? * backend.tangent_projector(q) * y) };
        let jx = &s.j * x;
        let d = |dir: &RVector| -> Result<CVector> {
            let r = backend.covariant_derivative_vec(re, p, dir, self.step)?;
            let i = backend.covariant_derivative_vec(im, p, dir, self.step)?;
            Ok(linalg::combine(&r, &i))
        };
        let nabla = d(x)? + d(&jx)? * linalg::I;
        let pp = s.p_plus();
        let m = self.m_operator(p, &s.j, x)? * y;
        Ok((&pp * nabla, -(&pp * linalg::complexify_vec(&m))))
    }
}

/// Split `Q = R + iM` of the orthogonal projector onto `T^{0,1}`, with the
/// 2-form `nu(a, b) = <M a, b>` and the inner product `ip(a, b) = nu(a, Jb)`.
#[derive(Clone, Debug)]
pub struct JrmSplit {
    pub q: linalg::CMatrix,
    pub r: RMatrix,
    pub m: RMatrix,
    pub j: RMatrix,
    pub pi: RMatrix,
    pub scale: f64,
    pub complex_dim: usize,
}

impl JrmSplit {
    pub fn new(s: &PointStructure) -> Result<Self> {
        let q = s.t01_basis()?.projector();
        Ok(Self {
            r: q.map(|z| z.re),
            m: q.map(|z| z.im),
            q,
            j: s.j.clone(),
            pi: s.pi.clone(),
            scale: s.scale,
            complex_dim: s.complex_dim,
        })
    }

    pub fn nu(&self, a: &RVector, b: &RVector) -> f64 {
        self.scale * (&self.m * a).dot(b)
    }

    pub fn ip(&self, a: &RVector, b: &RVector) -> f64 {
        self.nu(a, &(&self.j * b))
    }

    /// Gram matrices of `nu` and `ip` on an orthonormal frame of the
    /// tangent space.
    fn grams(&self) -> (RMatrix, RMatrix, Vec<RVector>) {
        let frame: Vec<RVector> = {
            let cols: Vec<RVector> = self.pi.column_iter().map(|c| c.into_owned()).collect();
            let mut out: Vec<RVector> = Vec::new();
            for mut v in cols {
                for _ in 0..2 {
                    for e in &out {
                        let c = v.dot(e);
                        v -= e * c;
                    }
                }
                let n = v.norm();
                if n > 1e-8 {
                    out.push(v / n);
                }
            }
            out
        };
        let k = frame.len();
        let nu = RMatrix::from_fn(k, k, |a, b| self.nu(&frame[a], &frame[b]));
        let ip = RMatrix::from_fn(k, k, |a, b| self.ip(&frame[a], &frame[b]));
        (nu, ip, frame)
    }

    /// Named residuals of every algebraic property of the split, plus the
    /// smallest eigenvalue of the `ip` Gram matrix (expected positive).
    pub fn property_residuals(&self) -> Vec<(&'static str, f64)> {
        let (r, m, j, pi) = (&self.r, &self.m, &self.j, &self.pi);
        let jt = j.transpose();
        let (nu, ip, frame) = self.grams();
        let j_frame = RMatrix::from_fn(frame.len(), frame.len(), |a, b| frame[a].dot(&(j * &frame[b])));
        let nu_j = j_frame.transpose() * &nu * &j_frame;
        let ip_j = j_frame.transpose() * &ip * &j_frame;
        let recon = (linalg::complexify(r) + linalg::complexify(m) * linalg::I - &self.q).norm();
        vec![
            ("r_minus_mj_is_identity", (r - m * j - pi).norm()),
            ("r_symmetric", (r - r.transpose()).norm()),
            ("m_antisymmetric", (m + m.transpose()).norm()),
            ("trace_q_is_half_dim", (self.q.trace() - C64::new(self.complex_dim as f64, 0.0)).norm()),
            ("r_idempotent_split", (r * r - m * m - r).norm()),
            ("rm_anticommutator", (r * m + m * r - m).norm()),
            ("mj_skew_adjoint", (m * j + &jt * m).norm()),
            ("m2j_identity", (m * m * j - &jt * m * m + m).norm()),
            ("nu_alternating", (&nu + nu.transpose()).norm()),
            ("ip_symmetric", (&ip - ip.transpose()).norm()),
            ("nu_j_invariant", (&nu_j - &nu).norm()),
            ("ip_j_invariant", (&ip_j - &ip).norm()),
            ("reconstruction", recon),
        ]
    }

    pub fn ip_min_eigenvalue(&self) -> f64 {
        let (_, ip, _) = self.grams();
        let sym = (&ip + ip.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }
}

/// Random real vector of standard normal entries, useful for probing
/// multilinear identities.
pub fn gaussian_vector(dim: usize, rng: &mut ChaCha8Rng) -> RVector {
    RVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal))
}
