//! Small dense complex linear algebra.
//!
//! Two inner products live side by side here and neither is ever applied
//! implicitly: [`bilinear_dot`] is `C`-linear in both slots, while
//! [`hermitian_dot`] is conjugate-linear in its second slot. Problem sizes
//! are at most 7x7, so everything is dense.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;
pub type RVector = DVector<f64>;
pub type RMatrix = DMatrix<f64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

fn check_len(u: &CVector, v: &CVector) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::Dimension {
            expected: u.len(),
            found: v.len(),
        });
    }
    Ok(())
}

/// `sum_k u_k v_k`, no conjugation.
pub fn bilinear_dot(u: &CVector, v: &CVector) -> Result<C64> {
    check_len(u, v)?;
    Ok(u.iter().zip(v.iter()).map(|(a, b)| a * b).sum())
}

/// `sum_k u_k conj(v_k)`.
pub fn hermitian_dot(u: &CVector, v: &CVector) -> Result<C64> {
    check_len(u, v)?;
    Ok(u.iter().zip(v.iter()).map(|(a, b)| a * b.conj()).sum())
}

// Infallible variant for internal callers that already know the lengths agree.
pub(crate) fn hdot(u: &CVector, v: &CVector) -> C64 {
    debug_assert_eq!(u.len(), v.len());
    u.iter().zip(v.iter()).map(|(a, b)| a * b.conj()).sum()
}

pub fn complexify(m: &RMatrix) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

pub fn complexify_vec(v: &RVector) -> CVector {
    v.map(|x| C64::new(x, 0.0))
}

/// `re + i * im` for a pair of real vectors.
pub fn combine(re: &RVector, im: &RVector) -> CVector {
    re.zip_map(im, C64::new)
}

pub fn real_part(v: &CVector) -> RVector {
    v.map(|z| z.re)
}

pub fn imag_part(v: &CVector) -> RVector {
    v.map(|z| z.im)
}

/// Modified Gram-Schmidt for the Hermitian inner product, run twice per
/// vector. Inputs whose residual falls below `tol` after projection are
/// dropped, so the output length is the detected rank.
pub fn gram_schmidt_hermitian(vs: &[CVector], tol: f64) -> Vec<CVector> {
    assert!(tol > 0.0, "rank tolerance must be positive");
    let mut basis: Vec<CVector> = Vec::with_capacity(vs.len());
    for v in vs {
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = hdot(&w, b);
                w -= b * c;
            }
        }
        let norm = w.norm();
        if norm >= tol {
            basis.push(w / C64::new(norm, 0.0));
        }
    }
    basis
}

/// [`gram_schmidt_hermitian`] with the default threshold `1e-10 * max |v|`.
pub fn gram_schmidt_default(vs: &[CVector]) -> Vec<CVector> {
    let scale = vs.iter().map(|v| v.norm()).fold(0.0_f64, f64::max);
    gram_schmidt_hermitian(vs, 1e-10 * scale.max(f64::MIN_POSITIVE))
}

fn check_square(a: &CMatrix, n: usize) -> Result<()> {
    if a.nrows() != n {
        return Err(Error::Dimension {
            expected: n,
            found: a.nrows(),
        });
    }
    if a.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            found: a.ncols(),
        });
    }
    Ok(())
}

/// Off-diagonal blocks of `t` relative to the splitting `Im(P) + Ker(P)`,
/// returned as full-size ambient matrices `B = P T (I - P)` and
/// `C = (I - P) T P`.
pub fn block_split(p: &CMatrix, t: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let n = p.nrows();
    check_square(p, n)?;
    check_square(t, n)?;
    let q = CMatrix::identity(n, n) - p;
    Ok((p * t * &q, &q * t * p))
}

/// Trace of `a` restricted to the span of a Hermitian-orthonormal `basis`.
pub fn restricted_trace(a: &CMatrix, basis: &[CVector]) -> Result<C64> {
    for w in basis {
        check_square(a, w.len())?;
    }
    for (j, wj) in basis.iter().enumerate() {
        for (k, wk) in basis.iter().enumerate() {
            let target = if j == k { 1.0 } else { 0.0 };
            let dev = (hdot(wj, wk) - C64::new(target, 0.0)).norm();
            if dev > 1e-10 {
                return Err(Error::Precondition(format!(
                    "basis is not orthonormal (deviation {dev:.3e})"
                )));
            }
        }
    }
    let invariance_tol = 1e-8 * a.norm().max(1.0);
    let mut trace = C64::new(0.0, 0.0);
    let mut worst: f64 = 0.0;
    for w in basis {
        let aw = a * w;
        let mut rest = aw.clone();
        for b in basis {
            rest -= b * hdot(&aw, b);
        }
        worst = worst.max(rest.norm());
        trace += hdot(&aw, w);
    }
    if worst > invariance_tol {
        return Err(Error::Invariance { residual: worst });
    }
    Ok(trace)
}

/// Orthogonal projector onto the column span of `a`.
pub fn column_span_projector(a: &CMatrix) -> CMatrix {
    let cols: Vec<CVector> = a.column_iter().map(|c| c.into_owned()).collect();
    let basis = gram_schmidt_default(&cols);
    let n = a.nrows();
    basis
        .iter()
        .fold(CMatrix::zeros(n, n), |acc, w| acc + w * w.adjoint())
}
