//! Dense complex linear algebra shared by every other module.
//!
//! Matrices are plain `nalgebra` dynamic matrices over `Complex<f64>`. The
//! singular value decomposition is delegated to `nalgebra`; the Hermitian
//! eigensolver is a cyclic Jacobi iteration written here so that the two
//! factorizations stay independent of each other and can cross-check.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};

#[allow(non_camel_case_types)]
pub type c64 = Complex<f64>;
pub type ComplexMatrix = DMatrix<c64>;
pub type ComplexVector = DVector<c64>;

/// Thin SVD with singular values sorted in descending order.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `rows × k` with orthonormal columns, `k = min(rows, cols)`.
    pub left_vectors: ComplexMatrix,
    pub singular_values: Vec<f64>,
    /// `cols × k` with orthonormal columns.
    pub right_vectors: ComplexMatrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let k = self.singular_values.len();
        let mut scaled = self.left_vectors.clone();
        for (j, &s) in self.singular_values.iter().enumerate().take(k) {
            scaled.column_mut(j).scale_mut(s);
        }
        scaled * self.right_vectors.adjoint()
    }
}

#[derive(Debug, Clone)]
pub struct HermitianEig {
    /// Real eigenvalues, descending.
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: ComplexMatrix,
}

pub fn ensure_finite(a: &ComplexMatrix) -> Result<()> {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let z = a[(i, j)];
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

pub fn svd_descending(a: &ComplexMatrix) -> Result<SvdResult> {
    ensure_finite(a)?;
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Ok(SvdResult {
            left_vectors: ComplexMatrix::zeros(m, 0),
            singular_values: Vec::new(),
            right_vectors: ComplexMatrix::zeros(n, 0),
        });
    }
    let svd = a.clone().svd_unordered(true, true);
    let u = svd.u.expect("left vectors requested");
    let v_t = svd.v_t.expect("right vectors requested");

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| {
        svd.singular_values[y]
            .partial_cmp(&svd.singular_values[x])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.cmp(&y))
    });

    let mut left = ComplexMatrix::zeros(m, k);
    let mut right = ComplexMatrix::zeros(n, k);
    let mut values = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        left.set_column(dst, &u.column(src));
        right.set_column(dst, &v_t.row(src).adjoint());
        values.push(svd.singular_values[src].max(0.0));
    }
    Ok(SvdResult {
        left_vectors: left,
        singular_values: values,
        right_vectors: right,
    })
}

const HERMITIAN_TOL: f64 = 1e-9;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. Eigenvalues are returned in descending order.
pub fn hermitian_eig_descending(a: &ComplexMatrix) -> Result<HermitianEig> {
    ensure_finite(a)?;
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let asym = (a - a.adjoint()).norm() / scale;
    if a.norm() > 0.0 && asym > HERMITIAN_TOL {
        return Err(Error::NotHermitian { asymmetry: asym });
    }

    // Work on the exactly symmetrized copy.
    let mut w = (a + a.adjoint()).scale(0.5);
    let mut v = ComplexMatrix::identity(n, n);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| w[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let g = w[(p, q)];
                let g_abs = g.norm();
                if g_abs <= 1e-300 {
                    continue;
                }
                let phase = g / g_abs;
                let app = w[(p, p)].re;
                let aqq = w[(q, q)].re;
                let tau = (aqq - app) / (2.0 * g_abs);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Unitary rotation acting on the (p, q) plane.
                let gpp = c64::new(c, 0.0);
                let gpq = c64::new(s, 0.0);
                let gqp = -phase.conj() * s;
                let gqq = phase.conj() * c;

                for k in 0..n {
                    let akp = w[(k, p)];
                    let akq = w[(k, q)];
                    w[(k, p)] = akp * gpp + akq * gqp;
                    w[(k, q)] = akp * gpq + akq * gqq;
                }
                for k in 0..n {
                    let apk = w[(p, k)];
                    let aqk = w[(q, k)];
                    w[(p, k)] = gpp.conj() * apk + gqp.conj() * aqk;
                    w[(q, k)] = gpq.conj() * apk + gqq.conj() * aqk;
                }
                w[(p, q)] = c64::new(0.0, 0.0);
                w[(q, p)] = c64::new(0.0, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * gpp + vkq * gqp;
                    v[(k, q)] = vkp * gpq + vkq * gqq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        w[(y, y)]
            .re
            .partial_cmp(&w[(x, x)].re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.cmp(&y))
    });
    let mut vectors = ComplexMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
        values.push(w[(src, src)].re);
    }
    Ok(HermitianEig { values, vectors })
}

/// Largest eigenvalue of `aᴴa`, computed on the smaller of the two Gram
/// matrices (both share their non-zero spectrum).
pub fn gram_max_eigenvalue(a: &ComplexMatrix) -> Result<f64> {
    let gram = if a.nrows() <= a.ncols() {
        a * a.adjoint()
    } else {
        a.adjoint() * a
    };
    Ok(hermitian_eig_descending(&gram)?
        .values
        .first()
        .copied()
        .unwrap_or(0.0)
        .max(0.0))
}

/// `log2 det(I + x)` for a Hermitian positive semidefinite `x`, through its
/// eigenvalues.
pub fn log2_det_identity_plus(x: &ComplexMatrix) -> Result<f64> {
    let eig = hermitian_eig_descending(x)?;
    Ok(eig.values.iter().map(|&l| (1.0 + l.max(0.0)).log2()).sum())
}

/// Matrix whose columns are the first `k` columns of `a`.
pub fn leading_columns(a: &ComplexMatrix, k: usize) -> ComplexMatrix {
    a.columns(0, k).into_owned()
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn from_real_diagonal(values: &[f64]) -> ComplexMatrix {
    let n = values.len();
    let mut m = ComplexMatrix::zeros(n, n);
    for (i, &x) in values.iter().enumerate() {
        m[(i, i)] = c64::new(x, 0.0);
    }
    m
}

/// Unit-modulus complex number `e^{jθ}`.
#[inline]
pub fn cis(theta: f64) -> c64 {
    c64::new(theta.cos(), theta.sin())
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
    }

    pub fn assert_orthonormal_columns(q: &ComplexMatrix, tol: f64) {
        let gram = q.adjoint() * q;
        let err = (gram - identity(q.ncols())).norm();
        assert!(err <= tol, "columns not orthonormal: {err:e}");
    }
}
