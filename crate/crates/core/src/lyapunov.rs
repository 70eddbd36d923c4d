//! Dense continuous Lyapunov solver and small spectral helpers.
//!
//! `solve_continuous_lyapunov` solves `Aᵀ X + X A + Q = 0` with the
//! Bartels–Stewart method: reduce `A` to real Schur form `A = Z T Zᵀ`, solve
//! the quasi-triangular equation `Tᵀ Y + Y T = -Zᵀ Q Z` block by block, and
//! map back with `X = Z Y Zᵀ`.

use nalgebra::{Complex, DMatrix, DVector, Schur};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LyapunovError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("Schur decomposition did not converge")]
    SchurFailed,
    #[error("Lyapunov operator is singular: eigenvalues {0} and {1} sum to ~0")]
    Singular(String, String),
}

const SCHUR_MAX_ITER: usize = 10_000;

fn schur(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), LyapunovError> {
    if a.nrows() != a.ncols() {
        return Err(LyapunovError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let s = Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or(LyapunovError::SchurFailed)?;
    Ok(s.unpack())
}

/// Eigenvalues of a general real matrix.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>, LyapunovError> {
    if a.nrows() != a.ncols() {
        return Err(LyapunovError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let s = Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or(LyapunovError::SchurFailed)?;
    let mut ev: Vec<Complex<f64>> = s.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    Ok(ev)
}

/// Eigenvalues of the symmetric part of `a`, ascending.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Diagonal block sizes of a real quasi-triangular matrix.
fn diagonal_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut k = 0;
    while k < n {
        let two = k + 1 < n && {
            let scale = t[(k, k)].abs() + t[(k + 1, k + 1)].abs();
            t[(k + 1, k)].abs() > f64::EPSILON * scale.max(f64::MIN_POSITIVE)
        };
        let size = if two { 2 } else { 1 };
        blocks.push((k, size));
        k += size;
    }
    blocks
}

/// Solves `Aᵀ X + X A + Q = 0`. The result is symmetrised when `Q` is
/// symmetric.
pub fn solve_continuous_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>, LyapunovError> {
    let n = a.nrows();
    if q.shape() != (n, n) {
        return Err(LyapunovError::NotSquare {
            rows: q.nrows(),
            cols: q.ncols(),
        });
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let (z, t) = schur(a)?;
    let c = -(z.transpose() * q * &z);
    let blocks = diagonal_blocks(&t);
    let mut y = DMatrix::<f64>::zeros(n, n);

    for &(i0, p) in &blocks {
        for &(j0, r) in &blocks {
            // rhs = C_IJ - Σ_{K<I} T_KIᵀ Y_KJ - Σ_{K<J} Y_IK T_KJ
            let mut rhs = c.view((i0, j0), (p, r)).into_owned();
            if i0 > 0 {
                rhs -= t.view((0, i0), (i0, p)).transpose() * y.view((0, j0), (i0, r));
            }
            if j0 > 0 {
                rhs -= y.view((i0, 0), (p, j0)) * t.view((0, j0), (j0, r));
            }
            let tii = t.view((i0, i0), (p, p));
            let tjj = t.view((j0, j0), (r, r));
            // (I_r ⊗ T_IIᵀ + T_JJᵀ ⊗ I_p) vec(Y) = vec(rhs)
            let dim = p * r;
            let mut op = DMatrix::<f64>::zeros(dim, dim);
            for col in 0..r {
                for a_ in 0..p {
                    for b_ in 0..p {
                        op[(col * p + a_, col * p + b_)] += tii[(b_, a_)];
                    }
                }
            }
            for ca in 0..r {
                for cb in 0..r {
                    let v = tjj[(cb, ca)];
                    if v != 0.0 {
                        for row in 0..p {
                            op[(ca * p + row, cb * p + row)] += v;
                        }
                    }
                }
            }
            let b = DVector::from_column_slice(rhs.as_slice());
            let scale = op.amax().max(f64::MIN_POSITIVE);
            let lu = op.clone().lu();
            let sol = lu
                .solve(&b)
                .filter(|_| lu.u().diagonal().iter().all(|d| d.abs() > 1e-14 * scale))
                .ok_or_else(|| {
                    LyapunovError::Singular(format!("{:.3e}", t[(i0, i0)]), format!("{:.3e}", t[(j0, j0)]))
                })?;
            y.view_mut((i0, j0), (p, r)).copy_from_slice(sol.as_slice());
        }
    }
    let x = &z * y * z.transpose();
    Ok((&x + x.transpose()) * 0.5)
}

/// Orthonormal basis (N × (N-1)) of the orthogonal complement of `v`, taken
/// from the Householder reflector that maps `v` onto the first axis.
pub fn complement_basis(v: &DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    let norm = v.norm();
    let mut w = v.clone();
    let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
    w[0] += sign * norm;
    let ww = w.norm_squared();
    let mut h = DMatrix::<f64>::identity(n, n);
    if ww > 0.0 {
        h -= (&w * w.transpose()) * (2.0 / ww);
    }
    h.columns(1, n - 1).into_owned()
}
