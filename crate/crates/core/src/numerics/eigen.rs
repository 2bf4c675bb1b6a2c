use alloc::vec::Vec;

use num_traits::Float;

use super::linalg::{cholesky_spd, Matrix, SymMatrix};
use crate::error::{Error, Result};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(a: &SymMatrix) -> Vec<f64> {
    let n = a.order();
    let mut m = a.as_matrix().clone();
    let scale = m.frobenius_norm();
    if scale == 0.0 {
        return alloc::vec![0.0; n];
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, p, q, c, s);
            }
        }
    }
    let mut ev = m.diagonal();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    ev
}

fn rotate(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.rows();
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
}

/// Eigenvalues of `H⁻¹J`, ascending.
///
/// With `H = LLᵀ` the problem is similar to the symmetric `L⁻¹JL⁻ᵀ`, so the
/// eigenvalues are real. Values in `[-1e-10, 0)` are roundoff and reported
/// as zero.
pub fn h_inv_j_eigenvalues(j: &SymMatrix, h: &SymMatrix) -> Result<Vec<f64>> {
    let p = h.order();
    if j.order() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: j.order(),
        });
    }
    let chol = cholesky_spd(h)?;
    // W = L⁻¹ J L⁻ᵀ, built column by column.
    let mut linv_j = Matrix::zeros(p, p);
    for c in 0..p {
        let col: Vec<f64> = (0..p).map(|r| j[(r, c)]).collect();
        let y = chol.forward(&col);
        for r in 0..p {
            linv_j[(r, c)] = y[r];
        }
    }
    let mut w = Matrix::zeros(p, p);
    for r in 0..p {
        let y = chol.forward(linv_j.row(r));
        for c in 0..p {
            w[(r, c)] = y[c];
        }
    }
    let mut ev = symmetric_eigenvalues(&SymMatrix::from_symmetrized(w));
    for v in ev.iter_mut() {
        if *v < 0.0 && *v >= -1e-10 {
            *v = 0.0;
        }
    }
    Ok(ev)
}
