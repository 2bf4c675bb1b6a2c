use alloc::vec::Vec;

use super::linalg::Matrix;

/// Default step for coordinate `x`: `max(1e-6, 1e-6·|x|)`.
pub fn default_step(x: f64) -> f64 {
    1e-6_f64.max(1e-6 * x.abs())
}

/// Central-difference Jacobian of `f` at `x`, an `m × k` matrix.
///
/// `step` overrides the coordinate-relative default. Returns `None` if `f`
/// cannot be evaluated at one of the stencil points.
pub fn central_jacobian<F>(f: F, x: &[f64], step: Option<f64>) -> Option<Matrix>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let k = x.len();
    let mut xp = x.to_vec();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let h = step.unwrap_or_else(|| default_step(x[j]));
        xp[j] = x[j] + h;
        let fp = f(&xp)?;
        xp[j] = x[j] - h;
        let fm = f(&xp)?;
        xp[j] = x[j];
        // The realised spacing can differ from 2h after rounding.
        let span = (x[j] + h) - (x[j] - h);
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / span).collect());
    }
    let m = cols.first().map_or(0, Vec::len);
    Some(Matrix::from_fn(m, k, |i, j| cols[j][i]))
}

/// Central-difference gradient of a scalar function.
pub fn central_gradient<F>(f: F, x: &[f64], step: Option<f64>) -> Option<Vec<f64>>
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let jac = central_jacobian(|z| f(z).map(|v| alloc::vec![v]), x, step)?;
    Some(jac.row(0).to_vec())
}
