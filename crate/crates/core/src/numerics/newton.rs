use alloc::vec::Vec;

use super::diff::central_jacobian;
use super::linalg::{norm2, norm_inf, Matrix};
use crate::error::{Error, Result};

/// Settings for [`newton_system`].
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Stop once `‖F(x)‖∞ ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Abort with `NoConvergence` once `‖x‖∞` exceeds this bound.
    pub divergence_bound: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 200,
            max_halvings: 30,
            divergence_bound: f64::INFINITY,
        }
    }
}

/// Where the Jacobian of the system comes from.
pub enum Jacobian<'a> {
    Analytic(&'a dyn Fn(&[f64]) -> Option<Matrix>),
    /// Central differences of the residual map.
    Numeric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Damped Newton iteration for a square system `F(x) = 0`.
///
/// `f` returns `None` where the system is not evaluable; the line search
/// treats such points as a failed step. Each accepted step decreases
/// `‖F‖₂` by the Armijo factor `1 - 1e-4 t` for step fraction `t`.
pub fn newton_system<F>(
    f: F,
    jacobian: Jacobian<'_>,
    x0: &[f64],
    opts: &NewtonOptions,
) -> Result<NewtonReport>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let mut x = x0.to_vec();
    let mut fx = f(&x).ok_or_else(|| Error::domain("residual map not evaluable at start"))?;
    if fx.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: fx.len(),
        });
    }
    let stalled = |x: Vec<f64>, fx: &[f64], it: usize| Error::NoConvergence {
        iterations: it,
        residual: norm_inf(fx),
        best: x,
    };

    for it in 0..opts.max_iter {
        if norm_inf(&fx) <= opts.tol {
            return Ok(NewtonReport {
                residual: norm_inf(&fx),
                x,
                iterations: it,
            });
        }
        let jac = match &jacobian {
            Jacobian::Analytic(jf) => jf(&x),
            Jacobian::Numeric => central_jacobian(&f, &x, None),
        };
        let jac = match jac {
            Some(j) if j.is_finite() => j,
            _ => return Err(Error::SingularJacobian),
        };
        let rhs: Vec<f64> = fx.iter().map(|v| -v).collect();
        let step = match jac.solve(&rhs) {
            Ok(d) => d,
            Err(_) => {
                // A vanishing Jᵀ F means x is a stationary point of ‖F‖² that
                // is not a root.
                let g = jac.transpose().matvec(&fx);
                if norm_inf(&g) == 0.0 {
                    return Err(stalled(x, &fx, it));
                }
                return Err(Error::SingularJacobian);
            }
        };

        let r0 = norm2(&fx);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a + t * d).collect();
            if let Some(ft) = f(&trial) {
                if ft.iter().all(|v| v.is_finite()) && norm2(&ft) <= (1.0 - 1e-4 * t) * r0 {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((xn, fn_)) => {
                x = xn;
                fx = fn_;
            }
            None => return Err(stalled(x, &fx, it)),
        }
        if norm_inf(&x) > opts.divergence_bound {
            return Err(stalled(x, &fx, it + 1));
        }
    }
    if norm_inf(&fx) <= opts.tol {
        return Ok(NewtonReport {
            residual: norm_inf(&fx),
            x,
            iterations: opts.max_iter,
        });
    }
    Err(stalled(x, &fx, opts.max_iter))
}
