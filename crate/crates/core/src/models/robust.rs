//! Huber-type bounded functions shared by the AR(1) and geostatistical
//! estimating equations.

use crate::error::{Error, Result};
use crate::numerics::{normal_cdf, normal_pdf};

/// `ψ_k(r) = min(k, max(−k, r))`; the identity for `k = ∞`.
pub fn huber_psi(r: f64, k: f64) -> f64 {
    if k.is_infinite() {
        r
    } else {
        r.clamp(-k, k)
    }
}

/// `E[ψ_c(Z)²]` for standard normal `Z`, the Proposal 2 consistency constant.
pub fn huber_beta_const(c: f64) -> f64 {
    if c.is_infinite() {
        return 1.0;
    }
    if c <= 0.0 {
        return 0.0;
    }
    let upper = 1.0 - normal_cdf(c);
    (1.0 - 2.0 * upper) - 2.0 * c * normal_pdf(c) + 2.0 * c * c * upper
}

/// Tuning constants `γ = (a, b, c)` of the bounded estimating equations.
///
/// `a` clamps standardized residuals, `b` clamps regressors (Mallows weight)
/// and `c` clamps residuals in the scale equation. Infinite values recover
/// the classical unbounded equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustTuning {
    a: f64,
    b: f64,
    c: f64,
    beta_c: f64,
}

impl RobustTuning {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b), ("c", c)] {
            if !(v > 0.0) {
                return Err(Error::domain(alloc::format!(
                    "tuning constant {name} must be positive or infinite"
                )));
            }
        }
        Ok(Self {
            a,
            b,
            c,
            beta_c: huber_beta_const(c),
        })
    }

    /// `γ = (∞, ∞, ∞)`.
    pub fn classical() -> Self {
        Self {
            a: f64::INFINITY,
            b: f64::INFINITY,
            c: f64::INFINITY,
            beta_c: 1.0,
        }
    }

    /// `γ = (k, k, k)`.
    pub fn uniform(k: f64) -> Result<Self> {
        Self::new(k, k, k)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn beta_c(&self) -> f64 {
        self.beta_c
    }

    pub fn is_classical(&self) -> bool {
        self.a.is_infinite() && self.b.is_infinite() && self.c.is_infinite()
    }

    pub fn with_c(self, c: f64) -> Result<Self> {
        Self::new(self.a, self.b, c)
    }
}

impl Default for RobustTuning {
    fn default() -> Self {
        Self::classical()
    }
}
