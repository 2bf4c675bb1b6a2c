//! Special functions: log-gamma, regularized incomplete gamma, chi-square and
//! standard normal distribution functions.

use num_traits::Float;

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection.
        let pi = core::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * core::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cf(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x.is_infinite() {
        0.0
    } else if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_cf(a, x)
    }
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..10_000 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    (sum.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_cf(a: f64, x: f64) -> f64 {
    // Modified Lentz evaluation of the continued fraction for Q.
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-17 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

fn check_df(df: usize) -> Result<()> {
    if df < 1 {
        return Err(Error::domain("chi-square degrees of freedom must be >= 1"));
    }
    Ok(())
}

/// Upper tail `P(X ≥ x)` of a chi-square variable with `df` degrees of freedom.
pub fn chisq_tail(x: f64, df: usize) -> Result<f64> {
    check_df(df)?;
    if x.is_nan() || x < 0.0 {
        return Err(Error::domain("chi-square argument must be >= 0"));
    }
    Ok(gamma_q(0.5 * df as f64, 0.5 * x).clamp(0.0, 1.0))
}

pub fn chisq_cdf(x: f64, df: usize) -> Result<f64> {
    Ok(1.0 - chisq_tail(x, df)?)
}

/// The `x` with `P(X ≥ x) = alpha`.
pub fn chisq_upper_quantile(alpha: f64, df: usize) -> Result<f64> {
    check_df(df)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain("tail probability must lie in (0, 1)"));
    }
    let tail = |x: f64| gamma_q(0.5 * df as f64, 0.5 * x);
    let mut lo = 0.0;
    let mut hi = df as f64 + 10.0;
    while tail(hi) > alpha {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.max(1e-300) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The `prob` quantile of a chi-square variable.
pub fn chisq_quantile(prob: f64, df: usize) -> Result<f64> {
    chisq_upper_quantile(1.0 - prob, df)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * core::f64::consts::PI).sqrt()
}

/// `log Σ exp(vᵢ)`, stabilised by shifting with the maximum.
///
/// Returns `-∞` for an empty slice.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
