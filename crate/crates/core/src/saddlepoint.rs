//! Exponential tilting and the nonparametric saddlepoint statistic.
//!
//! With unit scores `sᵢ(θ₀)` at the null, the tilt `β` makes the weighted
//! score vanish, `Σ wᵢ sᵢ(θ₀) = 0` with `wᵢ ∝ exp(βᵀsᵢ(θ₀))`. The saddlepoint
//! `λ` minimizes the cumulant generating function of the fitted scores under
//! those weights,
//!
//! ```text
//! K_w(λ) = log Σᵢ wᵢ exp(λᵀ sᵢ(θ̂)),
//! ```
//!
//! and the statistic is `−2n K_w(λ)`. Both problems minimize a log-sum-exp
//! of affine functions, so they share one damped Newton solver.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::classic::{StatKind, TestOutcome};
use crate::error::{Error, Result};
use crate::inference::{fit_mple, FitOptions, FitResult};
use crate::model::{check_theta, unit_scores, ScoreModel, UnitScoreMatrix};
use crate::numerics::{chisq_tail, cholesky_spd, log_sum_exp, norm_inf, CategoricalSampler, Matrix, RngStream, SymMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct TiltSolution {
    pub beta: Vec<f64>,
    pub weights: Vec<f64>,
    /// `log wᵢ`, kept separately so that underflowed weights stay usable.
    pub log_weights: Vec<f64>,
    /// `Σ wᵢ log(n wᵢ)`.
    pub kl_backward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleSolution {
    pub lambda: Vec<f64>,
    pub k_w: f64,
}

struct LseMin {
    x: Vec<f64>,
    value: f64,
    log_probs: Vec<f64>,
}

/// Minimizes `log Σᵢ exp(bᵢ + xᵀsᵢ)` over `x`.
fn minimize_lse(scores: &UnitScoreMatrix, base: &[f64]) -> Result<LseMin> {
    let n = scores.n_units();
    let p = scores.dim();
    let smax = scores.as_matrix().max_abs();
    if smax == 0.0 {
        let value = log_sum_exp(base);
        return Ok(LseMin {
            x: vec![0.0; p],
            value,
            log_probs: base.iter().map(|b| b - value).collect(),
        });
    }
    hull_precheck(scores, base)?;

    let tol_hard = 1e-12 * smax.max(1.0);
    let tol_soft = 1e-9 * smax.max(1.0);
    let eval = |x: &[f64]| -> (f64, Vec<f64>) {
        let a: Vec<f64> = (0..n)
            .map(|i| base[i] + x.iter().zip(scores.unit(i)).map(|(u, v)| u * v).sum::<f64>())
            .collect();
        let k = log_sum_exp(&a);
        (k, a.into_iter().map(|v| v - k).collect())
    };
    let moments = |log_probs: &[f64]| -> (Vec<f64>, Matrix) {
        let mut g = vec![0.0; p];
        let mut h = Matrix::zeros(p, p);
        for i in 0..n {
            let w = log_probs[i].exp();
            if w == 0.0 {
                continue;
            }
            let s = scores.unit(i);
            for a in 0..p {
                g[a] += w * s[a];
                for b in 0..=a {
                    h[(a, b)] += w * s[a] * s[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..=a {
                let v = h[(a, b)] - g[a] * g[b];
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
        }
        (g, h)
    };

    let mut x = vec![0.0; p];
    let (mut value, mut log_probs) = eval(&x);
    let mut decrement = f64::INFINITY;
    for _ in 0..500 {
        let (g, h) = moments(&log_probs);
        let gnorm = norm_inf(&g);
        if gnorm <= tol_hard {
            return Ok(LseMin { x, value, log_probs });
        }
        let step = newton_direction(&h, &g);
        let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
        // The Newton decrement `gᵀH⁻¹g` does not depend on the coordinates
        // of the scores, unlike `‖g‖∞`.
        decrement = if slope < 0.0 { -slope } else { f64::INFINITY };
        if decrement <= 1e-20 {
            return Ok(LseMin { x, value, log_probs });
        }
        let (step, slope) = if slope < 0.0 {
            (step, slope)
        } else {
            (g.iter().map(|v| -v).collect(), -g.iter().map(|v| v * v).sum::<f64>())
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a + t * d).collect();
            let (v, lp) = eval(&trial);
            if v.is_finite() && v <= value + 1e-4 * t * slope {
                moved = v < value || trial != x;
                x = trial;
                value = v;
                log_probs = lp;
                break;
            }
            t *= 0.5;
        }
        // Exponents this spread apart mean the mass has collapsed onto a face
        // of the hull.
        let spread = (0..n)
            .map(|i| x.iter().zip(scores.unit(i)).map(|(u, v)| u * v).sum::<f64>().abs())
            .fold(0.0, f64::max);
        if spread > 1e3 {
            return Err(Error::HullViolation);
        }
        if !moved {
            return if gnorm <= tol_soft || decrement <= 1e-12 {
                Ok(LseMin { x, value, log_probs })
            } else {
                Err(Error::HullViolation)
            };
        }
    }
    let (g, _) = moments(&log_probs);
    if norm_inf(&g) <= tol_soft || decrement <= 1e-12 {
        Ok(LseMin { x, value, log_probs })
    } else {
        Err(Error::HullViolation)
    }
}

/// Newton direction `−H⁻¹g`, with a small ridge when `H` is singular (scores
/// confined to a subspace).
fn newton_direction(h: &Matrix, g: &[f64]) -> Vec<f64> {
    let p = g.len();
    let trace: f64 = (0..p).map(|i| h[(i, i)]).sum::<f64>().max(f64::MIN_POSITIVE);
    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut ridge = 0.0;
    for _ in 0..8 {
        let mut m = h.clone();
        for i in 0..p {
            m[(i, i)] += ridge;
        }
        if let Ok(c) = cholesky_spd(&SymMatrix::from_symmetrized(m)) {
            let d = c.solve(&neg);
            if d.iter().all(|v| v.is_finite()) {
                return d;
            }
        }
        ridge = if ridge == 0.0 { 1e-12 * trace } else { ridge * 100.0 };
    }
    neg
}

/// Zero cannot be a weighted mean when some coordinate of every unit with
/// positive weight has the same strict sign.
fn hull_precheck(scores: &UnitScoreMatrix, base: &[f64]) -> Result<()> {
    for k in 0..scores.dim() {
        let active = (0..scores.n_units()).filter(|&i| base[i] > f64::NEG_INFINITY);
        let (mut pos, mut neg) = (false, false);
        let mut any_zero = false;
        for i in active {
            let v = scores.unit(i)[k];
            pos |= v > 0.0;
            neg |= v < 0.0;
            any_zero |= v == 0.0;
        }
        if (pos ^ neg) && !any_zero {
            return Err(Error::HullViolation);
        }
    }
    Ok(())
}

/// Exponential tilt of the empirical distribution that centres the null
/// scores.
pub fn solve_tilt(scores_at_null: &UnitScoreMatrix) -> Result<TiltSolution> {
    let n = scores_at_null.n_units();
    let p = scores_at_null.dim();
    if n < p + 1 {
        return Err(Error::domain("tilting needs more units than parameters"));
    }
    let base = vec![-(n as f64).ln(); n];
    let sol = minimize_lse(scores_at_null, &base)?;
    let weights: Vec<f64> = sol.log_probs.iter().map(|v| v.exp()).collect();
    let kl_backward = weights
        .iter()
        .zip(&sol.log_probs)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, lw)| w * (lw + (n as f64).ln()))
        .sum::<f64>()
        .max(0.0);
    Ok(TiltSolution {
        beta: sol.x,
        weights,
        log_weights: sol.log_probs,
        kl_backward,
    })
}

/// Saddlepoint of the fitted scores under the tilted weights.
pub fn solve_saddle(scores_at_fit: &UnitScoreMatrix, tilt: &TiltSolution) -> Result<SaddleSolution> {
    if scores_at_fit.n_units() != tilt.log_weights.len() {
        return Err(Error::DimensionMismatch {
            expected: tilt.log_weights.len(),
            got: scores_at_fit.n_units(),
        });
    }
    let sol = minimize_lse(scores_at_fit, &tilt.log_weights)?;
    Ok(SaddleSolution {
        lambda: sol.x,
        k_w: sol.value.min(0.0),
    })
}

/// Tilt, saddlepoint and statistic computed from the two score matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SpDetail {
    pub tilt: TiltSolution,
    pub saddle: SaddleSolution,
    pub value: f64,
}

pub fn pw_sp_from_scores(null_scores: &UnitScoreMatrix, fit_scores: &UnitScoreMatrix) -> Result<SpDetail> {
    let tilt = solve_tilt(null_scores)?;
    let saddle = solve_saddle(fit_scores, &tilt)?;
    let value = (-2.0 * null_scores.n_units() as f64 * saddle.k_w).max(0.0);
    Ok(SpDetail { tilt, saddle, value })
}

/// The saddlepoint statistic with its `χ²_p` p-value.
pub fn stat_pw_sp<M: ScoreModel>(model: &M, data: &M::Data, theta0: &[f64], fit: &FitResult) -> Result<TestOutcome> {
    Ok(stat_pw_sp_detail(model, data, theta0, fit)?.0)
}

pub fn stat_pw_sp_detail<M: ScoreModel>(
    model: &M,
    data: &M::Data,
    theta0: &[f64],
    fit: &FitResult,
) -> Result<(TestOutcome, SpDetail)> {
    check_theta(model, theta0)?;
    let null_scores = unit_scores(model, theta0, data)?;
    let fit_scores = unit_scores(model, fit.theta_hat.values(), data)?;
    let detail = pw_sp_from_scores(&null_scores, &fit_scores)?;
    let out = TestOutcome {
        kind: StatKind::Sp,
        value: detail.value,
        df: model.dim(),
        p_value: Some(chisq_tail(detail.value, model.dim())?),
        kappa: None,
        provenance: None,
        clamped: false,
        degenerate: false,
    };
    Ok((out, detail))
}

#[derive(Debug, Clone, Copy)]
pub struct BootstrapOptions {
    pub replicates: usize,
    /// Largest tolerated fraction of failed resamples.
    pub max_failure_fraction: f64,
    pub fit: FitOptions,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            replicates: 200,
            max_failure_fraction: 0.1,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSummary {
    pub observed: f64,
    pub p_value: f64,
    pub replicates: Vec<f64>,
    pub failed: usize,
}

/// Draws one resample from the tilted weights, refits without weights and
/// returns the statistic recomputed at the null.
pub fn bootstrap_replicate<M: ScoreModel>(
    model: &M,
    data: &M::Data,
    theta0: &[f64],
    sampler: &CategoricalSampler,
    start: &[f64],
    fit_opts: &FitOptions,
    stream: &RngStream,
) -> Result<f64> {
    let mut rng = stream.rng();
    let idx: Vec<usize> = (0..sampler.len()).map(|_| sampler.sample(&mut rng)).collect();
    let boot = model.resample(data, &idx);
    let fit = fit_mple(model, &boot, Some(start), fit_opts)?;
    let null_scores = unit_scores(model, theta0, &boot)?;
    let fit_scores = unit_scores(model, fit.theta_hat.values(), &boot)?;
    Ok(pw_sp_from_scores(&null_scores, &fit_scores)?.value)
}

/// Bootstrap p-value `(1 + #{T*_b ≥ T})/(B' + 1)` over the `B'` successful
/// resamples.
pub fn bootstrap_pvalue(observed: f64, replicates: &[Result<f64>], max_failure_fraction: f64) -> Result<BootstrapSummary> {
    let total = replicates.len();
    let ok: Vec<f64> = replicates.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
    let failed = total - ok.len();
    if ok.is_empty() || failed as f64 > max_failure_fraction * total as f64 {
        return Err(Error::BootstrapUnstable { failed, total });
    }
    let exceed = ok.iter().filter(|t| **t >= observed).count();
    Ok(BootstrapSummary {
        observed,
        p_value: (1 + exceed) as f64 / (ok.len() + 1) as f64,
        replicates: ok,
        failed,
    })
}

/// Saddlepoint statistic calibrated by the tilted bootstrap. Resample `b`
/// uses `stream.substream(b)`.
pub fn bootstrap_pw_sp<M: ScoreModel>(
    model: &M,
    data: &M::Data,
    theta0: &[f64],
    fit: &FitResult,
    opts: &BootstrapOptions,
    stream: &RngStream,
) -> Result<(TestOutcome, BootstrapSummary)> {
    if opts.replicates == 0 {
        return Err(Error::domain("bootstrap needs at least one replicate"));
    }
    let (mut outcome, detail) = stat_pw_sp_detail(model, data, theta0, fit)?;
    let sampler = tilt_sampler(&detail.tilt)?;
    let reps: Vec<Result<f64>> = (0..opts.replicates as u64)
        .map(|b| {
            bootstrap_replicate(
                model,
                data,
                theta0,
                &sampler,
                fit.theta_hat.values(),
                &opts.fit,
                &stream.substream(b),
            )
        })
        .collect();
    let summary = bootstrap_pvalue(detail.value, &reps, opts.max_failure_fraction)?;
    outcome.p_value = Some(summary.p_value);
    Ok((outcome, summary))
}

/// Categorical sampler over the tilted weights, renormalized against
/// roundoff.
pub fn tilt_sampler(tilt: &TiltSolution) -> Result<CategoricalSampler> {
    let total: f64 = tilt.weights.iter().sum();
    let w: Vec<f64> = tilt.weights.iter().map(|v| v / total).collect();
    CategoricalSampler::new(&w)
}
