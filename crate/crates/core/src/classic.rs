//! Wald, score and likelihood-ratio type statistics for a simple null.
//!
//! Every function here expects a gradient-type model, i.e. one whose unit
//! scores are the gradients of its pairwise log-likelihood. Wrap robust
//! models in [`crate::model::PairwiseGradient`] first.

use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::inference::{FitResult, GodambeMatrices, Provenance};
use crate::model::{check_theta, pairwise_loglik, total_score, ScoreModel};
use crate::numerics::{chisq_tail, cholesky_spd, dot, h_inv_j_eigenvalues, standard_normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StatKind {
    /// Pairwise likelihood ratio `2[pl(θ̂) − pl(θ₀)]`.
    Pw,
    Wald,
    Score,
    /// `pw / κ₁`, first-moment matched.
    Moment,
    /// Vertically scaled Wald.
    Cb,
    /// Parametrization-invariant adjusted score.
    Inv,
    /// Nonparametric saddlepoint statistic.
    Sp,
}

impl StatKind {
    pub const CLASSIC: [StatKind; 6] = [
        StatKind::Pw,
        StatKind::Wald,
        StatKind::Score,
        StatKind::Moment,
        StatKind::Cb,
        StatKind::Inv,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StatKind::Pw => "pw",
            StatKind::Wald => "wald",
            StatKind::Score => "score",
            StatKind::Moment => "moment",
            StatKind::Cb => "cb",
            StatKind::Inv => "inv",
            StatKind::Sp => "sp",
        }
    }

    pub fn from_name(s: &str) -> Option<StatKind> {
        [StatKind::Sp]
            .into_iter()
            .chain(StatKind::CLASSIC)
            .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    pub kind: StatKind,
    pub value: f64,
    pub df: usize,
    /// Absent when the statistic could not be referred to its null law.
    pub p_value: Option<f64>,
    pub kappa: Option<f64>,
    pub provenance: Option<Provenance>,
    /// A negative raw value was clamped to zero.
    pub clamped: bool,
    /// The adjustment factor was `0/0` and the value was set by continuity.
    pub degenerate: bool,
}

impl TestOutcome {
    pub(crate) fn new(kind: StatKind, raw: f64, df: usize) -> Result<Self> {
        if raw.is_nan() {
            return Err(Error::domain("statistic is NaN"));
        }
        let clamped = raw < 0.0;
        let value = raw.max(0.0);
        Ok(Self {
            kind,
            value,
            df,
            p_value: Some(chisq_tail(value, df)?),
            kappa: None,
            provenance: None,
            clamped,
            degenerate: false,
        })
    }
}

/// Eigenvalues `λ` of `H⁻¹J` and their mean `κ₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenAdjustment {
    pub lambdas: Vec<f64>,
    pub kappa1: f64,
}

pub fn kappa_factors(g: &GodambeMatrices) -> Result<EigenAdjustment> {
    let lambdas = h_inv_j_eigenvalues(&g.j, &g.h_sym())?;
    let kappa1 = lambdas.iter().sum::<f64>() / lambdas.len() as f64;
    Ok(EigenAdjustment { lambdas, kappa1 })
}

/// Monte Carlo tail `P(Σ λⱼ Zⱼ² ≥ x)` with its binomial standard error.
pub fn linear_chisq_pvalue<R: Rng + ?Sized>(lambdas: &[f64], x: f64, draws: usize, rng: &mut R) -> Result<(f64, f64)> {
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(Error::domain("weights must be finite and non-negative"));
    }
    if draws == 0 || x.is_nan() {
        return Err(Error::domain("need at least one draw and a numeric threshold"));
    }
    if x <= 0.0 {
        return Ok((1.0, 0.0));
    }
    let mut hits = 0usize;
    for _ in 0..draws {
        let s: f64 = lambdas
            .iter()
            .map(|l| {
                let z = standard_normal(rng);
                l * z * z
            })
            .sum();
        if s >= x {
            hits += 1;
        }
    }
    let p = hits as f64 / draws as f64;
    Ok((p, (p * (1.0 - p) / draws as f64).sqrt()))
}

/// The ingredients shared by the six classic statistics.
struct Pieces {
    p: usize,
    n: f64,
    pw: f64,
    d: Vec<f64>,
    ps: Vec<f64>,
}

fn pieces<M: ScoreModel>(model: &M, data: &M::Data, theta0: &[f64], fit: &FitResult) -> Result<Pieces> {
    if !model.gradient_type() {
        return Err(Error::domain("classic statistics need a gradient-type score"));
    }
    check_theta(model, theta0)?;
    let theta_hat = fit.theta_hat.values();
    let pw = 2.0 * (pairwise_loglik(model, theta_hat, data)? - pairwise_loglik(model, theta0, data)?);
    Ok(Pieces {
        p: model.dim(),
        n: model.unit_count(data) as f64,
        pw,
        d: theta_hat.iter().zip(theta0).map(|(a, b)| a - b).collect(),
        ps: total_score(model, theta0, data)?,
    })
}

fn spd_quad_inv(m: &crate::numerics::SymMatrix, x: &[f64]) -> Result<f64> {
    let c = cholesky_spd(m)?;
    let y = c.forward(x);
    Ok(dot(&y, &y))
}

fn ratio_or_degenerate(num: f64, den: f64) -> Option<f64> {
    if den == 0.0 || !den.is_finite() {
        None
    } else {
        Some(num / den)
    }
}

fn one(
    kind: StatKind,
    pc: &Pieces,
    g_null: &GodambeMatrices,
    g_fit: &GodambeMatrices,
) -> Result<TestOutcome> {
    let p = pc.p;
    let n = pc.n;
    let mut out = match kind {
        StatKind::Pw => TestOutcome::new(kind, pc.pw, p)?,
        StatKind::Wald => {
            let mut o = TestOutcome::new(kind, n * spd_quad_inv(&g_fit.v, &pc.d)?, p)?;
            o.provenance = Some(g_fit.provenance);
            o
        }
        StatKind::Score => {
            let mut o = TestOutcome::new(kind, spd_quad_inv(&g_null.j, &pc.ps)? / n, p)?;
            o.provenance = Some(g_null.provenance);
            o
        }
        StatKind::Moment => {
            let adj = kappa_factors(g_null)?;
            let mut o = TestOutcome::new(kind, pc.pw / adj.kappa1, p)?;
            o.kappa = Some(adj.kappa1);
            o.provenance = Some(g_null.provenance);
            o
        }
        StatKind::Cb => {
            let wald = n * spd_quad_inv(&g_fit.v, &pc.d)?;
            let hd = g_fit.h.matvec(&pc.d);
            let kappa = ratio_or_degenerate(n * dot(&pc.d, &hd), pc.pw);
            let mut o = adjusted(kind, wald, kappa, p)?;
            o.provenance = Some(g_fit.provenance);
            o
        }
        StatKind::Inv => {
            let score = spd_quad_inv(&g_null.j, &pc.ps)? / n;
            let hinv_ps = g_null.h.solve(&pc.ps)?;
            let kappa = ratio_or_degenerate(dot(&pc.ps, &hinv_ps) / n, pc.pw);
            let mut o = adjusted(kind, score, kappa, p)?;
            o.provenance = Some(g_null.provenance);
            o
        }
        StatKind::Sp => return Err(Error::domain("sp is computed by the saddlepoint module")),
    };
    out.df = p;
    Ok(out)
}

fn adjusted(kind: StatKind, base: f64, kappa: Option<f64>, p: usize) -> Result<TestOutcome> {
    match kappa {
        Some(k) if k != 0.0 && k.is_finite() => {
            let mut o = TestOutcome::new(kind, base / k, p)?;
            o.kappa = Some(k);
            Ok(o)
        }
        _ => {
            let mut o = TestOutcome::new(kind, 0.0, p)?;
            o.degenerate = true;
            Ok(o)
        }
    }
}

/// One classic statistic. `g_null` must be evaluated at `theta0` and `g_fit`
/// at the fit.
pub fn classic_test<M: ScoreModel>(
    kind: StatKind,
    model: &M,
    data: &M::Data,
    theta0: &[f64],
    fit: &FitResult,
    g_null: &GodambeMatrices,
    g_fit: &GodambeMatrices,
) -> Result<TestOutcome> {
    let pc = pieces(model, data, theta0, fit)?;
    one(kind, &pc, g_null, g_fit)
}

/// All six classic statistics, in [`StatKind::CLASSIC`] order. Each entry
/// fails independently.
pub fn classic_suite<M: ScoreModel>(
    model: &M,
    data: &M::Data,
    theta0: &[f64],
    fit: &FitResult,
    g_null: &GodambeMatrices,
    g_fit: &GodambeMatrices,
) -> Result<Vec<Result<TestOutcome>>> {
    let pc = pieces(model, data, theta0, fit)?;
    Ok(StatKind::CLASSIC
        .iter()
        .map(|k| one(*k, &pc, g_null, g_fit))
        .collect())
}
