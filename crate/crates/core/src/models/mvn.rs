//! Equicorrelated multivariate normal model.
//!
//! Rows are i.i.d. `N(μ1, Σ)` with `Σ = σ²[(1−ρ)I + ρ11ᵀ]`. All `q(q−1)/2`
//! bivariate margins enter the pairwise likelihood with unit weight, and each
//! sample row is one unit.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Coord, RowSample, ScoreModel, UnitKind};
use crate::numerics::standard_normal;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvnParams {
    pub mu: f64,
    pub sigma2: f64,
    pub rho: f64,
}

/// Lower end of the admissible correlation range for dimension `q`.
pub fn rho_lower_bound(q: usize) -> f64 {
    if q <= 2 {
        -1.0
    } else {
        -1.0 / (q as f64 - 1.0)
    }
}

impl MvnParams {
    pub fn new(mu: f64, sigma2: f64, rho: f64) -> Self {
        Self { mu, sigma2, rho }
    }

    pub fn validate(&self, q: usize) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(Error::domain("mu must be finite"));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::domain("sigma2 must be positive"));
        }
        if !(self.rho > rho_lower_bound(q) && self.rho < 1.0) {
            return Err(Error::domain("rho outside (-1/(q-1), 1)"));
        }
        Ok(())
    }

    fn as_array(&self) -> [f64; 3] {
        [self.mu, self.sigma2, self.rho]
    }
}

/// Draws `n` rows of dimension `q`.
///
/// Uses the closed-form square root of the equicorrelation matrix, so each
/// row costs `O(q)`.
pub fn simulate_equicorr<R: Rng + ?Sized>(
    params: &MvnParams,
    n: usize,
    q: usize,
    rng: &mut R,
) -> Result<RowSample> {
    params.validate(q)?;
    if n == 0 || q == 0 {
        return Err(Error::domain("n and q must be positive"));
    }
    let sigma = params.sigma2.sqrt();
    let a = (1.0 - params.rho).sqrt();
    let b = (1.0 + (q as f64 - 1.0) * params.rho).sqrt();
    let c = (b - a) / q as f64;
    let mut values = Vec::with_capacity(n * q);
    let mut z = vec![0.0; q];
    for _ in 0..n {
        let mut sum = 0.0;
        for zj in z.iter_mut() {
            *zj = standard_normal(rng);
            sum += *zj;
        }
        values.extend(z.iter().map(|zj| params.mu + sigma * (a * zj + c * sum)));
    }
    RowSample::new(n, q, values)
}

/// Row summaries `S = Σ aⱼ²`, `T = (Σ aⱼ)²`, `Σ aⱼ` with `aⱼ = yⱼ − μ`.
fn row_moments(row: &[f64], mu: f64) -> (f64, f64, f64) {
    let mut s = 0.0;
    let mut sum = 0.0;
    for y in row {
        let a = y - mu;
        s += a * a;
        sum += a;
    }
    (s, sum * sum, sum)
}

fn row_pl(theta: [f64; 3], row: &[f64]) -> f64 {
    let [mu, sigma2, rho] = theta;
    let q = row.len() as f64;
    let m = q * (q - 1.0) / 2.0;
    let (s, t, _) = row_moments(row, mu);
    let quad = (q - 1.0) * s - rho * (t - s);
    let one_m = 1.0 - rho * rho;
    -m * (sigma2.ln() + 0.5 * one_m.ln()) - quad / (2.0 * sigma2 * one_m)
}

fn row_score(theta: [f64; 3], row: &[f64]) -> [f64; 3] {
    let [mu, sigma2, rho] = theta;
    let q = row.len() as f64;
    let m = q * (q - 1.0) / 2.0;
    let (s, t, sum) = row_moments(row, mu);
    let quad = (q - 1.0) * s - rho * (t - s);
    let one_m = 1.0 - rho * rho;
    let d_mu = (q - 1.0) * sum / (sigma2 * (1.0 + rho));
    let d_sigma2 = -m / sigma2 + quad / (2.0 * sigma2 * sigma2 * one_m);
    let d_rho = m * rho / one_m + ((t - s) * one_m - 2.0 * rho * quad) / (2.0 * sigma2 * one_m * one_m);
    [d_mu, d_sigma2, d_rho]
}

/// Pairwise log-likelihood over all rows, additive constants dropped.
pub fn pl_mvn(params: &MvnParams, data: &RowSample) -> Result<f64> {
    params.validate(data.q())?;
    Ok((0..data.n())
        .map(|i| row_pl(params.as_array(), data.row(i)))
        .sum())
}

/// Gradient of row `i`'s pairwise log-likelihood in `(μ, σ², ρ)`.
pub fn mvn_unit_score(params: &MvnParams, data: &RowSample, i: usize) -> Result<[f64; 3]> {
    params.validate(data.q())?;
    if i >= data.n() {
        return Err(Error::domain("row index out of range"));
    }
    Ok(row_score(params.as_array(), data.row(i)))
}

/// Exact multivariate normal log-likelihood.
pub fn mvn_full_loglik(params: &MvnParams, data: &RowSample) -> Result<f64> {
    params.validate(data.q())?;
    let q = data.q() as f64;
    let MvnParams { mu, sigma2, rho } = *params;
    let lam1 = 1.0 + (q - 1.0) * rho;
    let log_det = q * sigma2.ln() + (q - 1.0) * (1.0 - rho).ln() + lam1.ln();
    let mut total = 0.0;
    for i in 0..data.n() {
        let (s, t, _) = row_moments(data.row(i), mu);
        let quad = (s / (1.0 - rho) - rho * t / ((1.0 - rho) * lam1)) / sigma2;
        total += -0.5 * (q * LN_2PI + log_det + quad);
    }
    Ok(total)
}

/// Closed-form maximum likelihood estimate.
///
/// `μ̂` is the grand mean; the two distinct eigenvalues of `Σ` are estimated
/// from the spread of the row means and of the within-row deviations. With
/// `known_mu` the mean is held fixed instead.
pub fn mvn_full_mle(data: &RowSample, known_mu: Option<f64>) -> MvnParams {
    let n = data.n() as f64;
    let q = data.q() as f64;
    let mu = known_mu.unwrap_or_else(|| data.values().iter().sum::<f64>() / (n * q));
    let mut between = 0.0;
    let mut within = 0.0;
    for i in 0..data.n() {
        let row = data.row(i);
        let mean = row.iter().sum::<f64>() / q;
        between += (mean - mu) * (mean - mu);
        within += row.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>();
    }
    let lam1 = q * between / n;
    if data.q() == 1 {
        return MvnParams::new(mu, lam1, 0.0);
    }
    let lam2 = within / (n * (q - 1.0));
    let sigma2 = (lam1 + (q - 1.0) * lam2) / q;
    let rho = (lam1 - lam2) / (q * sigma2);
    MvnParams::new(mu, sigma2, rho)
}

/// The equicorrelated normal model with optional fixed coordinates.
#[derive(Debug, Clone)]
pub struct MvnModel {
    n: usize,
    q: usize,
    fixed: [Option<f64>; 3],
}

const NAMES: [&str; 3] = ["mu", "sigma2", "rho"];

impl MvnModel {
    /// Model for `n × q` samples with all three parameters free.
    pub fn new(n: usize, q: usize) -> Result<Self> {
        Self::with_fixed(n, q, [None; 3])
    }

    /// Holds the coordinates given as `Some` at their values; `θ` then
    /// contains only the free coordinates, in `(μ, σ², ρ)` order.
    pub fn with_fixed(n: usize, q: usize, fixed: [Option<f64>; 3]) -> Result<Self> {
        if n == 0 || q < 2 {
            return Err(Error::domain("mvn model needs n >= 1 and q >= 2"));
        }
        if fixed.iter().all(Option::is_some) {
            return Err(Error::domain("at least one parameter must be free"));
        }
        Ok(Self { n, q, fixed })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    fn free_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..3).filter(|k| self.fixed[*k].is_none())
    }

    /// Expands a free-coordinate vector to `(μ, σ², ρ)`.
    pub fn expand(&self, theta: &[f64]) -> [f64; 3] {
        let mut out = [0.0; 3];
        let mut it = theta.iter();
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = match self.fixed[k] {
                Some(v) => v,
                None => *it.next().expect("theta has one entry per free coordinate"),
            };
        }
        out
    }

    fn params(&self, theta: &[f64]) -> MvnParams {
        let [mu, sigma2, rho] = self.expand(theta);
        MvnParams::new(mu, sigma2, rho)
    }

    fn project(&self, full: [f64; 3]) -> Vec<f64> {
        self.free_indices().map(|k| full[k]).collect()
    }
}

impl ScoreModel for MvnModel {
    type Data = RowSample;

    fn param_names(&self) -> Vec<&'static str> {
        self.free_indices().map(|k| NAMES[k]).collect()
    }

    fn coords(&self) -> Vec<Coord> {
        let all = [
            Coord::Free,
            Coord::Positive,
            Coord::Interval {
                lo: rho_lower_bound(self.q),
                hi: 1.0,
            },
        ];
        self.free_indices().map(|k| all[k]).collect()
    }

    fn unit_kind(&self) -> UnitKind {
        UnitKind::Row
    }

    fn unit_count(&self, data: &RowSample) -> usize {
        data.n()
    }

    fn unit_score(&self, theta: &[f64], data: &RowSample, i: usize, out: &mut [f64]) {
        self.unit_pl_gradient(theta, data, i, out)
    }

    fn unit_pl(&self, theta: &[f64], data: &RowSample, i: usize) -> f64 {
        row_pl(self.expand(theta), data.row(i))
    }

    fn unit_pl_gradient(&self, theta: &[f64], data: &RowSample, i: usize, out: &mut [f64]) {
        let g = row_score(self.expand(theta), data.row(i));
        for (o, k) in out.iter_mut().zip(self.free_indices()) {
            *o = g[k];
        }
    }

    fn gradient_type(&self) -> bool {
        true
    }

    fn simulate<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Result<RowSample> {
        simulate_equicorr(&self.params(theta), self.n, self.q, rng)
    }

    fn resample(&self, data: &RowSample, indices: &[usize]) -> RowSample {
        data.select_rows(indices)
    }

    fn start(&self, data: &RowSample) -> Vec<f64> {
        let mle = mvn_full_mle(data, self.fixed[0]);
        let lo = rho_lower_bound(self.q);
        let sigma2 = if mle.sigma2 > 0.0 { mle.sigma2 } else { 1.0 };
        let rho = mle.rho.clamp(lo + 0.02 * (1.0 - lo), 0.98);
        let mut full = [mle.mu, sigma2, rho];
        for (k, f) in self.fixed.iter().enumerate() {
            if let Some(v) = f {
                full[k] = *v;
            }
        }
        self.project(full)
    }

    fn full_likelihood_ratio(&self, data: &RowSample, theta0: &[f64]) -> Option<Result<f64>> {
        if self.fixed[1].is_some() || self.fixed[2].is_some() {
            return None;
        }
        let null = self.params(theta0);
        let mle = mvn_full_mle(data, self.fixed[0]);
        Some((|| {
            mle.validate(self.q)
                .map_err(|_| Error::domain("full likelihood maximum on the boundary"))?;
            let w = 2.0 * (mvn_full_loglik(&mle, data)? - mvn_full_loglik(&null, data)?);
            Ok(w.max(0.0))
        })())
    }
}
