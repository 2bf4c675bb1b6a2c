//! First-order autoregression with optional additive outliers.
//!
//! The conditional pairwise likelihood conditions on the first observation,
//! so the units are the `q − 1` lagged pairs `(y_{j−1}, y_j)`.

use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use super::robust::{huber_psi, RobustTuning};
use crate::error::{Error, Result};
use crate::model::{Coord, ScoreModel, UnitKind};
use crate::numerics::{newton_system, standard_normal, Jacobian, NewtonOptions};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar1Params {
    pub phi0: f64,
    pub phi1: f64,
    pub sigma2: f64,
}

impl Ar1Params {
    pub fn new(phi0: f64, phi1: f64, sigma2: f64) -> Self {
        Self { phi0, phi1, sigma2 }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.phi0.is_finite() {
            return Err(Error::domain("phi0 must be finite"));
        }
        if !(self.phi1 > -1.0 && self.phi1 < 1.0) {
            return Err(Error::domain("phi1 must lie in (-1, 1)"));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::domain("sigma2 must be positive"));
        }
        Ok(())
    }

    fn from_slice(theta: &[f64]) -> Self {
        Self::new(theta[0], theta[1], theta[2])
    }

    pub fn stationary_mean(&self) -> f64 {
        self.phi0 / (1.0 - self.phi1)
    }

    pub fn stationary_variance(&self) -> f64 {
        self.sigma2 / (1.0 - self.phi1 * self.phi1)
    }
}

/// Innovation outliers `u_j ~ (1−ξ)δ₀ + ξ N(μ_u, σ²_u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContaminationSpec {
    pub xi: f64,
    pub mu_u: f64,
    pub sigma2_u: f64,
}

impl ContaminationSpec {
    pub fn new(xi: f64, mu_u: f64, sigma2_u: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&xi) {
            return Err(Error::domain("xi must lie in [0, 1]"));
        }
        if !mu_u.is_finite() || !(sigma2_u >= 0.0 && sigma2_u.is_finite()) {
            return Err(Error::domain("outlier law needs finite mean and variance >= 0"));
        }
        Ok(Self { xi, mu_u, sigma2_u })
    }

    pub fn none() -> Self {
        Self {
            xi: 0.0,
            mu_u: 0.0,
            sigma2_u: 0.0,
        }
    }

    pub fn is_clean(&self) -> bool {
        self.xi == 0.0
    }
}

impl Default for ContaminationSpec {
    fn default() -> Self {
        Self::none()
    }
}

/// Draws a series of length `q`, starting from the stationary law.
pub fn simulate_ar1<R: Rng + ?Sized>(
    params: &Ar1Params,
    q: usize,
    contamination: &ContaminationSpec,
    rng: &mut R,
) -> Result<Vec<f64>> {
    params.validate()?;
    if q < 2 {
        return Err(Error::domain("series length must be at least 2"));
    }
    let sigma = params.sigma2.sqrt();
    let sigma_u = contamination.sigma2_u.sqrt();
    let mut y = Vec::with_capacity(q);
    y.push(params.stationary_mean() + params.stationary_variance().sqrt() * standard_normal(rng));
    for j in 1..q {
        let mut next = params.phi0 + params.phi1 * y[j - 1] + sigma * standard_normal(rng);
        let hit = contamination.xi >= 1.0
            || (contamination.xi > 0.0 && rng.random::<f64>() < contamination.xi);
        if hit {
            next += contamination.mu_u;
            if sigma_u > 0.0 {
                next += sigma_u * standard_normal(rng);
            }
        }
        y.push(next);
    }
    Ok(y)
}

/// Lagged pairs `(y_{j−1}, y_j)`, the resampling units of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Ar1Data {
    prev: Vec<f64>,
    curr: Vec<f64>,
}

impl Ar1Data {
    pub fn from_series(series: &[f64]) -> Result<Self> {
        if series.len() < 2 {
            return Err(Error::domain("series length must be at least 2"));
        }
        if series.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("series contains non-finite values"));
        }
        Ok(Self {
            prev: series[..series.len() - 1].to_vec(),
            curr: series[1..].to_vec(),
        })
    }

    pub fn n_pairs(&self) -> usize {
        self.curr.len()
    }

    pub fn pair(&self, j: usize) -> (f64, f64) {
        (self.prev[j], self.curr[j])
    }

    /// The underlying series, when the pairs still chain end to start.
    pub fn series(&self) -> Option<Vec<f64>> {
        let chained = (1..self.n_pairs()).all(|j| self.prev[j] == self.curr[j - 1]);
        if !chained {
            return None;
        }
        let mut s = Vec::with_capacity(self.n_pairs() + 1);
        s.push(self.prev[0]);
        s.extend_from_slice(&self.curr);
        Some(s)
    }
}

fn check_series(series: &[f64]) -> Result<()> {
    if series.len() < 2 {
        return Err(Error::domain("series length must be at least 2"));
    }
    Ok(())
}

fn pair_pl(p: &Ar1Params, prev: f64, curr: f64) -> f64 {
    let e = curr - p.phi0 - p.phi1 * prev;
    -0.5 * p.sigma2.ln() - e * e / (2.0 * p.sigma2)
}

fn pair_pl_gradient(p: &Ar1Params, prev: f64, curr: f64) -> [f64; 3] {
    let e = curr - p.phi0 - p.phi1 * prev;
    [
        e / p.sigma2,
        e * prev / p.sigma2,
        (e * e / p.sigma2 - 1.0) / (2.0 * p.sigma2),
    ]
}

fn pair_score(p: &Ar1Params, prev: f64, curr: f64, t: &RobustTuning) -> [f64; 3] {
    let r = (curr - p.phi0 - p.phi1 * prev) / p.sigma2.sqrt();
    let pa = huber_psi(r, t.a());
    let pc = huber_psi(r, t.c());
    [pa, pa * huber_psi(prev, t.b()), pc * pc - t.beta_c()]
}

/// Conditional pairwise log-likelihood, additive constants dropped.
pub fn pl_ar1(params: &Ar1Params, series: &[f64]) -> Result<f64> {
    params.validate()?;
    check_series(series)?;
    Ok(series
        .windows(2)
        .map(|w| pair_pl(params, w[0], w[1]))
        .sum())
}

/// Estimating function of the pair `(y_{j−1}, y_j)`, `1 ≤ j < len`.
pub fn ar1_unit_score(
    params: &Ar1Params,
    series: &[f64],
    j: usize,
    tuning: &RobustTuning,
) -> Result<[f64; 3]> {
    params.validate()?;
    check_series(series)?;
    if j == 0 || j >= series.len() {
        return Err(Error::domain("pair index out of range"));
    }
    Ok(pair_score(params, series[j - 1], series[j], tuning))
}

/// Exact Gaussian log-likelihood by prediction decomposition.
pub fn ar1_full_loglik(params: &Ar1Params, series: &[f64]) -> Result<f64> {
    params.validate()?;
    if series.is_empty() {
        return Err(Error::domain("empty series"));
    }
    let v0 = params.stationary_variance();
    let d = series[0] - params.stationary_mean();
    let mut total = -0.5 * (LN_2PI + v0.ln() + d * d / v0);
    for w in series.windows(2) {
        total += pair_pl(params, w[0], w[1]) - 0.5 * LN_2PI;
    }
    Ok(total)
}

fn full_gradient(p: &Ar1Params, series: &[f64]) -> [f64; 3] {
    let (phi0, phi1, s2) = (p.phi0, p.phi1, p.sigma2);
    let one_m = 1.0 - phi1 * phi1;
    let d = series[0] - p.stationary_mean();
    let mut g = [
        d * (1.0 + phi1) / s2,
        -phi1 / one_m + (d * phi0 * (1.0 + phi1) / (1.0 - phi1) + d * d * phi1) / s2,
        -0.5 / s2 + d * d * one_m / (2.0 * s2 * s2),
    ];
    for w in series.windows(2) {
        let gp = pair_pl_gradient(p, w[0], w[1]);
        for (a, b) in g.iter_mut().zip(gp) {
            *a += b;
        }
    }
    g
}

/// Least-squares fit of `y_j` on `(1, y_{j−1})` with the mean squared residual.
pub fn ar1_ols(data: &Ar1Data) -> Ar1Params {
    let n = data.n_pairs() as f64;
    let mx = data.prev.iter().sum::<f64>() / n;
    let my = data.curr.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in data.prev.iter().zip(&data.curr) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let phi1 = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let phi0 = my - phi1 * mx;
    let sigma2 = data
        .prev
        .iter()
        .zip(&data.curr)
        .map(|(x, y)| (y - phi0 - phi1 * x).powi(2))
        .sum::<f64>()
        / n;
    Ar1Params::new(phi0, phi1, sigma2)
}

/// Maximum of the exact likelihood, by Newton in `(φ₀, atanh-like φ₁, log σ²)`
/// coordinates from the least-squares start.
pub fn ar1_full_mle(series: &[f64]) -> Result<Ar1Params> {
    let data = Ar1Data::from_series(series)?;
    let ols = ar1_ols(&data);
    let coords = [Coord::Free, Coord::Interval { lo: -1.0, hi: 1.0 }, Coord::Positive];
    let to_theta = |e: &[f64]| -> [f64; 3] {
        [
            coords[0].from_unconstrained(e[0]),
            coords[1].from_unconstrained(e[1]),
            coords[2].from_unconstrained(e[2]),
        ]
    };
    let start = [
        ols.phi0,
        coords[1].to_unconstrained(ols.phi1.clamp(-0.98, 0.98)),
        coords[2].to_unconstrained(ols.sigma2.max(1e-8)),
    ];
    let f = |e: &[f64]| {
        let t = to_theta(e);
        let p = Ar1Params::from_slice(&t);
        p.validate().ok()?;
        let g = full_gradient(&p, series);
        Some((0..3).map(|k| g[k] * coords[k].derivative(e[k])).collect::<Vec<_>>())
    };
    let report = newton_system(f, Jacobian::Numeric, &start, &NewtonOptions::default())?;
    let t = to_theta(&report.x);
    Ok(Ar1Params::from_slice(&t))
}

/// AR(1) model with estimating function at tuning `γ` and a simulation law
/// that may include outliers.
#[derive(Debug, Clone)]
pub struct Ar1Model {
    q: usize,
    tuning: RobustTuning,
    contamination: ContaminationSpec,
}

impl Ar1Model {
    pub fn new(q: usize, tuning: RobustTuning, contamination: ContaminationSpec) -> Result<Self> {
        if q < 3 {
            return Err(Error::domain("series length must be at least 3"));
        }
        Ok(Self {
            q,
            tuning,
            contamination,
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn tuning(&self) -> &RobustTuning {
        &self.tuning
    }

    pub fn contamination(&self) -> &ContaminationSpec {
        &self.contamination
    }

    /// Iteratively reweighted solution of the bounded equations: weighted
    /// least squares for `(φ₀, φ₁)` with Huber and Mallows weights, and a
    /// Proposal 2 update of `σ²`.
    pub fn irls(&self, data: &Ar1Data, start: &Ar1Params, iterations: usize) -> Ar1Params {
        let t = &self.tuning;
        let weight = |v: f64, k: f64| if v == 0.0 { 1.0 } else { huber_psi(v, k) / v };
        let mut p = *start;
        for _ in 0..iterations {
            let sigma = p.sigma2.sqrt();
            let (mut a00, mut a01, mut a10, mut a11, mut b0, mut b1) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            let mut psi2 = 0.0;
            for j in 0..data.n_pairs() {
                let (x, y) = data.pair(j);
                let r = (y - p.phi0 - p.phi1 * x) / sigma;
                let w = weight(r, t.a());
                let m = weight(x, t.b()) * x;
                a00 += w;
                a01 += w * x;
                a10 += w * m;
                a11 += w * m * x;
                b0 += w * y;
                b1 += w * m * y;
                psi2 += huber_psi(r, t.c()).powi(2);
            }
            let det = a00 * a11 - a01 * a10;
            if det.abs() > 1e-12 * (a00 * a11).abs().max(1e-300) {
                p.phi0 = (b0 * a11 - a01 * b1) / det;
                p.phi1 = ((a00 * b1 - a10 * b0) / det).clamp(-0.99, 0.99);
            }
            let ratio = psi2 / (data.n_pairs() as f64 * t.beta_c());
            if ratio > 0.0 && ratio.is_finite() {
                p.sigma2 *= ratio;
            }
        }
        p
    }
}

impl ScoreModel for Ar1Model {
    type Data = Ar1Data;

    fn param_names(&self) -> Vec<&'static str> {
        alloc::vec!["phi0", "phi1", "sigma2"]
    }

    fn dim(&self) -> usize {
        3
    }

    fn coords(&self) -> Vec<Coord> {
        alloc::vec![Coord::Free, Coord::Interval { lo: -1.0, hi: 1.0 }, Coord::Positive]
    }

    fn unit_kind(&self) -> UnitKind {
        UnitKind::AdjacentPair
    }

    fn unit_count(&self, data: &Ar1Data) -> usize {
        data.n_pairs()
    }

    fn unit_score(&self, theta: &[f64], data: &Ar1Data, i: usize, out: &mut [f64]) {
        let (x, y) = data.pair(i);
        out.copy_from_slice(&pair_score(&Ar1Params::from_slice(theta), x, y, &self.tuning));
    }

    fn unit_pl(&self, theta: &[f64], data: &Ar1Data, i: usize) -> f64 {
        let (x, y) = data.pair(i);
        pair_pl(&Ar1Params::from_slice(theta), x, y)
    }

    fn unit_pl_gradient(&self, theta: &[f64], data: &Ar1Data, i: usize, out: &mut [f64]) {
        let (x, y) = data.pair(i);
        out.copy_from_slice(&pair_pl_gradient(&Ar1Params::from_slice(theta), x, y));
    }

    fn gradient_type(&self) -> bool {
        false
    }

    fn simulate<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Result<Ar1Data> {
        let series = simulate_ar1(&Ar1Params::from_slice(theta), self.q, &self.contamination, rng)?;
        Ar1Data::from_series(&series)
    }

    fn resample(&self, data: &Ar1Data, indices: &[usize]) -> Ar1Data {
        Ar1Data {
            prev: indices.iter().map(|&i| data.prev[i]).collect(),
            curr: indices.iter().map(|&i| data.curr[i]).collect(),
        }
    }

    fn start(&self, data: &Ar1Data) -> Vec<f64> {
        let p = ar1_ols(data);
        let sigma2 = if p.sigma2 > 1e-12 { p.sigma2 } else { 1.0 };
        alloc::vec![p.phi0, p.phi1.clamp(-0.95, 0.95), sigma2]
    }

    fn restart(&self, data: &Ar1Data, _last: &[f64]) -> Option<Vec<f64>> {
        let s = self.start(data);
        let p = self.irls(data, &Ar1Params::from_slice(&s), 100);
        p.validate().ok()?;
        Some(alloc::vec![p.phi0, p.phi1, p.sigma2])
    }

    fn full_likelihood_ratio(&self, data: &Ar1Data, theta0: &[f64]) -> Option<Result<f64>> {
        let series = data.series()?;
        Some((|| {
            let mle = ar1_full_mle(&series)?;
            let null = Ar1Params::from_slice(theta0);
            let w = 2.0 * (ar1_full_loglik(&mle, &series)? - ar1_full_loglik(&null, &series)?);
            Ok(w.max(0.0))
        })())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::numerics::{cholesky_spd, Matrix, RngStream, SymMatrix};

    #[test]
    fn pl_small_cases() {
        let p = Ar1Params::new(0.0, 0.5, 1.0);
        assert_eq!(pl_ar1(&p, &[0.0, 0.0]).unwrap(), 0.0);
        assert!((pl_ar1(&p, &[1.0, 1.0]).unwrap() + 0.125).abs() < 1e-15);
        assert!(pl_ar1(&p, &[1.0]).is_err());
        assert!(pl_ar1(&Ar1Params::new(0.0, 1.0, 1.0), &[0.0, 1.0]).is_err());
    }

    #[test]
    fn unit_score_special_points() {
        let g = RobustTuning::uniform(1.3).unwrap();
        let p = Ar1Params::new(0.5, 0.25, 2.0);
        let s = ar1_unit_score(&p, &[2.0, 1.0], 1, &g).unwrap();
        assert_eq!(s[0], 0.0);
        assert_eq!(s[1], 0.0);
        assert!((s[2] + g.beta_c()).abs() < 1e-15);

        let inf = RobustTuning::classical();
        let p = Ar1Params::new(0.0, 0.3, 4.0);
        let s = ar1_unit_score(&p, &[0.0, 3.0], 1, &inf).unwrap();
        assert_eq!(s, [1.5, 0.0, 1.5 * 1.5 - 1.0]);
        assert!(ar1_unit_score(&p, &[0.0, 3.0], 2, &inf).is_err());
    }

    #[test]
    fn bounded_score_on_outliers() {
        let g = RobustTuning::uniform(1.3).unwrap();
        let p = Ar1Params::new(0.0, 0.5, 1.0);
        let series = [0.0, 1e6, -1e6, 3.0, 1e6];
        let bound = (1.3f64).max(1.3 * 1.3).max(1.3 * 1.3 + g.beta_c());
        for j in 1..series.len() {
            let s = ar1_unit_score(&p, &series, j, &g).unwrap();
            assert!(s.iter().all(|v| v.abs() <= bound + 1e-12));
        }
    }

    #[test]
    fn large_tuning_matches_classical() {
        let big = RobustTuning::uniform(1e6).unwrap();
        let p = Ar1Params::new(0.1, -0.4, 1.7);
        let series = [0.3, -2.0, 5.0, 40.0, -3.5];
        for j in 1..series.len() {
            let a = ar1_unit_score(&p, &series, j, &big).unwrap();
            let b = ar1_unit_score(&p, &series, j, &RobustTuning::classical()).unwrap();
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn full_loglik_matches_cholesky() {
        let p = Ar1Params::new(0.4, 0.6, 1.3);
        let mut rng = RngStream::new(3, 0).rng();
        let y = simulate_ar1(&p, 8, &ContaminationSpec::none(), &mut rng).unwrap();
        let v = p.stationary_variance();
        let cov = Matrix::from_fn(8, 8, |i, j| v * p.phi1.powi((i as i32 - j as i32).abs()));
        let chol = cholesky_spd(&SymMatrix::new(cov).unwrap()).unwrap();
        let a: Vec<f64> = y.iter().map(|v| v - p.stationary_mean()).collect();
        let z = chol.forward(&a);
        let want = -0.5 * (8.0 * LN_2PI + chol.log_det() + z.iter().map(|v| v * v).sum::<f64>());
        assert!((ar1_full_loglik(&p, &y).unwrap() - want).abs() < 1e-8);
    }

    #[test]
    fn independent_case_full_loglik() {
        let p = Ar1Params::new(0.5, 0.0, 2.0);
        let y = [0.1, 1.3, -0.7];
        let want: f64 = y
            .iter()
            .map(|v| -0.5 * (LN_2PI + 2f64.ln() + (v - 0.5) * (v - 0.5) / 2.0))
            .sum();
        assert!((ar1_full_loglik(&p, &y).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn full_mle_is_stationary_point() {
        let mut rng = RngStream::new(4, 0).rng();
        let y = simulate_ar1(&Ar1Params::new(0.0, 0.5, 1.0), 60, &ContaminationSpec::none(), &mut rng)
            .unwrap();
        let mle = ar1_full_mle(&y).unwrap();
        let g = full_gradient(&mle, &y);
        assert!(g.iter().all(|v| v.abs() < 1e-6), "{g:?}");
        let best = ar1_full_loglik(&mle, &y).unwrap();
        let nudged = Ar1Params::new(mle.phi0 + 0.01, mle.phi1 - 0.01, mle.sigma2 * 1.01);
        assert!(ar1_full_loglik(&nudged, &y).unwrap() < best);
    }

    #[test]
    fn full_contamination_shifts_innovations() {
        let p = Ar1Params::new(0.0, 0.0, 1.0);
        let shifted = ContaminationSpec::new(1.0, 7.0, 0.0).unwrap();
        let mut r1 = RngStream::new(9, 0).rng();
        let mut r2 = RngStream::new(9, 0).rng();
        let a = simulate_ar1(&p, 20, &ContaminationSpec::none(), &mut r1).unwrap();
        let b = simulate_ar1(&p, 20, &shifted, &mut r2).unwrap();
        assert_eq!(a[0], b[0]);
        for j in 1..20 {
            assert!((b[j] - a[j] - 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn data_recovers_series() {
        let d = Ar1Data::from_series(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d.series().unwrap(), vec![1.0, 2.0, 3.0]);
        let m = Ar1Model::new(10, RobustTuning::classical(), ContaminationSpec::none()).unwrap();
        let r = m.resample(&d, &[1, 0]);
        assert_eq!(r.series(), None);
    }
}
