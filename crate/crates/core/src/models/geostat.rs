//! Stationary Gaussian random field on a square lattice with exponential
//! covariogram, fitted through a block-partitioned conditional pairwise
//! likelihood.
//!
//! Each pair contributes the conditional density of its anchor value given
//! the other site, `N(ρ y_k, σ²(1−ρ²))`. The conditional variance carries the
//! `1 − ρ²` factor so that the standardized residuals are exactly `N(0, 1)`
//! at the true parameter.

use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use super::robust::{huber_psi, RobustTuning};
use crate::error::{Error, Result};
use crate::model::{Coord, LatticeField, ScoreModel, UnitKind};
use crate::numerics::{cholesky_spd, standard_normal, Cholesky, Matrix, SymMatrix};

/// Largest lattice side accepted by the dense simulator.
pub const MAX_SIMULATION_SIDE: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoParams {
    pub sigma2: f64,
    pub phi: f64,
}

impl GeoParams {
    pub fn new(sigma2: f64, phi: f64) -> Self {
        Self { sigma2, phi }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::domain("sigma2 must be positive"));
        }
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            return Err(Error::domain("phi must be positive"));
        }
        Ok(())
    }

    /// `ρ(h) = exp(−3h/φ)`.
    pub fn correlation(&self, dist: f64) -> f64 {
        (-3.0 * dist / self.phi).exp()
    }

    /// `∂ρ(h)/∂φ = (3h/φ²) ρ(h)`.
    pub fn correlation_dphi(&self, dist: f64) -> f64 {
        3.0 * dist / (self.phi * self.phi) * self.correlation(dist)
    }
}

/// `σ² exp(−3‖h‖/φ)` for the lag vector `h`.
pub fn exp_cov(params: &GeoParams, h: [f64; 2]) -> f64 {
    params.sigma2 * params.correlation(h[0].hypot(h[1]))
}

/// Smallest integer block side parameter `l` at or above the effective range
/// `φ ln 20 / 3`.
pub fn default_block_l(phi: f64) -> usize {
    let range = phi * 20f64.ln() / 3.0;
    (range.ceil() as usize).max(1)
}

/// Disjoint `(1+l) × (1+l)` blocks with a star of pairs from each block's
/// anchor (its first row, first column) to every other site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    grid_side: usize,
    block_side: usize,
    anchors: Vec<(usize, usize)>,
    offsets: Vec<(usize, usize)>,
}

pub fn block_partition(q: usize, l: usize) -> Result<BlockPartition> {
    if l == 0 {
        return Err(Error::domain("block side parameter l must be at least 1"));
    }
    let side = l + 1;
    if q < side {
        return Err(Error::domain("lattice smaller than one block"));
    }
    let per_axis = q / side;
    let mut anchors = Vec::with_capacity(per_axis * per_axis);
    for br in 0..per_axis {
        for bc in 0..per_axis {
            anchors.push((br * side, bc * side));
        }
    }
    let offsets = (0..side)
        .flat_map(|dr| (0..side).map(move |dc| (dr, dc)))
        .filter(|&o| o != (0, 0))
        .collect();
    Ok(BlockPartition {
        grid_side: q,
        block_side: side,
        anchors,
        offsets,
    })
}

impl BlockPartition {
    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    pub fn block_side(&self) -> usize {
        self.block_side
    }

    pub fn n_blocks(&self) -> usize {
        self.anchors.len()
    }

    pub fn pairs_per_block(&self) -> usize {
        self.offsets.len()
    }

    /// Zero-based `(row, col)` of block `u`'s anchor.
    pub fn anchor(&self, u: usize) -> (usize, usize) {
        self.anchors[u]
    }

    /// Sites of block `u`, anchor first.
    pub fn sites(&self, u: usize) -> Vec<(usize, usize)> {
        let (r, c) = self.anchors[u];
        core::iter::once((r, c))
            .chain(self.offsets.iter().map(|(dr, dc)| (r + dr, c + dc)))
            .collect()
    }

    /// `(anchor, other)` site pairs of block `u`.
    pub fn pairs(&self, u: usize) -> Vec<((usize, usize), (usize, usize))> {
        let (r, c) = self.anchors[u];
        self.offsets
            .iter()
            .map(|(dr, dc)| ((r, c), (r + dr, c + dc)))
            .collect()
    }

    /// Euclidean lengths of the pair lags, identical in every block.
    pub fn pair_distances(&self) -> Vec<f64> {
        self.offsets
            .iter()
            .map(|&(dr, dc)| (dr as f64).hypot(dc as f64))
            .collect()
    }
}

/// Field values arranged by block: the anchor value and the other site of
/// each pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoData {
    anchors: Vec<f64>,
    others: Vec<f64>,
    dist: Vec<f64>,
}

impl GeoData {
    pub fn from_field(field: &LatticeField, partition: &BlockPartition) -> Result<Self> {
        if field.side() != partition.grid_side() {
            return Err(Error::DimensionMismatch {
                expected: partition.grid_side(),
                got: field.side(),
            });
        }
        let mut anchors = Vec::with_capacity(partition.n_blocks());
        let mut others = Vec::with_capacity(partition.n_blocks() * partition.pairs_per_block());
        for u in 0..partition.n_blocks() {
            let (r, c) = partition.anchor(u);
            anchors.push(field.at(r, c));
            others.extend(partition.offsets.iter().map(|(dr, dc)| field.at(r + dr, c + dc)));
        }
        Ok(Self {
            anchors,
            others,
            dist: partition.pair_distances(),
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.anchors.len()
    }

    pub fn pairs_per_block(&self) -> usize {
        self.dist.len()
    }

    fn block(&self, u: usize) -> (f64, &[f64]) {
        let p = self.dist.len();
        (self.anchors[u], &self.others[u * p..(u + 1) * p])
    }
}

fn pair_pl(p: &GeoParams, yj: f64, yk: f64, dist: f64) -> f64 {
    let rho = p.correlation(dist);
    let v = p.sigma2 * (1.0 - rho * rho);
    let e = yj - rho * yk;
    -0.5 * (v.ln() + e * e / v)
}

fn pair_pl_gradient(p: &GeoParams, yj: f64, yk: f64, dist: f64) -> [f64; 2] {
    let rho = p.correlation(dist);
    let drho = p.correlation_dphi(dist);
    let one_m = 1.0 - rho * rho;
    let v = p.sigma2 * one_m;
    let e = yj - rho * yk;
    let r2 = e * e / v;
    [
        (r2 - 1.0) / (2.0 * p.sigma2),
        drho * (e * yk / v - rho * (r2 - 1.0) / one_m),
    ]
}

fn pair_score(p: &GeoParams, yj: f64, yk: f64, dist: f64, t: &RobustTuning) -> [f64; 2] {
    let rho = p.correlation(dist);
    let r = (yj - rho * yk) / (p.sigma2 * (1.0 - rho * rho)).sqrt();
    let pc = huber_psi(r, t.c());
    [
        pc * pc - t.beta_c(),
        huber_psi(r, t.a()) * huber_psi(yk, t.b()) * p.correlation_dphi(dist),
    ]
}

fn block_pl(p: &GeoParams, data: &GeoData, u: usize) -> f64 {
    let (a, others) = data.block(u);
    others
        .iter()
        .zip(&data.dist)
        .map(|(yk, d)| pair_pl(p, a, *yk, *d))
        .sum()
}

fn block_sum(
    data: &GeoData,
    u: usize,
    mut f: impl FnMut(f64, f64, f64) -> [f64; 2],
) -> [f64; 2] {
    let (a, others) = data.block(u);
    let mut out = [0.0; 2];
    for (yk, d) in others.iter().zip(&data.dist) {
        let s = f(a, *yk, *d);
        out[0] += s[0];
        out[1] += s[1];
    }
    out
}

/// Block pairwise log-likelihood, additive constants dropped.
pub fn pl_geostat(params: &GeoParams, field: &LatticeField, partition: &BlockPartition) -> Result<f64> {
    params.validate()?;
    let data = GeoData::from_field(field, partition)?;
    Ok((0..data.n_blocks()).map(|u| block_pl(params, &data, u)).sum())
}

/// Estimating function of block `u`: bounded moment equations for `σ²`
/// and `φ` summed over the block's pairs.
pub fn geo_unit_score(
    params: &GeoParams,
    field: &LatticeField,
    partition: &BlockPartition,
    u: usize,
    tuning: &RobustTuning,
) -> Result<[f64; 2]> {
    params.validate()?;
    if u >= partition.n_blocks() {
        return Err(Error::domain("block index out of range"));
    }
    let data = GeoData::from_field(field, partition)?;
    Ok(block_sum(&data, u, |a, yk, d| pair_score(params, a, yk, d, tuning)))
}

/// Dense sampler for a zero-mean field with exponential covariogram.
#[derive(Debug, Clone)]
pub struct GrfSampler {
    params: GeoParams,
    side: usize,
    factor: Cholesky,
}

impl GrfSampler {
    /// Factorises the `q² × q²` site covariance. A failed factorisation is
    /// retried once with `1e-10 σ²` added to the diagonal.
    pub fn new(params: &GeoParams, q: usize) -> Result<Self> {
        params.validate()?;
        if !(2..=MAX_SIMULATION_SIDE).contains(&q) {
            return Err(Error::domain("lattice side must lie in 2..=80 for simulation"));
        }
        let n = q * q;
        let cov = |jitter: f64| {
            Matrix::from_fn(n, n, |i, j| {
                let dr = (i / q) as f64 - (j / q) as f64;
                let dc = (i % q) as f64 - (j % q) as f64;
                exp_cov(params, [dr, dc]) + if i == j { jitter } else { 0.0 }
            })
        };
        let factor = match cholesky_spd(&SymMatrix::from_symmetrized(cov(0.0))) {
            Ok(f) => f,
            Err(Error::NotPositiveDefinite { .. }) => {
                cholesky_spd(&SymMatrix::from_symmetrized(cov(1e-10 * params.sigma2)))?
            }
            Err(e) => return Err(e),
        };
        Ok(Self {
            params: *params,
            side: q,
            factor,
        })
    }

    pub fn params(&self) -> &GeoParams {
        &self.params
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LatticeField {
        let z: Vec<f64> = (0..self.side * self.side).map(|_| standard_normal(rng)).collect();
        LatticeField::new(self.side, self.factor.lower_mul(&z)).expect("finite sample of the right size")
    }
}

/// One field draw; builds a fresh factorisation, so prefer [`GrfSampler`]
/// for repeated draws.
pub fn simulate_grf<R: Rng + ?Sized>(params: &GeoParams, q: usize, rng: &mut R) -> Result<LatticeField> {
    Ok(GrfSampler::new(params, q)?.sample(rng))
}

/// Geostatistical model over the blocks of a fixed partition.
#[derive(Debug, Clone)]
pub struct GeoModel {
    partition: BlockPartition,
    tuning: RobustTuning,
    sampler: Option<GrfSampler>,
}

impl GeoModel {
    pub fn new(q: usize, l: usize, tuning: RobustTuning) -> Result<Self> {
        Ok(Self {
            partition: block_partition(q, l)?,
            tuning,
            sampler: None,
        })
    }

    /// Same model with a cached sampler at `params`, reused whenever
    /// `simulate` is called at exactly those parameters.
    pub fn with_sampler(q: usize, l: usize, tuning: RobustTuning, params: &GeoParams) -> Result<Self> {
        let mut m = Self::new(q, l, tuning)?;
        m.sampler = Some(GrfSampler::new(params, q)?);
        Ok(m)
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn tuning(&self) -> &RobustTuning {
        &self.tuning
    }

    pub fn data(&self, field: &LatticeField) -> Result<GeoData> {
        GeoData::from_field(field, &self.partition)
    }
}

impl ScoreModel for GeoModel {
    type Data = GeoData;

    fn param_names(&self) -> Vec<&'static str> {
        alloc::vec!["sigma2", "phi"]
    }

    fn dim(&self) -> usize {
        2
    }

    fn coords(&self) -> Vec<Coord> {
        alloc::vec![Coord::Positive, Coord::Positive]
    }

    fn unit_kind(&self) -> UnitKind {
        UnitKind::Block
    }

    fn unit_count(&self, data: &GeoData) -> usize {
        data.n_blocks()
    }

    fn unit_score(&self, theta: &[f64], data: &GeoData, i: usize, out: &mut [f64]) {
        let p = GeoParams::new(theta[0], theta[1]);
        out.copy_from_slice(&block_sum(data, i, |a, yk, d| pair_score(&p, a, yk, d, &self.tuning)));
    }

    fn unit_pl(&self, theta: &[f64], data: &GeoData, i: usize) -> f64 {
        block_pl(&GeoParams::new(theta[0], theta[1]), data, i)
    }

    fn unit_pl_gradient(&self, theta: &[f64], data: &GeoData, i: usize, out: &mut [f64]) {
        let p = GeoParams::new(theta[0], theta[1]);
        out.copy_from_slice(&block_sum(data, i, |a, yk, d| pair_pl_gradient(&p, a, yk, d)));
    }

    fn gradient_type(&self) -> bool {
        false
    }

    fn simulate<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Result<GeoData> {
        let p = GeoParams::new(theta[0], theta[1]);
        let field = match &self.sampler {
            Some(s) if s.params == p => s.sample(rng),
            _ => simulate_grf(&p, self.partition.grid_side(), rng)?,
        };
        self.data(&field)
    }

    fn resample(&self, data: &GeoData, indices: &[usize]) -> GeoData {
        let p = data.pairs_per_block();
        let mut others = Vec::with_capacity(indices.len() * p);
        for &u in indices {
            others.extend_from_slice(data.block(u).1);
        }
        GeoData {
            anchors: indices.iter().map(|&u| data.anchors[u]).collect(),
            others,
            dist: data.dist.clone(),
        }
    }

    /// Profile start: on a log grid of `φ`, solve the `σ²` equation by
    /// bisection and bracket the first sign change of the `φ` equation.
    /// Avoids the flat ridge at large `φ` that a poor moment start can
    /// wander onto.
    fn restart(&self, data: &GeoData, _last: &[f64]) -> Option<Vec<f64>> {
        let m = self.start(data)[0];
        let score = |s2: f64, phi: f64| {
            let p = GeoParams::new(s2, phi);
            let mut out = [0.0; 2];
            for u in 0..data.n_blocks() {
                let s = block_sum(data, u, |a, yk, d| pair_score(&p, a, yk, d, &self.tuning));
                out[0] += s[0];
                out[1] += s[1];
            }
            out
        };
        // The σ² equation decreases in σ² at fixed φ.
        let profile = |phi: f64| {
            let (mut lo, mut hi) = (m.ln() - 20.0, m.ln() + 20.0);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if score(mid.exp(), phi)[0] > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let s2 = (0.5 * (lo + hi)).exp();
            (s2, score(s2, phi)[1])
        };
        let grid: Vec<f64> = (0..16).map(|k| 0.1 * 2f64.powf(k as f64 * 0.75)).collect();
        let mut prev = (grid[0], profile(grid[0]).1);
        for &phi in &grid[1..] {
            let g = profile(phi).1;
            if prev.1 > 0.0 && g <= 0.0 {
                let (mut lo, mut hi) = (prev.0.ln(), phi.ln());
                for _ in 0..20 {
                    let mid = 0.5 * (lo + hi);
                    if profile(mid.exp()).1 > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let phi = (0.5 * (lo + hi)).exp();
                return Some(alloc::vec![profile(phi).0, phi]);
            }
            prev = (phi, g);
        }
        None
    }

    /// Moment start: `σ²` from the mean square of all block values, `φ` from
    /// the lag-one sample correlation.
    fn start(&self, data: &GeoData) -> Vec<f64> {
        let mut ss = 0.0;
        let mut count = 0.0;
        let mut cross = 0.0;
        let mut cross_n = 0.0;
        for u in 0..data.n_blocks() {
            let (a, others) = data.block(u);
            ss += a * a;
            count += 1.0;
            for (yk, d) in others.iter().zip(&data.dist) {
                ss += yk * yk;
                count += 1.0;
                if (*d - 1.0).abs() < 1e-12 {
                    cross += a * yk;
                    cross_n += 1.0;
                }
            }
        }
        let sigma2 = if ss > 0.0 { ss / count } else { 1.0 };
        let corr = if cross_n > 0.0 { cross / (cross_n * sigma2) } else { 0.5 };
        let corr = corr.clamp(0.05, 0.95);
        alloc::vec![sigma2, -3.0 / corr.ln()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn covariogram_values() {
        let p = GeoParams::new(2.0, 5.0);
        assert_eq!(exp_cov(&p, [0.0, 0.0]), 2.0);
        assert!((exp_cov(&p, [3.0, 4.0]) - 2.0 * (-3.0f64).exp()).abs() < 1e-15);
        assert!(exp_cov(&p, [1.0, 0.0]) > exp_cov(&p, [1.0, 1.0]));
    }

    #[test]
    fn partition_counts() {
        let p = block_partition(6, 1).unwrap();
        assert_eq!((p.n_blocks(), p.pairs_per_block()), (9, 3));
        let p = block_partition(6, 2).unwrap();
        assert_eq!((p.n_blocks(), p.pairs_per_block()), (4, 8));
        let p = block_partition(5, 1).unwrap();
        assert_eq!(p.n_blocks(), 4);
        assert!(block_partition(2, 2).is_err());
        assert_eq!(block_partition(35, 5).unwrap().n_blocks(), 25);
    }

    #[test]
    fn partition_blocks_are_disjoint() {
        let p = block_partition(11, 2).unwrap();
        let mut seen = [false; 121];
        for u in 0..p.n_blocks() {
            let sites = p.sites(u);
            assert_eq!(sites[0], p.anchor(u));
            for (r, c) in sites {
                assert!(!seen[r * 11 + c]);
                seen[r * 11 + c] = true;
            }
            for (a, b) in p.pairs(u) {
                assert_eq!(a, p.anchor(u));
                assert!(b.0 / 3 == a.0 / 3 && b.1 / 3 == a.1 / 3);
            }
        }
        assert_eq!(seen.iter().filter(|s| **s).count(), 81);
    }

    #[test]
    fn pl_special_values() {
        let part = block_partition(4, 1).unwrap();
        let zero = LatticeField::new(4, vec![0.0; 16]).unwrap();
        let p = GeoParams::new(1.0, 5.0);
        let base = pl_geostat(&p, &zero, &part).unwrap();
        let log_terms: f64 = part
            .pair_distances()
            .iter()
            .map(|d| -0.5 * (1.0 - p.correlation(*d).powi(2)).ln())
            .sum::<f64>()
            * 4.0;
        assert!((base - log_terms).abs() < 1e-12);
        let doubled = pl_geostat(&GeoParams::new(2.0, 5.0), &zero, &part).unwrap();
        assert!((doubled - base + 12.0 / 2.0 * 2f64.ln()).abs() < 1e-12);

        // A vanishing range decouples the sites.
        let mut vals = vec![0.0; 4];
        vals[0] = 1.0;
        let f = LatticeField::new(2, vals).unwrap();
        let tiny = GeoParams::new(1.0, 1e-3);
        let part = block_partition(2, 1).unwrap();
        assert!((pl_geostat(&tiny, &f, &part).unwrap() + 1.5).abs() < 1e-12);
    }

    #[test]
    fn centred_residuals_give_constant_score() {
        let part = block_partition(4, 1).unwrap();
        let zero = LatticeField::new(4, vec![0.0; 16]).unwrap();
        let t = RobustTuning::uniform(1.3).unwrap();
        let s = geo_unit_score(&GeoParams::new(1.0, 3.0), &zero, &part, 2, &t).unwrap();
        assert!((s[0] + 3.0 * t.beta_c()).abs() < 1e-14);
        assert_eq!(s[1], 0.0);
        assert!(geo_unit_score(&GeoParams::new(1.0, 3.0), &zero, &part, 4, &t).is_err());
    }

    #[test]
    fn default_l_tracks_effective_range() {
        assert_eq!(default_block_l(5.0), 5);
        assert_eq!(default_block_l(7.0), 7);
        assert_eq!(default_block_l(9.0), 9);
    }

    #[test]
    fn resample_selects_blocks() {
        let part = block_partition(4, 1).unwrap();
        let f = LatticeField::new(4, (0..16).map(|v| v as f64).collect()).unwrap();
        let m = GeoModel::new(4, 1, RobustTuning::classical()).unwrap();
        let d = m.data(&f).unwrap();
        let r = m.resample(&d, &[3, 3]);
        assert_eq!(r.n_blocks(), 2);
        assert_eq!(r.block(1), (10.0, &[11.0, 14.0, 15.0][..]));
        assert_eq!(part.n_blocks(), d.n_blocks());
    }
}
