#![allow(dead_code)]

use pairsp_core::model::ScoreModel;
use pairsp_core::models::{Ar1Model, ContaminationSpec, GeoModel, GeoParams, MvnModel, RobustTuning};
use pairsp_core::numerics::RngStream;
use rand::Rng;

pub fn gamma1() -> RobustTuning {
    RobustTuning::uniform(1.3).unwrap()
}

pub fn mvn(n: usize, q: usize) -> MvnModel {
    MvnModel::new(n, q).unwrap()
}

pub fn ar1(q: usize, tuning: RobustTuning) -> Ar1Model {
    Ar1Model::new(q, tuning, ContaminationSpec::none()).unwrap()
}

pub fn geo(q: usize, l: usize, tuning: RobustTuning, sigma2: f64, phi: f64) -> GeoModel {
    GeoModel::with_sampler(q, l, tuning, &GeoParams::new(sigma2, phi)).unwrap()
}

pub fn random_mvn_theta<R: Rng>(rng: &mut R) -> Vec<f64> {
    vec![rng.random_range(-1.0..1.0), rng.random_range(0.5..2.0), rng.random_range(0.1..0.8)]
}

pub fn random_ar1_theta<R: Rng>(rng: &mut R) -> Vec<f64> {
    vec![rng.random_range(-0.5..0.5), rng.random_range(-0.7..0.7), rng.random_range(0.5..2.0)]
}

pub fn random_geo_theta<R: Rng>(rng: &mut R) -> Vec<f64> {
    vec![rng.random_range(0.5..2.0), rng.random_range(0.8..4.0)]
}

/// Dataset simulated at `theta` from stream `(seed, idx)`.
pub fn sample<M: ScoreModel>(model: &M, theta: &[f64], seed: u64, idx: u64) -> M::Data {
    model.simulate(theta, &mut RngStream::new(seed, idx).rng()).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `‖a − b‖∞ / max(‖b‖∞, 1)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().map(|v| v.abs()).fold(1.0, f64::max);
    max_abs_diff(a, b) / scale
}
