//! Simulation laws, unbiasedness of the estimating functions and
//! consistency of the fits.

mod common;

use common::*;
use pairsp_core::inference::{fit_mple, FitOptions};
use pairsp_core::model::{total_score, ScoreModel};
use pairsp_core::models::ar1::simulate_ar1;
use pairsp_core::models::mvn::simulate_equicorr;
use pairsp_core::models::{
    block_partition, huber_beta_const, huber_psi, Ar1Params, ContaminationSpec, GeoParams, GrfSampler, MvnParams,
    RobustTuning,
};
use pairsp_core::numerics::RngStream;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn autocov(v: &[f64], lag: usize) -> f64 {
    let m = mean(v);
    v.iter().zip(&v[lag..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / (v.len() - lag) as f64
}

#[test]
fn independent_ar1_is_iid_normal() {
    let p = Ar1Params::new(0.7, 0.0, 2.0);
    let y = simulate_ar1(&p, 100_000, &ContaminationSpec::none(), &mut RngStream::new(61, 0).rng()).unwrap();
    let se_mean = (2.0 / y.len() as f64).sqrt();
    assert!((mean(&y) - 0.7).abs() < 4.0 * se_mean);
    let var = autocov(&y, 0);
    assert!((var - 2.0).abs() < 4.0 * 2.0 * (2.0 / y.len() as f64).sqrt());
    assert!(autocov(&y, 1).abs() / var < 0.02);
}

#[test]
fn ar1_lag_one_autocorrelation() {
    for phi1 in [-0.5, 0.2, 0.8] {
        let p = Ar1Params::new(0.1, phi1, 1.0);
        let y = simulate_ar1(&p, 100_000, &ContaminationSpec::none(), &mut RngStream::new(62, 0).rng()).unwrap();
        let r1 = autocov(&y, 1) / autocov(&y, 0);
        assert!((r1 - phi1).abs() < 0.02, "phi1 {phi1}: {r1}");
        let v = p.stationary_variance();
        assert!((autocov(&y, 0) - v).abs() < 0.05 * v);
    }
}

#[test]
fn contamination_inflates_the_variance() {
    let p = Ar1Params::new(0.0, 0.5, 1.0);
    let c = ContaminationSpec::new(0.05, 0.0, 25.0).unwrap();
    let y = simulate_ar1(&p, 200_000, &c, &mut RngStream::new(63, 0).rng()).unwrap();
    // Innovation variance 1 + ξσ²ᵤ = 2.25, stationary variance 2.25/0.75.
    let v = autocov(&y, 0);
    assert!((v - 3.0).abs() < 0.1, "{v}");
}

#[test]
fn equicorrelated_rows_have_the_right_covariance() {
    let p = MvnParams::new(1.5, 2.0, 0.3);
    let s = simulate_equicorr(&p, 40_000, 4, &mut RngStream::new(64, 0).rng()).unwrap();
    let cols: Vec<Vec<f64>> = (0..4).map(|j| (0..s.n()).map(|i| s.row(i)[j]).collect()).collect();
    for j in 0..4 {
        assert!((mean(&cols[j]) - 1.5).abs() < 0.03);
        for k in 0..4 {
            let (mj, mk) = (mean(&cols[j]), mean(&cols[k]));
            let c = cols[j].iter().zip(&cols[k]).map(|(a, b)| (a - mj) * (b - mk)).sum::<f64>() / s.n() as f64;
            let target = if j == k { 2.0 } else { 0.6 };
            assert!((c - target).abs() < 0.06, "cov({j},{k}) = {c}");
        }
    }
}

#[test]
fn gaussian_field_covariogram() {
    let params = GeoParams::new(1.5, 3.0);
    let sampler = GrfSampler::new(&params, 12).unwrap();
    let mut rng = RngStream::new(65, 0).rng();
    let (mut c0, mut c1, mut c2) = (0.0, 0.0, 0.0);
    let reps = 2000;
    for _ in 0..reps {
        let f = sampler.sample(&mut rng);
        c0 += f.at(5, 5) * f.at(5, 5);
        c1 += f.at(5, 5) * f.at(5, 6);
        c2 += f.at(5, 5) * f.at(7, 5);
    }
    let n = reps as f64;
    assert!((c0 / n - 1.5).abs() < 0.15);
    assert!((c1 / n - 1.5 * (-1.0f64).exp()).abs() < 0.15);
    assert!((c2 / n - 1.5 * (-2.0f64).exp()).abs() < 0.15);
}

/// `E Σ s(θ₀) = 0` within four Monte Carlo standard errors.
fn unbiased<M: ScoreModel>(model: &M, theta: &[f64], reps: u64, seed: u64) {
    let p = model.dim();
    let totals: Vec<Vec<f64>> = (0..reps)
        .map(|k| total_score(model, theta, &sample(model, theta, seed, k)).unwrap())
        .collect();
    for c in 0..p {
        let v: Vec<f64> = totals.iter().map(|t| t[c]).collect();
        let m = mean(&v);
        let se = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64 / v.len() as f64).sqrt();
        assert!(m.abs() < 4.0 * se, "component {c}: mean {m}, se {se}");
    }
}

#[test]
fn estimating_functions_are_unbiased() {
    unbiased(&mvn(10, 30), &[0.0, 1.0, 0.5], 2000, 66);
    unbiased(&ar1(50, gamma1()), &[0.0, 0.2, 1.0], 2000, 67);
    unbiased(&ar1(50, RobustTuning::classical()), &[0.3, -0.4, 2.0], 2000, 68);
    unbiased(&geo(18, 2, gamma1(), 1.0, 2.0), &[1.0, 2.0], 1000, 69);
}

#[test]
fn fits_recover_the_truth_in_large_samples() {
    let opts = FitOptions::default();
    let theta = [0.5, 1.5, 0.4];
    let m = mvn(5000, 5);
    let f = fit_mple(&m, &sample(&m, &theta, 70, 0), None, &opts).unwrap();
    assert!(max_abs_diff(f.theta_hat.values(), &theta) < 0.06, "{:?}", f.theta_hat.values());

    let theta = [0.2, 0.5, 1.0];
    let a = ar1(20_000, gamma1());
    let f = fit_mple(&a, &sample(&a, &theta, 71, 0), None, &opts).unwrap();
    assert!(max_abs_diff(f.theta_hat.values(), &theta) < 0.04, "{:?}", f.theta_hat.values());

    let g = geo(60, 2, gamma1(), 1.0, 2.0);
    let f = fit_mple(&g, &sample(&g, &[1.0, 2.0], 72, 0), None, &opts).unwrap();
    assert!((f.theta_hat[0] - 1.0).abs() < 0.3 && (f.theta_hat[1] - 2.0).abs() < 0.8, "{:?}", f.theta_hat.values());
}

#[test]
fn robust_fit_resists_outliers() {
    let theta = [0.0, 0.5, 1.0];
    let c = ContaminationSpec::new(0.05, 0.0, 25.0).unwrap();
    let robust = pairsp_core::models::Ar1Model::new(5000, gamma1(), c).unwrap();
    let classical = pairsp_core::models::Ar1Model::new(5000, RobustTuning::classical(), c).unwrap();
    let data = sample(&robust, &theta, 73, 0);
    let opts = FitOptions::default();
    let fr = fit_mple(&robust, &data, None, &opts).unwrap();
    let fc = fit_mple(&classical, &data, None, &opts).unwrap();
    // Additive outliers inflate the classical scale estimate to about 2.25.
    assert!((fc.theta_hat[2] - 2.25).abs() < 0.3);
    assert!((fr.theta_hat[2] - theta[2]).abs() < (fc.theta_hat[2] - theta[2]).abs());
}

#[test]
fn block_scores_equal_direct_pair_sums() {
    let params = GeoParams::new(1.2, 2.5);
    let t = gamma1();
    let model = geo(20, 3, t, 1.2, 2.5);
    let part = block_partition(20, 3).unwrap();
    let beta = huber_beta_const(t.c());
    let theta = [0.9, 3.1];
    for k in 0..5 {
        let field = GrfSampler::new(&params, 20).unwrap().sample(&mut RngStream::new(74, k).rng());
        let data = model.data(&field).unwrap();
        for u in 0..part.n_blocks() {
            let mut direct = [0.0; 2];
            for ((ra, ca), (rb, cb)) in part.pairs(u) {
                let d = ((ra as f64 - rb as f64).powi(2) + (ca as f64 - cb as f64).powi(2)).sqrt();
                // Effective range φ: ρ(d) = exp(−3d/φ).
                let rho = (-3.0 * d / theta[1]).exp();
                let drho = 3.0 * d / (theta[1] * theta[1]) * rho;
                let (ya, yb) = (field.at(ra, ca), field.at(rb, cb));
                let r = (ya - rho * yb) / (theta[0] * (1.0 - rho * rho)).sqrt();
                direct[0] += huber_psi(r, t.c()).powi(2) - beta;
                direct[1] += huber_psi(r, t.a()) * huber_psi(yb, t.b()) * drho;
            }
            let mut s = [0.0; 2];
            model.unit_score(&theta, &data, u, &mut s);
            assert!(max_abs_diff(&s, &direct) < 1e-10);
        }
    }
}
