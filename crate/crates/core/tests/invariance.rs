//! Invariance of the statistics under linear score maps and
//! reparametrization, and the algebraic identities behind `cb` and `inv`.

mod common;

use common::*;
use pairsp_core::classic::{classic_test, StatKind};
use pairsp_core::inference::{fit_mple, godambe_empirical, FitOptions, FitResult, GodambeMatrices};
use pairsp_core::model::{pairwise_loglik, total_score, unit_scores, ParamVector, ScoreModel};
use pairsp_core::models::{MvnModel, RobustTuning};
use pairsp_core::numerics::{dot, Matrix, RngStream};
use pairsp_core::reparam::{Affine, Componentwise, Link, ParamMap, Reparametrized};
use pairsp_core::saddlepoint::{pw_sp_from_scores, stat_pw_sp};
use rand::Rng;

const MVN_THETA: [f64; 3] = [0.0, 1.0, 0.5];

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

fn random_invertible<R: Rng>(p: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(p, p, |r, c| rng.random_range(-1.0..1.0) + if r == c { 2.5 } else { 0.0 })
}

fn fit<M: ScoreModel>(model: &M, data: &M::Data) -> FitResult {
    let f = fit_mple(model, data, None, &FitOptions::default()).unwrap();
    assert!(f.converged);
    f
}

fn refit_at<M: ScoreModel>(model: &M, fit: &FitResult, point: Vec<f64>) -> FitResult {
    FitResult {
        theta_hat: ParamVector::new(model.param_names(), point).unwrap(),
        ..fit.clone()
    }
}

fn linear_map_check<M: ScoreModel>(model: &M, theta0: &[f64], seed: u64) {
    let mut rng = RngStream::new(seed, 0).rng();
    let p = model.dim();
    let mut checked = 0;
    for k in 0..10 {
        let data = sample(model, theta0, seed, k + 1);
        let f = fit(model, &data);
        let null = unit_scores(model, theta0, &data).unwrap();
        let at_fit = unit_scores(model, f.theta_hat.values(), &data).unwrap();
        let Ok(base) = pw_sp_from_scores(&null, &at_fit) else {
            continue;
        };
        let a = random_invertible(p, &mut rng);
        let b = random_invertible(p, &mut rng);
        let mapped = pw_sp_from_scores(&null.map_linear(&a).unwrap(), &at_fit.map_linear(&b).unwrap()).unwrap();
        assert!(close(mapped.value, base.value, 1e-8), "{} vs {}", mapped.value, base.value);
        // β transforms as A⁻ᵀβ.
        let beta_back = a.transpose().matvec(&mapped.tilt.beta);
        assert!(max_abs_diff(&beta_back, &base.tilt.beta) < 1e-8 * base.tilt.beta.iter().fold(1.0, |m, v| f64::max(m, v.abs())));
        checked += 1;
    }
    assert!(checked >= 8);
}

#[test]
fn sp_is_invariant_under_linear_score_maps() {
    linear_map_check(&mvn(12, 6), &MVN_THETA, 21);
    linear_map_check(&ar1(50, gamma1()), &[0.0, 0.2, 1.0], 22);
    linear_map_check(&geo(18, 2, gamma1(), 1.0, 2.0), &[1.0, 2.0], 23);
}

struct Stats {
    score: f64,
    inv: f64,
    sp: f64,
}

fn stats<M: ScoreModel>(model: &M, data: &M::Data, theta0: &[f64], fit: &FitResult, g_null: &GodambeMatrices) -> Stats {
    let g_fit = godambe_empirical(model, fit.theta_hat.values(), data).unwrap();
    let get = |kind| classic_test(kind, model, data, theta0, fit, g_null, &g_fit).unwrap().value;
    Stats {
        score: get(StatKind::Score),
        inv: get(StatKind::Inv),
        sp: stat_pw_sp(model, data, theta0, fit).unwrap().value,
    }
}

#[test]
fn affine_reparametrization_leaves_score_inv_and_sp_unchanged() {
    let model = mvn(15, 6);
    let mut rng = RngStream::new(24, 0).rng();
    let mut checked = 0;
    for k in 0..10 {
        let data = sample(&model, &MVN_THETA, 24, k + 1);
        let f = fit(&model, &data);
        let g0 = godambe_empirical(&model, &MVN_THETA, &data).unwrap();
        let Ok(sp) = stat_pw_sp(&model, &data, &MVN_THETA, &f) else {
            continue;
        };
        let base = stats(&model, &data, &MVN_THETA, &f, &g0);
        assert_eq!(base.sp, sp.value);

        let map = Affine::new(random_invertible(3, &mut rng), vec![0.3, -0.2, 0.1]).unwrap();
        let psi0 = map.inverse(&MVN_THETA).unwrap();
        let psi_hat = map.inverse(f.theta_hat.values()).unwrap();
        let rp = Reparametrized::new(&model, map);
        let f_psi = refit_at(&rp, &f, psi_hat);
        let g0_psi = godambe_empirical(&rp, &psi0, &data).unwrap();
        let alt = stats(&rp, &data, &psi0, &f_psi, &g0_psi);
        assert!(close(alt.score, base.score, 1e-8), "score {} vs {}", alt.score, base.score);
        assert!(close(alt.inv, base.inv, 1e-8), "inv {} vs {}", alt.inv, base.inv);
        assert!(close(alt.sp, base.sp, 1e-8), "sp {} vs {}", alt.sp, base.sp);
        checked += 1;
    }
    assert!(checked >= 8);
}

fn log_atanh() -> Componentwise {
    Componentwise(vec![Link::Identity, Link::Log, Link::Atanh])
}

#[test]
fn mvn_log_atanh_parametrization() {
    let model = mvn(10, 30);
    let mut checked = 0;
    for k in 0..10 {
        let data = sample(&model, &MVN_THETA, 25, k + 1);
        let f = fit(&model, &data);
        let g0 = godambe_empirical(&model, &MVN_THETA, &data).unwrap();
        let Ok(_) = stat_pw_sp(&model, &data, &MVN_THETA, &f) else {
            continue;
        };
        let base = stats(&model, &data, &MVN_THETA, &f, &g0);

        let map = log_atanh();
        let psi0 = map.inverse(&MVN_THETA).unwrap();
        let psi_hat = map.inverse(f.theta_hat.values()).unwrap();
        let a0 = map.jacobian(&psi0);
        let rp = Reparametrized::new(&model, map);
        let f_psi = refit_at(&rp, &f, psi_hat);
        // H at the null is transported by the Jacobian; the empirical
        // Hessian in ψ picks up a Σsᵢ(θ₀)·∂²θ term that vanishes only in
        // expectation.
        let g0_psi = g0
            .reparametrize(&a0, ParamVector::new(rp.param_names(), psi0.clone()).unwrap())
            .unwrap();
        let alt = stats(&rp, &data, &psi0, &f_psi, &g0_psi);
        assert!(close(alt.score, base.score, 1e-6), "score {} vs {}", alt.score, base.score);
        assert!(close(alt.inv, base.inv, 1e-6), "inv {} vs {}", alt.inv, base.inv);
        assert!(close(alt.sp, base.sp, 1e-6), "sp {} vs {}", alt.sp, base.sp);

        // Refitting in ψ lands on the same point.
        let refit = fit(&rp, &data);
        let back = rp.map.forward(refit.theta_hat.values());
        assert!(max_abs_diff(&back, f.theta_hat.values()) < 1e-6);
        checked += 1;
    }
    assert!(checked >= 5);
}

#[test]
fn cb_and_inv_identities() {
    let model = mvn(20, 5);
    for k in 0..10 {
        let data = sample(&model, &MVN_THETA, 26, k + 1);
        let f = fit(&model, &data);
        let th = f.theta_hat.values();
        let g0 = godambe_empirical(&model, &MVN_THETA, &data).unwrap();
        let g1 = godambe_empirical(&model, th, &data).unwrap();
        let pw = 2.0 * (pairwise_loglik(&model, th, &data).unwrap() - pairwise_loglik(&model, &MVN_THETA, &data).unwrap());
        let d: Vec<f64> = th.iter().zip(&MVN_THETA).map(|(a, b)| a - b).collect();
        let ps = total_score(&model, &MVN_THETA, &data).unwrap();

        let v_inv = g1.v.as_matrix().inverse().unwrap();
        let cb_expected = pw * dot(&d, &v_inv.matvec(&d)) / dot(&d, &g1.h.matvec(&d));
        let cb = classic_test(StatKind::Cb, &model, &data, &MVN_THETA, &f, &g0, &g1).unwrap();
        assert!(close(cb.value, cb_expected, 1e-10), "cb {} vs {}", cb.value, cb_expected);

        let j_inv = g0.j.as_matrix().inverse().unwrap();
        let h_inv = g0.h.inverse().unwrap();
        let inv_expected = pw * dot(&ps, &j_inv.matvec(&ps)) / dot(&ps, &h_inv.matvec(&ps));
        let inv = classic_test(StatKind::Inv, &model, &data, &MVN_THETA, &f, &g0, &g1).unwrap();
        assert!(close(inv.value, inv_expected, 1e-10), "inv {} vs {}", inv.value, inv_expected);
    }
}

#[test]
fn classic_suite_needs_gradient_scores() {
    let model = ar1(30, RobustTuning::uniform(1.3).unwrap());
    let data = sample(&model, &[0.0, 0.2, 1.0], 27, 0);
    let f = fit(&model, &data);
    let g = godambe_empirical(&model, &[0.0, 0.2, 1.0], &data).unwrap();
    assert!(classic_test(StatKind::Score, &model, &data, &[0.0, 0.2, 1.0], &f, &g, &g).is_err());
    let _ = MvnModel::new(1, 2).unwrap();
}
