//! At the fitted parameter the saddlepoint statistic vanishes.

mod common;

use std::time::Instant;

use common::*;
use pairsp_core::inference::{fit_mple, FitOptions};
use pairsp_core::model::ScoreModel;
use pairsp_core::saddlepoint::stat_pw_sp;

const DATASETS: u64 = 100;

/// Checks the first 100 datasets whose estimating equation has a root.
/// Small geostatistical samples occasionally have none.
fn check<M: ScoreModel>(model: &M, theta: &[f64], seed: u64) {
    let mut fitted = 0;
    let mut k = 0;
    while fitted < DATASETS {
        let data = sample(model, theta, seed, k);
        k += 1;
        let Ok(fit) = fit_mple(model, &data, None, &FitOptions::default()) else {
            continue;
        };
        fitted += 1;
        let sp = stat_pw_sp(model, &data, fit.theta_hat.values(), &fit).unwrap();
        assert!(sp.value.abs() <= 1e-8, "dataset {k}: {}", sp.value);
        assert!(sp.p_value.unwrap() > 1.0 - 1e-6);
    }
    assert!(k <= DATASETS + 10, "{} of {k} fits failed", k - DATASETS);
}

#[test]
fn sp_vanishes_at_the_fit() {
    let clock = Instant::now();
    check(&mvn(10, 30), &[0.0, 1.0, 0.5], 41);
    check(&ar1(50, gamma1()), &[0.0, 0.2, 1.0], 42);
    check(&ar1(50, pairsp_core::models::RobustTuning::classical()), &[0.0, 0.5, 1.0], 43);
    check(&geo(18, 2, gamma1(), 1.0, 2.0), &[1.0, 2.0], 44);
    assert!(clock.elapsed().as_secs() < 60);
}
