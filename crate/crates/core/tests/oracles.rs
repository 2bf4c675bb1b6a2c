//! The tilt and saddlepoint solvers against closed forms and brute-force
//! minimizers.

use std::time::Instant;

use pairsp_core::inference::{fit_mple, FitOptions};
use pairsp_core::model::{Coord, ScoreModel, UnitKind, UnitScoreMatrix};
use pairsp_core::numerics::{Matrix, RngStream};
use pairsp_core::saddlepoint::{pw_sp_from_scores, solve_saddle, solve_tilt, stat_pw_sp};
use pairsp_core::Result;
use rand::Rng;

fn column(v: &[f64]) -> UnitScoreMatrix {
    UnitScoreMatrix::new(Matrix::from_vec(v.len(), 1, v.to_vec()).unwrap(), UnitKind::Row).unwrap()
}

/// One-parameter model with unit scores `aᵢ + bᵢθ`.
struct Linear;

#[derive(Clone)]
struct Coeffs(Vec<(f64, f64)>);

impl ScoreModel for Linear {
    type Data = Coeffs;

    fn param_names(&self) -> Vec<&'static str> {
        vec!["theta"]
    }

    fn coords(&self) -> Vec<Coord> {
        vec![Coord::Free]
    }

    fn unit_kind(&self) -> UnitKind {
        UnitKind::Row
    }

    fn unit_count(&self, data: &Coeffs) -> usize {
        data.0.len()
    }

    fn unit_score(&self, theta: &[f64], data: &Coeffs, i: usize, out: &mut [f64]) {
        let (a, b) = data.0[i];
        out[0] = a + b * theta[0];
    }

    fn unit_pl(&self, theta: &[f64], data: &Coeffs, i: usize) -> f64 {
        let (a, b) = data.0[i];
        a * theta[0] + 0.5 * b * theta[0] * theta[0]
    }

    fn unit_pl_gradient(&self, theta: &[f64], data: &Coeffs, i: usize, out: &mut [f64]) {
        self.unit_score(theta, data, i, out);
    }

    fn gradient_type(&self) -> bool {
        true
    }

    fn simulate<R: Rng + ?Sized>(&self, _theta: &[f64], _rng: &mut R) -> Result<Coeffs> {
        unimplemented!("fixture model")
    }

    fn resample(&self, data: &Coeffs, indices: &[usize]) -> Coeffs {
        Coeffs(indices.iter().map(|&i| data.0[i]).collect())
    }

    fn start(&self, _data: &Coeffs) -> Vec<f64> {
        vec![0.5]
    }
}

#[test]
fn closed_form_fixtures() {
    let clock = Instant::now();
    let ln2 = 2f64.ln();

    let t = solve_tilt(&column(&[-1.0, 2.0])).unwrap();
    assert!((t.beta[0] + ln2 / 3.0).abs() < 1e-10);
    assert!((t.weights[0] - 2.0 / 3.0).abs() < 1e-10 && (t.weights[1] - 1.0 / 3.0).abs() < 1e-10);

    let s = solve_saddle(&column(&[-1.0, 1.0]), &t).unwrap();
    let k_w = (2.0 * 2f64.sqrt() / 3.0).ln();
    assert!((s.lambda[0] - ln2 / 2.0).abs() < 1e-10);
    assert!((s.k_w - k_w).abs() < 1e-10);

    // Scores {−1, 2} at θ₀ = 0 and {−1, 1} at the root θ̂ = 1.
    let data = Coeffs(vec![(-1.0, 0.0), (2.0, -1.0)]);
    let fit = fit_mple(&Linear, &data, None, &FitOptions::default()).unwrap();
    assert!((fit.theta_hat[0] - 1.0).abs() < 1e-8);
    let sp = stat_pw_sp(&Linear, &data, &[0.0], &fit).unwrap();
    assert!((sp.value - (-4.0 * k_w)).abs() < 1e-6);
    assert!((sp.value - 0.23556).abs() < 1e-5);
    assert_eq!(sp.df, 1);

    // Symmetric scores need no tilting.
    let t = solve_tilt(&column(&[-0.7, 0.7])).unwrap();
    assert!(t.beta[0].abs() < 1e-12 && (t.weights[0] - 0.5).abs() < 1e-12);

    assert!(clock.elapsed().as_secs_f64() < 1.0);
}

/// Golden-section minimum of a unimodal `f` on `[lo, hi]`.
fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Bracket from a coarse grid, then golden section inside it.
fn brute_minimize(f: impl Fn(f64) -> f64) -> f64 {
    let grid: Vec<f64> = (-400..=400).map(|k| k as f64 * 0.1).collect();
    let best = (0..grid.len()).min_by(|&a, &b| f(grid[a]).total_cmp(&f(grid[b]))).unwrap();
    assert!(best > 0 && best + 1 < grid.len(), "minimizer outside the grid");
    golden(f, grid[best - 1], grid[best + 1])
}

fn lse(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn two_signed<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let pos = v.iter().filter(|x| **x > 0.2).count();
        let neg = v.iter().filter(|x| **x < -0.2).count();
        if pos > 0 && neg > 0 {
            return v;
        }
    }
}

#[test]
fn newton_matches_golden_section() {
    let mut rng = RngStream::new(31, 0).rng();
    for case in 0..50 {
        let n = rng.random_range(2..=8);
        let s0 = two_signed(n, &mut rng);
        let s1 = two_signed(n, &mut rng);

        let tilt = solve_tilt(&column(&s0)).unwrap();
        let beta = brute_minimize(|b| lse(s0.iter().map(|s| b * s)));
        assert!((tilt.beta[0] - beta).abs() < 1e-6, "case {case}: tilt {} vs {beta}", tilt.beta[0]);

        let saddle = solve_saddle(&column(&s1), &tilt).unwrap();
        let k = |l: f64| lse(s1.iter().zip(&tilt.weights).map(|(s, w)| w.ln() + l * s));
        let lambda = brute_minimize(k);
        assert!((saddle.lambda[0] - lambda).abs() < 1e-6, "case {case}: saddle {} vs {lambda}", saddle.lambda[0]);
        assert!((saddle.k_w - k(lambda)).abs() < 1e-10);
        assert!(saddle.k_w <= 0.0);

        let d = pw_sp_from_scores(&column(&s0), &column(&s1)).unwrap();
        assert!((d.value + 2.0 * n as f64 * k(lambda)).abs() < 1e-8);
    }
}

fn kl(w: &[f64]) -> f64 {
    let n = w.len() as f64;
    w.iter().filter(|x| **x > 0.0).map(|x| x * (n * x).ln()).sum()
}

/// Completes `head` (the first `n − 2` weights) with the two weights that
/// satisfy `Σw = 1` and `Σ w s = 0`, if they are non-negative.
fn complete(head: &[f64], s: &[f64]) -> Option<Vec<f64>> {
    let n = s.len();
    let rest_mass = 1.0 - head.iter().sum::<f64>();
    let rest_moment = -head.iter().zip(s).map(|(w, x)| w * x).sum::<f64>();
    let (a, b) = (s[n - 2], s[n - 1]);
    if (a - b).abs() < 1e-12 {
        return None;
    }
    let wa = (rest_moment - b * rest_mass) / (a - b);
    let wb = rest_mass - wa;
    if rest_mass < 0.0 || wa < 0.0 || wb < 0.0 {
        return None;
    }
    let mut w = head.to_vec();
    w.push(wa);
    w.push(wb);
    Some(w)
}

/// Minimum of the backward KL over the constrained simplex, by a grid over
/// the free weights refined around the incumbent.
fn simplex_grid_minimum(s: &[f64]) -> f64 {
    let free = s.len() - 2;
    let mut centre = vec![0.5; free];
    let mut half = 0.5;
    let mut best = f64::INFINITY;
    let per_axis: usize = [0, 200, 60, 24, 12][free.min(4)];
    for _ in 0..12 {
        let steps = per_axis.max(2);
        let mut idx = vec![0usize; free];
        let mut found = centre.clone();
        loop {
            let head: Vec<f64> = idx
                .iter()
                .zip(&centre)
                .map(|(k, c)| c - half + 2.0 * half * *k as f64 / steps as f64)
                .collect();
            if head.iter().all(|w| *w >= 0.0) {
                if let Some(w) = complete(&head, s) {
                    let v = kl(&w);
                    if v < best {
                        best = v;
                        found = head;
                    }
                }
            }
            let mut a = 0;
            while a < free {
                idx[a] += 1;
                if idx[a] <= steps {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
            if a == free {
                break;
            }
        }
        centre = found;
        half *= 0.25;
    }
    best
}

#[test]
fn tilt_weights_minimize_backward_kl() {
    let mut rng = RngStream::new(32, 0).rng();
    for n in 3..=6 {
        for _ in 0..3 {
            let s = two_signed(n, &mut rng);
            let t = solve_tilt(&column(&s)).unwrap();
            assert!(t.weights.iter().zip(&s).map(|(w, x)| w * x).sum::<f64>().abs() < 1e-8);
            assert!((kl(&t.weights) - t.kl_backward).abs() < 1e-12);
            let grid = simplex_grid_minimum(&s);
            assert!((grid - t.kl_backward).abs() < 1e-4, "n={n}: grid {grid} vs {}", t.kl_backward);
            assert!(grid >= t.kl_backward - 1e-9);
        }
    }
}
