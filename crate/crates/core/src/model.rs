//! The model abstraction shared by every concrete pairwise likelihood model.
//!
//! A model decomposes its data into exchangeable *units* (sample rows,
//! adjacent pairs of a series, spatial blocks). Every asymptotic average in
//! the crate is taken over units, and resampling draws whole units.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// How a model's data is cut into units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitKind {
    Row,
    AdjacentPair,
    Block,
}

/// A named parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    names: Vec<&'static str>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(names: Vec<&'static str>, values: Vec<f64>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                got: values.len(),
            });
        }
        Ok(Self { names, values })
    }

    pub fn names(&self) -> &[&'static str] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values[i])
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// Domain of one parameter coordinate and its map to the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coord {
    Free,
    /// `(0, ∞)` through `log`.
    Positive,
    /// `(lo, hi)` through a scaled logit.
    Interval { lo: f64, hi: f64 },
}

impl Coord {
    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Coord::Free => x.is_finite(),
            Coord::Positive => x > 0.0 && x.is_finite(),
            Coord::Interval { lo, hi } => x > lo && x < hi,
        }
    }

    pub fn to_unconstrained(&self, x: f64) -> f64 {
        match *self {
            Coord::Free => x,
            Coord::Positive => x.ln(),
            Coord::Interval { lo, hi } => {
                let u = (x - lo) / (hi - lo);
                (u / (1.0 - u)).ln()
            }
        }
    }

    pub fn from_unconstrained(&self, e: f64) -> f64 {
        match *self {
            Coord::Free => e,
            Coord::Positive => e.exp(),
            Coord::Interval { lo, hi } => {
                let u = 1.0 / (1.0 + (-e).exp());
                lo + (hi - lo) * u
            }
        }
    }

    /// `dx/de` at unconstrained coordinate `e`.
    pub fn derivative(&self, e: f64) -> f64 {
        match *self {
            Coord::Free => 1.0,
            Coord::Positive => e.exp(),
            Coord::Interval { lo, hi } => {
                let u = 1.0 / (1.0 + (-e).exp());
                (hi - lo) * u * (1.0 - u)
            }
        }
    }
}

/// `n × q` matrix of independent rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSample {
    n: usize,
    q: usize,
    values: Vec<f64>,
}

impl RowSample {
    pub fn new(n: usize, q: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || q == 0 {
            return Err(Error::domain("row sample dimensions must be positive"));
        }
        if values.len() != n * q {
            return Err(Error::DimensionMismatch {
                expected: n * q,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("row sample contains non-finite values"));
        }
        Ok(Self { n, q, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.q..(i + 1) * self.q]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn select_rows(&self, idx: &[usize]) -> RowSample {
        let mut values = Vec::with_capacity(idx.len() * self.q);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        RowSample {
            n: idx.len(),
            q: self.q,
            values,
        }
    }
}

/// `side × side` field on the integer lattice, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeField {
    side: usize,
    values: Vec<f64>,
}

impl LatticeField {
    pub fn new(side: usize, values: Vec<f64>) -> Result<Self> {
        if side == 0 {
            return Err(Error::domain("lattice side must be positive"));
        }
        if values.len() != side * side {
            return Err(Error::DimensionMismatch {
                expected: side * side,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("lattice field contains non-finite values"));
        }
        Ok(Self { side, values })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Value at zero-based `(row, col)`.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.side + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Raw observations as read from disk or produced by a simulator.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Rows(RowSample),
    Series(Vec<f64>),
    Lattice(LatticeField),
}

/// Per-unit score contributions, one row per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitScoreMatrix {
    scores: Matrix,
    kind: UnitKind,
}

impl UnitScoreMatrix {
    pub fn new(scores: Matrix, kind: UnitKind) -> Result<Self> {
        if !scores.is_finite() {
            return Err(Error::domain("unit scores must be finite"));
        }
        Ok(Self { scores, kind })
    }

    pub fn n_units(&self) -> usize {
        self.scores.rows()
    }

    pub fn dim(&self) -> usize {
        self.scores.cols()
    }

    pub fn kind(&self) -> UnitKind {
        self.kind
    }

    pub fn unit(&self, i: usize) -> &[f64] {
        self.scores.row(i)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.scores
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for i in 0..self.n_units() {
            for (o, s) in out.iter_mut().zip(self.unit(i)) {
                *o += s;
            }
        }
        out
    }

    /// Applies `sᵢ ↦ A sᵢ` to every unit.
    pub fn map_linear(&self, a: &Matrix) -> Result<UnitScoreMatrix> {
        if a.cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: a.cols(),
            });
        }
        let mapped = self.scores.matmul(&a.transpose())?;
        UnitScoreMatrix::new(mapped, self.kind)
    }
}

/// A pairwise likelihood model with a unit decomposition of its score.
///
/// `unit_score` is the model's estimating function, which for robust
/// variants is not the gradient of the pairwise log-likelihood.
/// `unit_pl_gradient` always is. Per-unit methods assume `theta` lies in the
/// domain; the free functions of this module check it.
pub trait ScoreModel: Sync {
    type Data: Clone + Send + Sync;

    fn param_names(&self) -> Vec<&'static str>;

    fn dim(&self) -> usize {
        self.param_names().len()
    }

    fn coords(&self) -> Vec<Coord>;

    fn in_domain(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && self
                .coords()
                .iter()
                .zip(theta)
                .all(|(c, x)| c.contains(*x))
    }

    fn unit_kind(&self) -> UnitKind;

    fn unit_count(&self, data: &Self::Data) -> usize;

    fn unit_score(&self, theta: &[f64], data: &Self::Data, i: usize, out: &mut [f64]);

    fn unit_pl(&self, theta: &[f64], data: &Self::Data, i: usize) -> f64;

    fn unit_pl_gradient(&self, theta: &[f64], data: &Self::Data, i: usize, out: &mut [f64]);

    /// Whether `unit_score` coincides with `unit_pl_gradient`.
    fn gradient_type(&self) -> bool;

    fn simulate<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Result<Self::Data>;

    /// Builds a dataset from the units at `indices`, with repetition.
    fn resample(&self, data: &Self::Data, indices: &[usize]) -> Self::Data;

    /// Starting point for solving the estimating equation.
    fn start(&self, data: &Self::Data) -> Vec<f64>;

    /// Alternative starting point after Newton stalled at `last`.
    fn restart(&self, _data: &Self::Data, _last: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Full log-likelihood ratio `2[ℓ(θ̂) − ℓ(θ₀)]`, where a tractable full
    /// likelihood exists.
    fn full_likelihood_ratio(&self, _data: &Self::Data, _theta0: &[f64]) -> Option<Result<f64>> {
        None
    }
}

pub(crate) fn check_theta<M: ScoreModel>(model: &M, theta: &[f64]) -> Result<()> {
    if theta.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: theta.len(),
        });
    }
    if !model.in_domain(theta) {
        return Err(Error::domain("parameter outside the model domain"));
    }
    Ok(())
}

/// Total estimating function `Σᵢ sᵢ(θ)`.
pub fn total_score<M: ScoreModel>(model: &M, theta: &[f64], data: &M::Data) -> Result<Vec<f64>> {
    check_theta(model, theta)?;
    Ok(total_score_unchecked(model, theta, data))
}

pub(crate) fn total_score_unchecked<M: ScoreModel>(
    model: &M,
    theta: &[f64],
    data: &M::Data,
) -> Vec<f64> {
    let p = model.dim();
    let mut total = vec![0.0; p];
    let mut s = vec![0.0; p];
    for i in 0..model.unit_count(data) {
        model.unit_score(theta, data, i, &mut s);
        for (t, v) in total.iter_mut().zip(&s) {
            *t += v;
        }
    }
    total
}

/// The `n_units × p` matrix of unit scores.
pub fn unit_scores<M: ScoreModel>(
    model: &M,
    theta: &[f64],
    data: &M::Data,
) -> Result<UnitScoreMatrix> {
    check_theta(model, theta)?;
    let p = model.dim();
    let n = model.unit_count(data);
    let mut m = Matrix::zeros(n, p);
    for i in 0..n {
        model.unit_score(theta, data, i, m.row_mut(i));
    }
    UnitScoreMatrix::new(m, model.unit_kind())
}

/// Pairwise log-likelihood `Σᵢ plᵢ(θ)`.
pub fn pairwise_loglik<M: ScoreModel>(model: &M, theta: &[f64], data: &M::Data) -> Result<f64> {
    check_theta(model, theta)?;
    Ok((0..model.unit_count(data))
        .map(|i| model.unit_pl(theta, data, i))
        .sum())
}

/// Gradient of the pairwise log-likelihood, `Σᵢ ∇plᵢ(θ)`.
pub fn pairwise_gradient<M: ScoreModel>(
    model: &M,
    theta: &[f64],
    data: &M::Data,
) -> Result<Vec<f64>> {
    total_score(&PairwiseGradient(model), theta, data)
}

/// Views a model through the gradient of its pairwise log-likelihood, so that
/// fitting yields the maximum pairwise likelihood estimate even when the
/// model's own estimating function is robustified.
#[derive(Debug)]
pub struct PairwiseGradient<'a, M>(pub &'a M);

impl<M: ScoreModel> ScoreModel for PairwiseGradient<'_, M> {
    type Data = M::Data;

    fn param_names(&self) -> Vec<&'static str> {
        self.0.param_names()
    }

    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn coords(&self) -> Vec<Coord> {
        self.0.coords()
    }

    fn in_domain(&self, theta: &[f64]) -> bool {
        self.0.in_domain(theta)
    }

    fn unit_kind(&self) -> UnitKind {
        self.0.unit_kind()
    }

    fn unit_count(&self, data: &M::Data) -> usize {
        self.0.unit_count(data)
    }

    fn unit_score(&self, theta: &[f64], data: &M::Data, i: usize, out: &mut [f64]) {
        self.0.unit_pl_gradient(theta, data, i, out)
    }

    fn unit_pl(&self, theta: &[f64], data: &M::Data, i: usize) -> f64 {
        self.0.unit_pl(theta, data, i)
    }

    fn unit_pl_gradient(&self, theta: &[f64], data: &M::Data, i: usize, out: &mut [f64]) {
        self.0.unit_pl_gradient(theta, data, i, out)
    }

    fn gradient_type(&self) -> bool {
        true
    }

    fn simulate<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Result<M::Data> {
        self.0.simulate(theta, rng)
    }

    fn resample(&self, data: &M::Data, indices: &[usize]) -> M::Data {
        self.0.resample(data, indices)
    }

    fn start(&self, data: &M::Data) -> Vec<f64> {
        self.0.start(data)
    }

    fn restart(&self, data: &M::Data, last: &[f64]) -> Option<Vec<f64>> {
        self.0.restart(data, last)
    }

    fn full_likelihood_ratio(&self, data: &M::Data, theta0: &[f64]) -> Option<Result<f64>> {
        self.0.full_likelihood_ratio(data, theta0)
    }
}
