//! Models in alternative coordinates `θ = θ(ψ)`.
//!
//! Unit scores transform as `Aᵀ s(θ)` with `A = ∂θ/∂ψ`, which is the chain
//! rule for gradient-type scores and the natural transport of a general
//! estimating function.

use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Coord, ScoreModel, UnitKind};
use crate::numerics::{Lu, Matrix};

pub trait ParamMap: Sync {
    /// `θ(ψ)`.
    fn forward(&self, psi: &[f64]) -> Vec<f64>;

    /// `ψ(θ)`, or `None` outside the image of the map.
    fn inverse(&self, theta: &[f64]) -> Option<Vec<f64>>;

    /// `∂θ/∂ψ`, rows indexed by `θ`.
    fn jacobian(&self, psi: &[f64]) -> Matrix;
}

/// `θ = Mψ + c` with invertible `M`.
#[derive(Debug, Clone)]
pub struct Affine {
    m: Matrix,
    c: Vec<f64>,
    lu: Lu,
}

impl Affine {
    pub fn new(m: Matrix, c: Vec<f64>) -> Result<Self> {
        if !m.is_square() || m.rows() != c.len() {
            return Err(Error::DimensionMismatch {
                expected: c.len(),
                got: m.rows(),
            });
        }
        let lu = m.lu()?;
        Ok(Self { m, c, lu })
    }
}

impl ParamMap for Affine {
    fn forward(&self, psi: &[f64]) -> Vec<f64> {
        self.m.matvec(psi).iter().zip(&self.c).map(|(a, b)| a + b).collect()
    }

    fn inverse(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let shifted: Vec<f64> = theta.iter().zip(&self.c).map(|(a, b)| a - b).collect();
        Some(self.lu.solve(&shifted))
    }

    fn jacobian(&self, _psi: &[f64]) -> Matrix {
        self.m.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Identity,
    /// `θ = exp ψ`.
    Log,
    /// `θ = tanh ψ`.
    Atanh,
}

/// Coordinate-wise links.
#[derive(Debug, Clone, PartialEq)]
pub struct Componentwise(pub Vec<Link>);

impl ParamMap for Componentwise {
    fn forward(&self, psi: &[f64]) -> Vec<f64> {
        self.0
            .iter()
            .zip(psi)
            .map(|(l, x)| match l {
                Link::Identity => *x,
                Link::Log => x.exp(),
                Link::Atanh => x.tanh(),
            })
            .collect()
    }

    fn inverse(&self, theta: &[f64]) -> Option<Vec<f64>> {
        self.0
            .iter()
            .zip(theta)
            .map(|(l, t)| match l {
                Link::Identity => Some(*t),
                Link::Log if *t > 0.0 => Some(t.ln()),
                Link::Atanh if t.abs() < 1.0 => Some(t.atanh()),
                _ => None,
            })
            .collect()
    }

    fn jacobian(&self, psi: &[f64]) -> Matrix {
        let d: Vec<f64> = self
            .0
            .iter()
            .zip(psi)
            .map(|(l, x)| match l {
                Link::Identity => 1.0,
                Link::Log => x.exp(),
                Link::Atanh => 1.0 - x.tanh().powi(2),
            })
            .collect();
        Matrix::diag(&d)
    }
}

/// `model` seen through `map`. Parameter names are those of the original
/// coordinates.
#[derive(Debug, Clone)]
pub struct Reparametrized<'a, M, P> {
    pub model: &'a M,
    pub map: P,
}

impl<'a, M: ScoreModel, P: ParamMap> Reparametrized<'a, M, P> {
    pub fn new(model: &'a M, map: P) -> Self {
        Self { model, map }
    }

    fn pull_back(&self, psi: &[f64], s: &mut [f64]) {
        let a = self.map.jacobian(psi);
        let t = a.transpose().matvec(s);
        s.copy_from_slice(&t);
    }
}

impl<M: ScoreModel, P: ParamMap> ScoreModel for Reparametrized<'_, M, P> {
    type Data = M::Data;

    fn param_names(&self) -> Vec<&'static str> {
        self.model.param_names()
    }

    fn coords(&self) -> Vec<Coord> {
        alloc::vec![Coord::Free; self.model.dim()]
    }

    fn in_domain(&self, psi: &[f64]) -> bool {
        psi.len() == self.model.dim() && psi.iter().all(|v| v.is_finite()) && self.model.in_domain(&self.map.forward(psi))
    }

    fn unit_kind(&self) -> UnitKind {
        self.model.unit_kind()
    }

    fn unit_count(&self, data: &M::Data) -> usize {
        self.model.unit_count(data)
    }

    fn unit_score(&self, psi: &[f64], data: &M::Data, i: usize, out: &mut [f64]) {
        self.model.unit_score(&self.map.forward(psi), data, i, out);
        self.pull_back(psi, out);
    }

    fn unit_pl(&self, psi: &[f64], data: &M::Data, i: usize) -> f64 {
        self.model.unit_pl(&self.map.forward(psi), data, i)
    }

    fn unit_pl_gradient(&self, psi: &[f64], data: &M::Data, i: usize, out: &mut [f64]) {
        self.model.unit_pl_gradient(&self.map.forward(psi), data, i, out);
        self.pull_back(psi, out);
    }

    fn gradient_type(&self) -> bool {
        self.model.gradient_type()
    }

    fn simulate<R: Rng + ?Sized>(&self, psi: &[f64], rng: &mut R) -> Result<M::Data> {
        self.model.simulate(&self.map.forward(psi), rng)
    }

    fn resample(&self, data: &M::Data, indices: &[usize]) -> M::Data {
        self.model.resample(data, indices)
    }

    fn start(&self, data: &M::Data) -> Vec<f64> {
        let theta = self.model.start(data);
        self.map
            .inverse(&theta)
            .unwrap_or_else(|| alloc::vec![0.0; theta.len()])
    }

    fn restart(&self, data: &M::Data, last: &[f64]) -> Option<Vec<f64>> {
        let theta = self.model.restart(data, &self.map.forward(last))?;
        self.map.inverse(&theta)
    }

    fn full_likelihood_ratio(&self, data: &M::Data, psi0: &[f64]) -> Option<Result<f64>> {
        self.model.full_likelihood_ratio(data, &self.map.forward(psi0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_round_trip() {
        let a = Affine::new(Matrix::from_rows(&[[2.0, 1.0], [0.0, 3.0]]).unwrap(), alloc::vec![1.0, -1.0]).unwrap();
        let psi = [0.25, -0.5];
        let back = a.inverse(&a.forward(&psi)).unwrap();
        assert!((back[0] - psi[0]).abs() < 1e-15 && (back[1] - psi[1]).abs() < 1e-15);
        assert!(Affine::new(Matrix::zeros(2, 2), alloc::vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn links_invert() {
        let m = Componentwise(alloc::vec![Link::Identity, Link::Log, Link::Atanh]);
        let theta = [0.3, 2.0, -0.4];
        let psi = m.inverse(&theta).unwrap();
        let t = m.forward(&psi);
        assert!(t.iter().zip(&theta).all(|(a, b)| (a - b).abs() < 1e-14));
        assert!(m.inverse(&[0.0, -1.0, 0.0]).is_none());
        let j = m.jacobian(&psi);
        assert!((j[(1, 1)] - 2.0).abs() < 1e-14 && (j[(2, 2)] - 0.84).abs() < 1e-14);
    }
}
