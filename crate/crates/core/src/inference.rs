//! Estimation and Godambe information.
//!
//! All averages run over the model's units, so `n` below is the number of
//! units (rows, lagged pairs or blocks), never the raw observation count.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::model::{check_theta, total_score_unchecked, unit_scores, ParamVector, ScoreModel, UnitScoreMatrix};
use crate::numerics::{
    central_jacobian, cholesky_spd, newton_system, norm2, norm_inf, Jacobian, Matrix, NewtonOptions, RngStream, SymMatrix,
};

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Bound on [`scaled_score_norm`] at the solution.
    pub tol: f64,
    pub max_iter: usize,
    /// Solve in the model's unconstrained coordinates.
    pub unconstrained: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            unconstrained: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta_hat: ParamVector,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves `Σᵢ sᵢ(θ) = 0` by damped Newton from `start` (or the model's own
/// starting point), falling back once to `ScoreModel::restart`.
pub fn fit_mple<M: ScoreModel>(
    model: &M,
    data: &M::Data,
    start: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let first = match start {
        Some(s) => {
            check_theta(model, s)?;
            s.to_vec()
        }
        None => model.start(data),
    };
    if !model.in_domain(&first) {
        return Err(Error::domain("starting point outside the model domain"));
    }
    match solve_from(model, data, &first, opts) {
        Ok(fit) => Ok(fit),
        Err(err) => {
            let last = match &err {
                Error::NoConvergence { best, .. } => best.clone(),
                _ => first.clone(),
            };
            match model.restart(data, &last) {
                Some(alt) if model.in_domain(&alt) => solve_from(model, data, &alt, opts).map_err(|e2| match e2 {
                    Error::NoConvergence { .. } => e2,
                    _ => err,
                }),
                _ => Err(err),
            }
        }
    }
}

fn solve_from<M: ScoreModel>(model: &M, data: &M::Data, x0: &[f64], opts: &FitOptions) -> Result<FitResult> {
    let coords = model.coords();
    let to_theta = |e: &[f64]| -> Vec<f64> {
        if opts.unconstrained {
            coords.iter().zip(e).map(|(c, v)| c.from_unconstrained(*v)).collect()
        } else {
            e.to_vec()
        }
    };
    let residual = |e: &[f64]| -> Option<Vec<f64>> {
        let theta = to_theta(e);
        if !model.in_domain(&theta) {
            return None;
        }
        let s = standardized_score(model, &theta, data);
        s.iter().all(|v| v.is_finite()).then_some(s)
    };
    let e0: Vec<f64> = if opts.unconstrained {
        coords.iter().zip(x0).map(|(c, v)| c.to_unconstrained(*v)).collect()
    } else {
        x0.to_vec()
    };
    let newton = NewtonOptions {
        tol: opts.tol,
        max_iter: opts.max_iter,
        divergence_bound: if opts.unconstrained { 60.0 } else { f64::INFINITY },
        ..NewtonOptions::default()
    };
    match newton_system(&residual, Jacobian::Numeric, &e0, &newton) {
        Ok(rep) => {
            let (x, res) = polish(&residual, rep.x);
            Ok(FitResult {
                theta_hat: ParamVector::new(model.param_names(), to_theta(&x))?,
                residual_norm: res,
                iterations: rep.iterations,
                converged: true,
            })
        }
        Err(Error::NoConvergence {
            iterations,
            residual,
            best,
        }) => Err(Error::NoConvergence {
            iterations,
            residual,
            best: to_theta(&best),
        }),
        Err(e) => Err(e),
    }
}

/// Extra full Newton steps past the absolute tolerance, while they still
/// shrink the residual. Score components on very different scales (a range
/// parameter near zero, say) otherwise leave the small ones unresolved.
fn polish<F>(f: &F, mut x: Vec<f64>) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let Some(mut fx) = f(&x) else {
        return (x, f64::INFINITY);
    };
    for _ in 0..4 {
        let Some(jac) = central_jacobian(f, &x, None) else { break };
        let Ok(step) = jac.solve(&fx.iter().map(|v| -v).collect::<Vec<_>>()) else { break };
        let trial: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a + d).collect();
        match f(&trial) {
            Some(ft) if norm2(&ft) < 0.5 * norm2(&fx) => {
                x = trial;
                fx = ft;
            }
            _ => break,
        }
    }
    let r = norm_inf(&fx);
    (x, r)
}

/// Uncentered score variability `(1/n) Σᵢ sᵢsᵢᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct JEstimate {
    pub matrix: SymMatrix,
    /// The scores span fewer than `p` directions.
    pub degenerate: bool,
}

pub fn empirical_j(scores: &UnitScoreMatrix) -> JEstimate {
    let n = scores.n_units();
    let p = scores.dim();
    let mut j = Matrix::zeros(p, p);
    for i in 0..n {
        let s = scores.unit(i);
        for a in 0..p {
            for b in 0..=a {
                j[(a, b)] += s[a] * s[b];
            }
        }
    }
    let scale = if n > 0 { 1.0 / n as f64 } else { 0.0 };
    for a in 0..p {
        for b in 0..=a {
            let v = j[(a, b)] * scale;
            j[(a, b)] = v;
            j[(b, a)] = v;
        }
    }
    let matrix = SymMatrix::from_symmetrized(j);
    let degenerate = n < p || cholesky_spd(&matrix).is_err();
    JEstimate { matrix, degenerate }
}

/// `−(1/n) ∂Σᵢsᵢ/∂θᵀ` by central differences. Symmetrized for gradient-type
/// scores, whose exact Jacobian is symmetric.
pub fn empirical_h<M: ScoreModel>(model: &M, theta: &[f64], data: &M::Data) -> Result<Matrix> {
    check_theta(model, theta)?;
    let n = model.unit_count(data).max(1) as f64;
    let f = |t: &[f64]| {
        if !model.in_domain(t) {
            return None;
        }
        Some(total_score_unchecked(model, t, data))
    };
    let jac = central_jacobian(f, theta, None).ok_or_else(|| Error::domain("score not evaluable near theta"))?;
    let h = jac.scaled(-1.0 / n);
    if model.gradient_type() {
        Ok(SymMatrix::from_symmetrized(h).into_matrix())
    } else {
        Ok(h)
    }
}

/// Sandwich `H⁻¹ J H⁻ᵀ`, symmetrized.
pub fn godambe_v(h: &Matrix, j: &SymMatrix) -> Result<SymMatrix> {
    let p = j.order();
    if h.rows() != p || h.cols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: h.rows(),
        });
    }
    let lu = h.lu()?;
    // X = H⁻¹ J, then V = X H⁻ᵀ = (H⁻¹ Xᵀ)ᵀ.
    let mut x = Matrix::zeros(p, p);
    for c in 0..p {
        let col: Vec<f64> = (0..p).map(|r| j[(r, c)]).collect();
        let sol = lu.solve(&col);
        for r in 0..p {
            x[(r, c)] = sol[r];
        }
    }
    let mut v = Matrix::zeros(p, p);
    for r in 0..p {
        let sol = lu.solve(x.row(r));
        for c in 0..p {
            v[(r, c)] = sol[c];
        }
    }
    if !v.is_finite() {
        return Err(Error::SingularJacobian);
    }
    Ok(SymMatrix::from_symmetrized(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Empirical,
    McExpected,
}

/// Elementwise Monte Carlo standard errors of expected matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct McStandardErrors {
    pub h: Matrix,
    pub j: Matrix,
    pub replications: usize,
}

/// `H`, `J` and `V = H⁻¹JH⁻ᵀ` at one parameter point.
///
/// `H` is symmetric for gradient-type scores and a general matrix for
/// bounded estimating functions.
#[derive(Debug, Clone, PartialEq)]
pub struct GodambeMatrices {
    pub h: Matrix,
    pub j: SymMatrix,
    pub v: SymMatrix,
    pub provenance: Provenance,
    pub eval_point: ParamVector,
    pub n_units: usize,
    /// Set when the empirical `J` is rank deficient.
    pub degenerate: bool,
    pub mc_se: Option<McStandardErrors>,
}

impl GodambeMatrices {
    pub fn from_parts(
        h: Matrix,
        j: SymMatrix,
        provenance: Provenance,
        eval_point: ParamVector,
        n_units: usize,
    ) -> Result<Self> {
        let v = godambe_v(&h, &j)?;
        Ok(Self {
            h,
            j,
            v,
            provenance,
            eval_point,
            n_units,
            degenerate: false,
            mc_se: None,
        })
    }

    /// `H` as a symmetric matrix, for quadratic forms and eigenvalues.
    pub fn h_sym(&self) -> SymMatrix {
        SymMatrix::from_symmetrized(self.h.clone())
    }

    /// Matrices of the reparametrized model `θ = θ(ψ)` with Jacobian
    /// `A = ∂θ/∂ψ` at the evaluation point: `H ↦ AᵀHA`, `J ↦ AᵀJA`.
    pub fn reparametrize(&self, a: &Matrix, eval_point: ParamVector) -> Result<Self> {
        let h = a.transpose().matmul(&self.h)?.matmul(a)?;
        let j = self.j.congruence(a)?;
        let mut out = Self::from_parts(h, j, self.provenance, eval_point, self.n_units)?;
        out.degenerate = self.degenerate;
        Ok(out)
    }
}

/// Empirical `H` and `J` at `theta`.
pub fn godambe_empirical<M: ScoreModel>(model: &M, theta: &[f64], data: &M::Data) -> Result<GodambeMatrices> {
    let scores = unit_scores(model, theta, data)?;
    let j = empirical_j(&scores);
    let h = empirical_h(model, theta, data)?;
    let mut g = GodambeMatrices::from_parts(
        h,
        j.matrix,
        Provenance::Empirical,
        ParamVector::new(model.param_names(), theta.to_vec())?,
        scores.n_units(),
    )?;
    g.degenerate = j.degenerate;
    Ok(g)
}

/// Empirical `Ĥ` and `Ĵ` of one simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct McPart {
    pub h: Matrix,
    pub j: Matrix,
    pub n_units: usize,
}

/// Simulates dataset `index` of a Monte Carlo expectation at `theta` and
/// returns its empirical matrices. Dataset `index` always uses
/// `stream.substream(index)`.
pub fn mc_part<M: ScoreModel>(model: &M, theta: &[f64], stream: &RngStream, index: u64) -> Result<McPart> {
    let mut rng = stream.substream(index).rng();
    let data = model.simulate(theta, &mut rng)?;
    let scores = unit_scores(model, theta, &data)?;
    Ok(McPart {
        h: empirical_h(model, theta, &data)?,
        j: empirical_j(&scores).matrix.into_matrix(),
        n_units: scores.n_units(),
    })
}

/// Neumaier-compensated accumulator over matrices of equal shape.
struct MatrixSum {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl MatrixSum {
    fn new(len: usize) -> Self {
        Self {
            sum: vec![0.0; len],
            comp: vec![0.0; len],
        }
    }

    fn add(&mut self, values: &[f64]) {
        for ((s, c), v) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(values) {
            let t = *s + v;
            if s.abs() >= v.abs() {
                *c += (*s - t) + v;
            } else {
                *c += (v - t) + *s;
            }
            *s = t;
        }
    }

    fn total(&self) -> Vec<f64> {
        self.sum.iter().zip(&self.comp).map(|(s, c)| s + c).collect()
    }
}

/// Averages per-dataset matrices into expected `H` and `J`, with
/// elementwise standard errors.
pub fn combine_mc_parts(parts: &[McPart], eval_point: ParamVector) -> Result<GodambeMatrices> {
    let first = parts.first().ok_or_else(|| Error::domain("no Monte Carlo replications"))?;
    let p = first.j.rows();
    let m = parts.len() as f64;
    let mut sh = MatrixSum::new(p * p);
    let mut sj = MatrixSum::new(p * p);
    let mut sh2 = MatrixSum::new(p * p);
    let mut sj2 = MatrixSum::new(p * p);
    for part in parts {
        if part.h.rows() != p || part.j.rows() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: part.j.rows(),
            });
        }
        let h = part.h.as_slice();
        let j = part.j.as_slice();
        sh.add(h);
        sj.add(j);
        sh2.add(&h.iter().map(|v| v * v).collect::<Vec<_>>());
        sj2.add(&j.iter().map(|v| v * v).collect::<Vec<_>>());
    }
    let mean = |s: &MatrixSum| s.total().into_iter().map(|v| v / m).collect::<Vec<_>>();
    let se = |s: &MatrixSum, s2: &MatrixSum| {
        let mu = mean(s);
        let mu2 = mean(s2);
        let denom = if parts.len() > 1 { m - 1.0 } else { 1.0 };
        mu.iter()
            .zip(&mu2)
            .map(|(a, b)| ((b - a * a).max(0.0) * m / denom / m).sqrt())
            .collect::<Vec<_>>()
    };
    let h = Matrix::from_vec(p, p, mean(&sh))?;
    let j = SymMatrix::from_symmetrized(Matrix::from_vec(p, p, mean(&sj))?);
    let mut g = GodambeMatrices::from_parts(h, j, Provenance::McExpected, eval_point, first.n_units)?;
    g.mc_se = Some(McStandardErrors {
        h: Matrix::from_vec(p, p, se(&sh, &sh2))?,
        j: Matrix::from_vec(p, p, se(&sj, &sj2))?,
        replications: parts.len(),
    });
    Ok(g)
}

/// Expected `H` and `J` at `theta`, averaging empirical matrices over `m`
/// datasets simulated from the model.
pub fn expected_matrices_mc<M: ScoreModel>(
    model: &M,
    theta: &[f64],
    m: usize,
    stream: &RngStream,
) -> Result<GodambeMatrices> {
    check_theta(model, theta)?;
    if m == 0 {
        return Err(Error::domain("at least one replication required"));
    }
    let parts = (0..m as u64)
        .map(|i| mc_part(model, theta, stream, i))
        .collect::<Result<Vec<_>>>()?;
    combine_mc_parts(&parts, ParamVector::new(model.param_names(), theta.to_vec())?)
}

/// `Σᵢ sᵢₖ / (n·rmsₖ)` per component, with `rmsₖ` the root mean square of
/// the unit scores. Roots are those of the score, but the size of the
/// residual no longer depends on how each coordinate is scaled.
fn standardized_score<M: ScoreModel>(model: &M, theta: &[f64], data: &M::Data) -> Vec<f64> {
    let p = model.dim();
    let n = model.unit_count(data);
    let mut sum = vec![0.0; p];
    let mut sq = vec![0.0; p];
    let mut s = vec![0.0; p];
    for i in 0..n {
        model.unit_score(theta, data, i, &mut s);
        for k in 0..p {
            sum[k] += s[k];
            sq[k] += s[k] * s[k];
        }
    }
    let n = n.max(1) as f64;
    sum.iter()
        .zip(&sq)
        .map(|(t, q)| if *q > 0.0 { t / (n * (q / n).sqrt()) } else { *t })
        .collect()
}

/// `‖Σᵢ sᵢ(θ)‖∞ / n` with each component in units of its unit-score root
/// mean square; the quantity `fit_mple` drives below its tolerance.
pub fn scaled_score_norm<M: ScoreModel>(model: &M, theta: &[f64], data: &M::Data) -> Result<f64> {
    check_theta(model, theta)?;
    Ok(norm_inf(&standardized_score(model, theta, data)))
}
