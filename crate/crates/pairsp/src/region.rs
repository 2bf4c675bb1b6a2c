//! Confidence regions for `(σ², ρ)` in the equicorrelated normal model with
//! known mean, evaluated on a grid.

use std::io::Write;

use pairsp_core::classic::{classic_suite, StatKind};
use pairsp_core::inference::{fit_mple, godambe_empirical, FitOptions};
use pairsp_core::model::{RowSample, ScoreModel};
use pairsp_core::models::MvnModel;
use pairsp_core::saddlepoint::stat_pw_sp;
use pairsp_core::Error;

/// Evenly spaced values `lo, …, hi`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionPoint {
    pub statistic: String,
    pub sigma2: f64,
    pub rho: f64,
    /// `None` when the statistic is undefined at this point.
    pub p_value: Option<f64>,
    pub inside: bool,
    /// Inside, with a grid neighbour outside or on the edge of the grid.
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionTable {
    pub level: f64,
    pub points: Vec<RegionPoint>,
}

/// Evaluates the classic statistics and the saddlepoint statistic at every
/// `(σ², ρ)` of the grid, holding `μ = mu`.
pub fn confidence_regions(
    data: &RowSample,
    mu: f64,
    sigma2: &[f64],
    rho: &[f64],
    level: f64,
) -> Result<RegionTable, Error> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain("level must lie in (0, 1)".into()));
    }
    let model = MvnModel::with_fixed(data.n(), data.q(), [Some(mu), None, None])?;
    let fit = fit_mple(&model, data, None, &FitOptions::default())?;
    let g_fit = godambe_empirical(&model, fit.theta_hat.values(), data)?;
    let alpha = 1.0 - level;
    let names: Vec<String> = StatKind::CLASSIC
        .iter()
        .map(|k| k.name().to_string())
        .chain(["sp".to_string()])
        .collect();
    // p[s][i][j] for statistic s at (sigma2[i], rho[j])
    let mut p = vec![vec![vec![None; rho.len()]; sigma2.len()]; names.len()];
    for (i, s2) in sigma2.iter().enumerate() {
        for (j, r) in rho.iter().enumerate() {
            let th0 = [*s2, *r];
            if !model.in_domain(&th0) {
                continue;
            }
            if let Ok(g_null) = godambe_empirical(&model, &th0, data) {
                if let Ok(all) = classic_suite(&model, data, &th0, &fit, &g_null, &g_fit) {
                    for (k, o) in all.into_iter().enumerate() {
                        p[k][i][j] = o.ok().and_then(|o| o.p_value);
                    }
                }
            }
            p[names.len() - 1][i][j] = stat_pw_sp(&model, data, &th0, &fit)
                .ok()
                .and_then(|o| o.p_value);
        }
    }
    let mut points = Vec::new();
    for (k, name) in names.iter().enumerate() {
        let inside = |i: usize, j: usize| p[k][i][j].is_some_and(|v| v > alpha);
        for (i, s2) in sigma2.iter().enumerate() {
            for (j, r) in rho.iter().enumerate() {
                let ins = inside(i, j);
                let edge = i == 0 || j == 0 || i + 1 == sigma2.len() || j + 1 == rho.len();
                let boundary = ins
                    && (edge || !inside(i - 1, j) || !inside(i + 1, j) || !inside(i, j - 1) || !inside(i, j + 1));
                points.push(RegionPoint {
                    statistic: name.clone(),
                    sigma2: *s2,
                    rho: *r,
                    p_value: p[k][i][j],
                    inside: ins,
                    boundary,
                });
            }
        }
    }
    Ok(RegionTable { level, points })
}

impl RegionTable {
    /// Writes the whole grid, or only the boundary points.
    pub fn write_csv<W: Write>(&self, out: W, boundary_only: bool) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["statistic", "sigma2", "rho", "p_value", "inside", "boundary"])?;
        for pt in self.points.iter().filter(|pt| !boundary_only || pt.boundary) {
            w.write_record([
                pt.statistic.clone(),
                pt.sigma2.to_string(),
                pt.rho.to_string(),
                pt.p_value.map_or_else(|| "NA".into(), |v| format!("{v:.6}")),
                (pt.inside as u8).to_string(),
                (pt.boundary as u8).to_string(),
            ])?;
        }
        w.flush()
    }
}
