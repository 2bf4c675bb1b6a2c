//! Monte Carlo coverage experiments.
//!
//! Replication `r` draws its dataset from `RngStream::new(seed, r)` and its
//! bootstrap and fit-level Monte Carlo draws from substreams of that stream,
//! so results do not depend on the number of worker threads. Expected
//! matrices at the null are shared by all replications and come from the
//! stream with index `u64::MAX`.

use std::io::Write;
use std::time::{Duration, Instant};

use pairsp_core::classic::{classic_test, StatKind};
use pairsp_core::inference::{
    combine_mc_parts, expected_matrices_mc, fit_mple, godambe_empirical, mc_part, FitOptions, FitResult,
    GodambeMatrices, Provenance,
};
use pairsp_core::model::{pairwise_loglik, ParamVector, PairwiseGradient, ScoreModel};
use pairsp_core::models::{Ar1Model, GeoModel, GeoParams, MvnModel};
use pairsp_core::numerics::{chisq_quantile, chisq_tail, RngStream};
use pairsp_core::saddlepoint::{bootstrap_pw_sp, stat_pw_sp, BootstrapOptions};
use pairsp_core::Error;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, ModelKind, StatColumn};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] Error),
    #[error("experiment unstable: {statistic} failed in {failed} of {total} replications")]
    ExperimentUnstable {
        statistic: String,
        failed: usize,
        total: usize,
    },
    #[error("unknown statistic {0:?} for this experiment")]
    UnknownStatistic(String),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

/// Result of one statistic in one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Value { value: f64, p_value: f64 },
    /// Zero lies outside the convex hull of the unit scores.
    Untestable,
    /// Simulation, fitting or a matrix computation failed.
    Failed,
}

fn classify(e: &Error) -> Outcome {
    match e {
        Error::HullViolation => Outcome::Untestable,
        _ => Outcome::Failed,
    }
}

fn chi2(value: f64, df: usize) -> Outcome {
    match chisq_tail(value.max(0.0), df) {
        Ok(p) => Outcome::Value { value, p_value: p },
        Err(_) => Outcome::Failed,
    }
}

/// Per-replication outcomes of every requested statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub config: ExperimentConfig,
    pub columns: Vec<StatColumn>,
    pub df: usize,
    /// `outcomes[r][k]` is column `k` in replication `r`.
    pub outcomes: Vec<Vec<Outcome>>,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ColumnCounts {
    pub failed: usize,
    pub untestable: usize,
}

impl SimulationRun {
    pub fn column_index(&self, name: &str) -> Result<usize, HarnessError> {
        self.columns
            .iter()
            .position(|c| c.name() == name)
            .ok_or_else(|| HarnessError::UnknownStatistic(name.into()))
    }

    pub fn counts(&self, k: usize) -> ColumnCounts {
        let mut c = ColumnCounts::default();
        for rep in &self.outcomes {
            match rep[k] {
                Outcome::Failed => c.failed += 1,
                Outcome::Untestable => c.untestable += 1,
                Outcome::Value { .. } => {}
            }
        }
        c
    }

    /// `(value, p_value)` of the successful replications of column `k`.
    pub fn values(&self, k: usize) -> Vec<(f64, f64)> {
        self.outcomes
            .iter()
            .filter_map(|rep| match rep[k] {
                Outcome::Value { value, p_value } => Some((value, p_value)),
                _ => None,
            })
            .collect()
    }

    /// Fails when a column has more numerical failures than the configured
    /// fraction. Untestable samples are reported but not capped.
    pub fn check_stable(&self) -> Result<(), HarnessError> {
        let total = self.outcomes.len();
        for (k, col) in self.columns.iter().enumerate() {
            let failed = self.counts(k).failed;
            if failed as f64 > self.config.max_failure_fraction * total as f64 {
                return Err(HarnessError::ExperimentUnstable {
                    statistic: col.name(),
                    failed,
                    total,
                });
            }
        }
        Ok(())
    }
}

struct Context<'a, M: ScoreModel> {
    model: &'a M,
    theta0: Vec<f64>,
    seed: u64,
    columns: &'a [StatColumn],
    null_expected: Option<GodambeMatrices>,
    mc_fit: usize,
    boot: BootstrapOptions,
    fit: FitOptions,
}

fn needs(columns: &[StatColumn], prov: Provenance, kinds: &[StatKind]) -> bool {
    columns
        .iter()
        .any(|c| matches!(c, StatColumn::Classic(k, p) if *p == prov && kinds.contains(k)))
}

const NULL_KINDS: [StatKind; 3] = [StatKind::Score, StatKind::Moment, StatKind::Inv];
const FIT_KINDS: [StatKind; 2] = [StatKind::Wald, StatKind::Cb];

impl<M: ScoreModel> Context<'_, M> {
    fn replicate(&self, r: u64) -> Vec<Outcome> {
        let base = RngStream::new(self.seed, r);
        let data = match self.model.simulate(&self.theta0, &mut base.rng()) {
            Ok(d) => d,
            Err(_) => return vec![Outcome::Failed; self.columns.len()],
        };
        let p = self.model.dim();
        let th0 = &self.theta0[..];
        let pg = PairwiseGradient(self.model);
        let any_classic = self.columns.iter().any(|c| matches!(c, StatColumn::Classic(..)));
        let classic_fit = any_classic.then(|| fit_mple(&pg, &data, None, &self.fit));

        let cfit = classic_fit.as_ref().and_then(|f| f.as_ref().ok());
        let g_null = (needs(self.columns, Provenance::Empirical, &NULL_KINDS))
            .then(|| godambe_empirical(&pg, th0, &data))
            .and_then(Result::ok);
        let g_fit = match cfit {
            Some(f) if needs(self.columns, Provenance::Empirical, &FIT_KINDS) => {
                godambe_empirical(&pg, f.theta_hat.values(), &data).ok()
            }
            _ => None,
        };
        let g_fit_e = match cfit {
            Some(f) if needs(self.columns, Provenance::McExpected, &FIT_KINDS) => {
                expected_matrices_mc(&pg, f.theta_hat.values(), self.mc_fit, &base.substream(2)).ok()
            }
            _ => None,
        };

        let robust_fit = if !self.columns.iter().any(|c| matches!(c, StatColumn::Sp | StatColumn::SpBoot)) {
            None
        } else if self.model.gradient_type() && classic_fit.is_some() {
            classic_fit.clone()
        } else {
            Some(fit_mple(self.model, &data, None, &self.fit))
        };

        let sp = robust_fit.as_ref().map(|f| match f {
            Ok(f) => stat_pw_sp(self.model, &data, th0, f).map_err(|e| classify(&e)),
            Err(e) => Err(classify(e)),
        });

        self.columns
            .iter()
            .map(|col| match col {
                StatColumn::Classic(StatKind::Pw, _) => match cfit {
                    Some(f) => pw_outcome(&pg, &data, th0, f, p),
                    None => Outcome::Failed,
                },
                StatColumn::Classic(kind, prov) => {
                    let Some(f) = cfit else { return Outcome::Failed };
                    let (gn, gf) = match prov {
                        Provenance::Empirical => (g_null.as_ref(), g_fit.as_ref()),
                        Provenance::McExpected => (self.null_expected.as_ref(), g_fit_e.as_ref()),
                    };
                    // Each statistic reads only one of the two matrix sets.
                    let (gn, gf) = if NULL_KINDS.contains(kind) { (gn, gn) } else { (gf, gf) };
                    match (gn, gf) {
                        (Some(gn), Some(gf)) => match classic_test(*kind, &pg, &data, th0, f, gn, gf) {
                            Ok(o) => o
                                .p_value
                                .map(|pv| Outcome::Value {
                                    value: o.value,
                                    p_value: pv,
                                })
                                .unwrap_or(Outcome::Failed),
                            Err(e) => classify(&e),
                        },
                        _ => Outcome::Failed,
                    }
                }
                StatColumn::Sp => match &sp {
                    Some(Ok(o)) => chi2(o.value, p),
                    Some(Err(o)) => *o,
                    None => Outcome::Failed,
                },
                StatColumn::SpBoot => match (&sp, robust_fit.as_ref()) {
                    (Some(Ok(_)), Some(Ok(f))) => {
                        match bootstrap_pw_sp(self.model, &data, th0, f, &self.boot, &base.substream(1)) {
                            Ok((o, s)) => Outcome::Value {
                                value: o.value,
                                p_value: s.p_value,
                            },
                            Err(e) => classify(&e),
                        }
                    }
                    (Some(Err(o)), _) => *o,
                    _ => Outcome::Failed,
                },
                StatColumn::FullLr => match self.model.full_likelihood_ratio(&data, th0) {
                    Some(Ok(w)) => chi2(w, p),
                    _ => Outcome::Failed,
                },
            })
            .collect()
    }
}

fn pw_outcome<M: ScoreModel>(model: &M, data: &M::Data, th0: &[f64], fit: &FitResult, p: usize) -> Outcome {
    let pl = |t: &[f64]| pairwise_loglik(model, t, data);
    match (pl(fit.theta_hat.values()), pl(th0)) {
        (Ok(a), Ok(b)) => chi2((2.0 * (a - b)).max(0.0), p),
        _ => Outcome::Failed,
    }
}

/// Expected matrices at `theta`, averaged over datasets simulated in
/// parallel. Dataset `i` uses `stream.substream(i)`, so the average is the
/// same as the sequential one.
pub fn expected_matrices_parallel<M: ScoreModel>(
    model: &M,
    theta: &[f64],
    m: usize,
    stream: &RngStream,
) -> Result<GodambeMatrices, Error> {
    let parts = (0..m as u64)
        .into_par_iter()
        .map(|i| mc_part(model, theta, stream, i))
        .collect::<Result<Vec<_>, _>>()?;
    combine_mc_parts(&parts, ParamVector::new(model.param_names(), theta.to_vec())?)
}

fn run_model<M: ScoreModel>(
    model: &M,
    cfg: &ExperimentConfig,
    columns: &[StatColumn],
) -> Result<Vec<Vec<Outcome>>, HarnessError> {
    let theta0 = cfg.theta()?;
    let any_expected_null = columns.iter().any(
        |c| matches!(c, StatColumn::Classic(k, Provenance::McExpected) if NULL_KINDS.contains(k)),
    );
    let null_expected = if any_expected_null {
        Some(expected_matrices_parallel(
            &PairwiseGradient(model),
            &theta0,
            cfg.mc_replications,
            &RngStream::new(cfg.master_seed, u64::MAX),
        )?)
    } else {
        None
    };
    let fit = FitOptions::default();
    let ctx = Context {
        model,
        theta0,
        seed: cfg.master_seed,
        columns,
        null_expected,
        mc_fit: cfg.mc_fit_replications.max(1),
        boot: BootstrapOptions {
            replicates: cfg.bootstrap_b,
            max_failure_fraction: cfg.bootstrap_max_failure_fraction,
            fit,
        },
        fit,
    };
    Ok((0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| ctx.replicate(r))
        .collect())
}

/// Runs every replication of `cfg` on `threads` workers (all cores when
/// `None`).
pub fn simulate(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<SimulationRun, HarnessError> {
    cfg.validate()?;
    let columns = cfg.columns()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let start = Instant::now();
    let theta = cfg.theta()?;
    let outcomes = pool.install(|| -> Result<_, HarnessError> {
        match cfg.model {
            ModelKind::Mvn => {
                let model = MvnModel::new(cfg.shape.n.unwrap_or(1), cfg.shape.q)?;
                run_model(&model, cfg, &columns)
            }
            ModelKind::Ar1 => {
                let model = Ar1Model::new(cfg.shape.q, cfg.robust_tuning()?, cfg.contamination_spec()?)?;
                run_model(&model, cfg, &columns)
            }
            ModelKind::Geostat => {
                let params = GeoParams::new(theta[0], theta[1]);
                let model = GeoModel::with_sampler(cfg.shape.q, cfg.block_l()?, cfg.robust_tuning()?, &params)?;
                run_model(&model, cfg, &columns)
            }
        }
    })?;
    Ok(SimulationRun {
        config: cfg.clone(),
        df: theta.len(),
        columns,
        outcomes,
        wall_time: start.elapsed(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub statistic: String,
    pub level: f64,
    pub coverage: f64,
    pub mc_se: f64,
    /// Replications excluded from the denominator.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
    pub config_echo: String,
    pub wall_time: Duration,
}

/// Coverage of every column at every configured level. A replication covers
/// at level `1 − α` when its p-value exceeds `α`.
pub fn coverage_report(run: &SimulationRun) -> CoverageReport {
    let mut rows = Vec::new();
    for (k, col) in run.columns.iter().enumerate() {
        let vals = run.values(k);
        let c = run.counts(k);
        let n = vals.len();
        for &level in &run.config.levels {
            let alpha = 1.0 - level;
            let (coverage, mc_se) = if n == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let cov = vals.iter().filter(|(_, p)| *p > alpha).count() as f64 / n as f64;
                (cov, (cov * (1.0 - cov) / n as f64).sqrt())
            };
            rows.push(CoverageRow {
                statistic: col.name(),
                level,
                coverage,
                mc_se,
                failures: c.failed + c.untestable,
            });
        }
    }
    CoverageReport {
        rows,
        config_echo: run.config.echo(),
        wall_time: run.wall_time,
    }
}

pub fn run_coverage(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<CoverageReport, HarnessError> {
    let run = simulate(cfg, threads)?;
    run.check_stable()?;
    Ok(coverage_report(&run))
}

impl CoverageReport {
    pub fn row(&self, statistic: &str, level: f64) -> Option<&CoverageRow> {
        self.rows
            .iter()
            .find(|r| r.statistic == statistic && (r.level - level).abs() < 1e-12)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv_writer(out, &self.config_echo)?;
        w.write_record(["statistic", "level", "coverage", "mc_se", "failures"])?;
        for r in &self.rows {
            w.write_record([
                r.statistic.clone(),
                r.level.to_string(),
                fmt(r.coverage),
                fmt(r.mc_se),
                r.failures.to_string(),
            ])?;
        }
        w.flush()
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

fn csv_writer<W: Write>(mut out: W, echo: &str) -> std::io::Result<csv::Writer<W>> {
    writeln!(out, "# config={echo}")?;
    Ok(csv::Writer::from_writer(out))
}

/// Sorted statistic values against `χ²_p` quantiles at `(i − ½)/R`.
#[derive(Debug, Clone, PartialEq)]
pub struct QqTable {
    pub statistic: String,
    pub points: Vec<(f64, f64)>,
    pub config_echo: String,
}

pub fn qq_points(values: &[f64], df: usize) -> Result<Vec<(f64, f64)>, Error> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let r = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, x)| Ok((*x, chisq_quantile((i as f64 + 0.5) / r, df)?)))
        .collect()
}

pub fn qq_table(run: &SimulationRun, statistic: &str) -> Result<QqTable, HarnessError> {
    let k = run.column_index(statistic)?;
    let vals: Vec<f64> = run.values(k).into_iter().map(|(v, _)| v).collect();
    Ok(QqTable {
        statistic: statistic.into(),
        points: qq_points(&vals, run.df)?,
        config_echo: run.config.echo(),
    })
}

pub fn emit_qq_data(cfg: &ExperimentConfig, statistic: &str, threads: Option<usize>) -> Result<QqTable, HarnessError> {
    let run = simulate(cfg, threads)?;
    run.check_stable()?;
    qq_table(&run, statistic)
}

impl QqTable {
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv_writer(out, &self.config_echo)?;
        w.write_record(["statistic", "empirical", "theoretical"])?;
        for (e, t) in &self.points {
            w.write_record([self.statistic.clone(), fmt(*e), fmt(*t)])?;
        }
        w.flush()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeRow {
    pub alpha: f64,
    pub size: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeTable {
    pub statistic: String,
    pub rows: Vec<SizeRow>,
    pub failures: usize,
    pub config_echo: String,
}

/// Rejection rate `#{p ≤ α}/R` and its relative error `(size − α)/α`.
pub fn size_rows(p_values: &[f64], alphas: &[f64]) -> Vec<SizeRow> {
    let n = p_values.len() as f64;
    alphas
        .iter()
        .map(|&alpha| {
            let size = p_values.iter().filter(|p| **p <= alpha).count() as f64 / n;
            SizeRow {
                alpha,
                size,
                relative_error: (size - alpha) / alpha,
            }
        })
        .collect()
}

pub fn size_table(run: &SimulationRun, statistic: &str, alphas: &[f64]) -> Result<SizeTable, HarnessError> {
    if alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(ConfigError::Invalid("alpha values must lie in (0, 1)".into()).into());
    }
    let k = run.column_index(statistic)?;
    let ps: Vec<f64> = run.values(k).into_iter().map(|(_, p)| p).collect();
    let c = run.counts(k);
    Ok(SizeTable {
        statistic: statistic.into(),
        rows: size_rows(&ps, alphas),
        failures: c.failed + c.untestable,
        config_echo: run.config.echo(),
    })
}

pub fn emit_size_and_relerr(
    cfg: &ExperimentConfig,
    statistic: &str,
    alphas: &[f64],
    threads: Option<usize>,
) -> Result<SizeTable, HarnessError> {
    let run = simulate(cfg, threads)?;
    run.check_stable()?;
    size_table(&run, statistic, alphas)
}

impl SizeTable {
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv_writer(out, &self.config_echo)?;
        w.write_record(["statistic", "alpha", "size", "relative_error", "failures"])?;
        for r in &self.rows {
            w.write_record([
                self.statistic.clone(),
                r.alpha.to_string(),
                fmt(r.size),
                fmt(r.relative_error),
                self.failures.to_string(),
            ])?;
        }
        w.flush()
    }
}
