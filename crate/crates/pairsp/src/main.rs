use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pairsp::config::{ConfigError, ExperimentConfig, ModelKind};
use pairsp::harness::{self, HarnessError};
use pairsp::io::{load_dataset, IoError};
use pairsp::region::{confidence_regions, linspace};
use pairsp_core::classic::{classic_test, StatKind};
use pairsp_core::inference::{fit_mple, godambe_empirical, FitOptions};
use pairsp_core::model::{Dataset, PairwiseGradient, ScoreModel};
use pairsp_core::models::{default_block_l, Ar1Data, Ar1Model, ContaminationSpec, GeoModel, MvnModel, RobustTuning};
use pairsp_core::numerics::RngStream;
use pairsp_core::saddlepoint::{bootstrap_pw_sp, stat_pw_sp, BootstrapOptions};

/// Pairwise likelihood inference and saddlepoint tests.
#[derive(Debug, Parser)]
#[command(name = "pairsp", version)]
struct Cli {
    /// Master seed; overrides the seed of a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model to a data file and print estimates with sandwich standard errors.
    Estimate(DataArgs),
    /// Evaluate every statistic at a null point.
    Test {
        #[command(flatten)]
        data: DataArgs,
        /// Null point, e.g. `mu=0,sigma2=1,rho=0.5`.
        #[arg(long)]
        null: String,
        /// Also calibrate the saddlepoint statistic with this many tilted-bootstrap resamples.
        #[arg(long)]
        bootstrap: Option<usize>,
    },
    /// Coverage table of a simulation experiment.
    Coverage(ConfigArgs),
    /// Q-Q plot data for one statistic.
    Qq {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        statistic: String,
    },
    /// Actual size and relative error against nominal size.
    Sizecurve {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        statistic: String,
        /// Comma-separated nominal sizes.
        #[arg(long, value_delimiter = ',', default_values_t = default_alphas())]
        alphas: Vec<f64>,
    },
    /// Grid evaluation of (sigma2, rho) confidence regions for mvn data with known mean.
    Region {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        /// Grid `lo:hi:count` for sigma2.
        #[arg(long, default_value = "0.2:3:40")]
        sigma2: String,
        /// Grid `lo:hi:count` for rho.
        #[arg(long, default_value = "-0.03:0.95:40")]
        rho: String,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Emit only boundary points.
        #[arg(long)]
        boundary: bool,
    },
}

fn default_alphas() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 100.0).collect()
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    data: PathBuf,
    /// Robust tuning `a,b,c` for ar1 and geostat (`inf` for unbounded).
    #[arg(long)]
    tuning: Option<String>,
    /// Block side parameter `l` for geostat.
    #[arg(long)]
    block_l: Option<usize>,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
}

/// Bad input rather than a failed computation.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(h) = cause.downcast_ref::<HarnessError>() {
            return match h {
                HarnessError::Config(_) | HarnessError::UnknownStatistic(_) => 2,
                _ => 1,
            };
        }
        if cause.is::<UsageError>() || cause.is::<ConfigError>() || cause.is::<IoError>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn load_config(args: &ConfigArgs, seed: Option<u64>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| usage(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Estimate(d) => {
            let mut out = output(&cli.out)?;
            with_model(d, None, |m| m.estimate(&mut out))?;
            out.flush()?;
        }
        Command::Test { data, null, bootstrap } => {
            let kind: ModelKind = data.model.parse()?;
            let null = parse_null(kind, null)?;
            let mut out = output(&cli.out)?;
            let seed = cli.seed.unwrap_or(0);
            with_model(data, Some(&null), |m| m.test(&null, *bootstrap, seed, &mut out))?;
            out.flush()?;
        }
        Command::Coverage(c) => {
            let cfg = load_config(c, cli.seed)?;
            let report = harness::run_coverage(&cfg, cli.threads)?;
            eprintln!("wall time {:.1?}", report.wall_time);
            let mut out = output(&cli.out)?;
            report.write_csv(&mut out)?;
        }
        Command::Qq { config, statistic } => {
            let cfg = load_config(config, cli.seed)?;
            let table = harness::emit_qq_data(&cfg, statistic, cli.threads)?;
            table.write_csv(output(&cli.out)?)?;
        }
        Command::Sizecurve {
            config,
            statistic,
            alphas,
        } => {
            let cfg = load_config(config, cli.seed)?;
            let table = harness::emit_size_and_relerr(&cfg, statistic, alphas, cli.threads)?;
            table.write_csv(output(&cli.out)?)?;
        }
        Command::Region {
            data,
            mu,
            sigma2,
            rho,
            level,
            boundary,
        } => {
            let Dataset::Rows(rows) = load_dataset(data, ModelKind::Mvn)? else {
                bail!("expected mvn rows");
            };
            let table = confidence_regions(&rows, *mu, &parse_grid(sigma2)?, &parse_grid(rho)?, *level)?;
            table.write_csv(output(&cli.out)?, *boundary)?;
        }
    }
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || usage(format!("grid {spec:?} is not lo:hi:count"));
    let [lo, hi, n] = parts[..] else { return Err(bad()) };
    let (lo, hi): (f64, f64) = (lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?);
    let n: usize = n.parse().map_err(|_| bad())?;
    if !(lo < hi) || n < 2 {
        return Err(bad());
    }
    Ok(linspace(lo, hi, n))
}

fn parse_null(kind: ModelKind, spec: &str) -> Result<Vec<f64>> {
    let mut map = BTreeMap::new();
    for item in spec.split(',').filter(|s| !s.trim().is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| usage(format!("null entry {item:?} is not name=value")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| usage(format!("null value {v:?} is not a number")))?;
        if !kind.param_names().contains(&k.trim()) {
            return Err(usage(format!("unknown parameter {k:?} for {kind}")));
        }
        map.insert(k.trim().to_string(), v);
    }
    kind.param_names()
        .iter()
        .map(|n| map.get(*n).copied().ok_or_else(|| usage(format!("null lacks {n}"))))
        .collect()
}

fn parse_tuning(spec: Option<&str>) -> Result<RobustTuning> {
    let Some(spec) = spec else {
        return Ok(RobustTuning::classical());
    };
    let vals: Vec<f64> = spec
        .split(',')
        .map(|s| match s.trim() {
            "inf" => Ok(f64::INFINITY),
            t => t.parse().map_err(|_| usage(format!("bad tuning value {t:?}"))),
        })
        .collect::<Result<_>>()?;
    match vals[..] {
        [k] => RobustTuning::uniform(k),
        [a, b, c] => RobustTuning::new(a, b, c),
        _ => return Err(usage("tuning takes one value or three")),
    }
    .map_err(|e| usage(e.to_string()))
}

/// A model with its dataset, ready for the per-file commands.
struct Loaded<'a, M: ScoreModel> {
    model: &'a M,
    data: M::Data,
}

fn with_model(args: &DataArgs, null: Option<&[f64]>, f: impl FnOnce(&dyn Commands) -> Result<()>) -> Result<()> {
    let kind: ModelKind = args.model.parse()?;
    let tuning = parse_tuning(args.tuning.as_deref())?;
    let ds = load_dataset(Path::new(&args.data), kind)?;
    match (kind, ds) {
        (ModelKind::Mvn, Dataset::Rows(rows)) => {
            if args.tuning.is_some() {
                return Err(usage("tuning does not apply to mvn"));
            }
            let model = MvnModel::new(rows.n(), rows.q()).map_err(|e| usage(e.to_string()))?;
            f(&Loaded { model: &model, data: rows })
        }
        (ModelKind::Ar1, Dataset::Series(s)) => {
            let model = Ar1Model::new(s.len(), tuning, ContaminationSpec::none()).map_err(|e| usage(e.to_string()))?;
            let data = Ar1Data::from_series(&s).map_err(|e| usage(e.to_string()))?;
            f(&Loaded { model: &model, data })
        }
        (ModelKind::Geostat, Dataset::Lattice(field)) => {
            let l = match (args.block_l, null) {
                (Some(l), _) => l,
                (None, Some(th)) => default_block_l(th[1]),
                (None, None) => {
                    // pilot range from the lag-one correlation on the finest blocks
                    let pilot = GeoModel::new(field.side(), 1, tuning)?;
                    let data = pilot.data(&field)?;
                    default_block_l(pilot.start(&data)[1])
                }
            };
            let l = l.clamp(1, field.side().saturating_sub(1).max(1));
            let model = GeoModel::new(field.side(), l, tuning).map_err(|e| usage(e.to_string()))?;
            let data = model.data(&field)?;
            f(&Loaded { model: &model, data })
        }
        _ => bail!("dataset does not match the model"),
    }
}

trait Commands {
    fn estimate(&self, out: &mut dyn Write) -> Result<()>;
    fn test(&self, null: &[f64], bootstrap: Option<usize>, seed: u64, out: &mut dyn Write) -> Result<()>;
}

impl<M: ScoreModel> Commands for Loaded<'_, M> {
    fn estimate(&self, out: &mut dyn Write) -> Result<()> {
        let fit = fit_mple(self.model, &self.data, None, &FitOptions::default())?;
        let theta = fit.theta_hat.values();
        let g = godambe_empirical(self.model, theta, &self.data)?;
        let n = g.n_units as f64;
        writeln!(out, "{:<10} {:>16} {:>16}", "parameter", "estimate", "std_error")?;
        for (k, name) in fit.theta_hat.names().iter().enumerate() {
            let se = (g.v[(k, k)] / n).sqrt();
            writeln!(out, "{name:<10} {:>16.8} {se:>16.8}", theta[k])?;
        }
        writeln!(out, "# units={} iterations={} residual={:.3e}", g.n_units, fit.iterations, fit.residual_norm)?;
        Ok(())
    }

    fn test(&self, null: &[f64], bootstrap: Option<usize>, seed: u64, out: &mut dyn Write) -> Result<()> {
        if !self.model.in_domain(null) {
            return Err(usage("null point outside the parameter domain"));
        }
        let opts = FitOptions::default();
        let pg = PairwiseGradient(self.model);
        let cfit = fit_mple(&pg, &self.data, None, &opts)?;
        let gn = godambe_empirical(&pg, null, &self.data);
        let gf = godambe_empirical(&pg, cfit.theta_hat.values(), &self.data);
        writeln!(out, "{:<8} {:>14} {:>4} {:>12}", "statistic", "value", "df", "p_value")?;
        let p = self.model.dim();
        let mut row = |name: &str, r: Result<(f64, Option<f64>)>| -> Result<()> {
            match r {
                Ok((v, Some(pv))) => writeln!(out, "{name:<8} {v:>14.6} {p:>4} {pv:>12.6}")?,
                Ok((v, None)) => writeln!(out, "{name:<8} {v:>14.6} {p:>4} {:>12}", "NA")?,
                Err(e) => writeln!(out, "{name:<8} {:>14} {p:>4} {:>12}  # {e}", "NA", "NA")?,
            }
            Ok(())
        };
        for kind in StatKind::CLASSIC {
            let r = match (&gn, &gf) {
                (Ok(gn), Ok(gf)) => classic_test(kind, &pg, &self.data, null, &cfit, gn, gf)
                    .map(|o| (o.value, o.p_value))
                    .map_err(Into::into),
                (Err(e), _) | (_, Err(e)) => Err(anyhow!("{e}")),
            };
            row(kind.name(), r)?;
        }
        let rfit = if self.model.gradient_type() {
            Ok(cfit.clone())
        } else {
            fit_mple(self.model, &self.data, None, &opts)
        };
        let sp = rfit
            .as_ref()
            .map_err(|e| anyhow!("{e}"))
            .and_then(|f| stat_pw_sp(self.model, &self.data, null, f).map_err(Into::into));
        row("sp", sp.as_ref().map(|o| (o.value, o.p_value)).map_err(|e| anyhow!("{e}")))?;
        if let Some(b) = bootstrap {
            let opts = BootstrapOptions {
                replicates: b,
                ..BootstrapOptions::default()
            };
            let r = rfit.map_err(anyhow::Error::from).and_then(|f| {
                bootstrap_pw_sp(self.model, &self.data, null, &f, &opts, &RngStream::new(seed, 0))
                    .map(|(o, s)| (o.value, Some(s.p_value)))
                    .map_err(Into::into)
            });
            row("sp_boot", r)?;
        }
        Ok(())
    }
}
