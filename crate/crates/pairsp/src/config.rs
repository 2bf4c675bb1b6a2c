//! Experiment configuration, read from JSON.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use pairsp_core::classic::StatKind;
use pairsp_core::inference::Provenance;
use pairsp_core::models::{default_block_l, ContaminationSpec, RobustTuning};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mvn,
    Ar1,
    Geostat,
}

impl ModelKind {
    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            ModelKind::Mvn => &["mu", "sigma2", "rho"],
            ModelKind::Ar1 => &["phi0", "phi1", "sigma2"],
            ModelKind::Geostat => &["sigma2", "phi"],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Mvn => "mvn",
            ModelKind::Ar1 => "ar1",
            ModelKind::Geostat => "geostat",
        })
    }
}

impl FromStr for ModelKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mvn" => Ok(ModelKind::Mvn),
            "ar1" => Ok(ModelKind::Ar1),
            "geostat" => Ok(ModelKind::Geostat),
            _ => Err(invalid(format!("unknown model {s:?}; expected mvn, ar1 or geostat"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixMode {
    #[default]
    Empirical,
    McExpected,
    Both,
}

/// `n` and `q` for mvn, `q` for ar1, `q` and optionally `l` for geostat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shape {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub q: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContaminationConfig {
    pub xi: f64,
    pub mu_u: f64,
    pub sigma2_u: f64,
}

/// One output column of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatColumn {
    Classic(StatKind, Provenance),
    Sp,
    /// Saddlepoint statistic with tilted-bootstrap p-value.
    SpBoot,
    /// Full log-likelihood ratio, where available.
    FullLr,
}

impl StatColumn {
    pub fn name(&self) -> String {
        match self {
            StatColumn::Classic(k, Provenance::Empirical) => k.name().to_string(),
            StatColumn::Classic(k, Provenance::McExpected) => format!("{}_e", k.name()),
            StatColumn::Sp => "sp".into(),
            StatColumn::SpBoot => "sp_boot".into(),
            StatColumn::FullLr => "w".into(),
        }
    }

    pub fn parse(s: &str) -> Option<StatColumn> {
        match s {
            "sp" => Some(StatColumn::Sp),
            "sp_boot" => Some(StatColumn::SpBoot),
            "w" => Some(StatColumn::FullLr),
            _ => {
                let (base, prov) = match s.strip_suffix("_e") {
                    Some(b) => (b, Provenance::McExpected),
                    None => (s, Provenance::Empirical),
                };
                let kind = StatKind::from_name(base).filter(|k| *k != StatKind::Sp)?;
                // pw uses no matrices
                if kind == StatKind::Pw && prov == Provenance::McExpected {
                    return None;
                }
                Some(StatColumn::Classic(kind, prov))
            }
        }
    }
}

fn default_levels() -> Vec<f64> {
    vec![0.90, 0.95, 0.99]
}

fn default_statistics() -> Vec<String> {
    ["pw", "wald", "score", "moment", "cb", "inv", "sp", "sp_boot", "w"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn default_bootstrap_b() -> usize {
    200
}

fn default_mc() -> usize {
    10_000
}

fn default_mc_fit() -> usize {
    300
}

fn default_max_failure() -> f64 {
    0.05
}

fn default_boot_failure() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub true_params: BTreeMap<String, f64>,
    pub shape: Shape,
    pub replications: usize,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    /// Names among `pw wald score moment cb inv sp sp_boot w`. Matrix-based
    /// names expand per `matrix_mode`; a trailing `_e` selects Monte Carlo
    /// expected matrices explicitly.
    #[serde(default = "default_statistics")]
    pub statistics: Vec<String>,
    #[serde(default)]
    pub matrix_mode: MatrixMode,
    #[serde(default = "default_bootstrap_b")]
    pub bootstrap_b: usize,
    /// `(a, b, c)`; `null`, or a `null` component, means unbounded.
    #[serde(default)]
    pub tuning: Option<[Option<f64>; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contamination: Option<ContaminationConfig>,
    pub master_seed: u64,
    /// Datasets averaged for expected matrices at the null.
    #[serde(default = "default_mc")]
    pub mc_replications: usize,
    /// Datasets averaged for expected matrices at each fit.
    #[serde(default = "default_mc_fit")]
    pub mc_fit_replications: usize,
    /// Largest tolerated fraction of numerically failed replications per
    /// statistic.
    #[serde(default = "default_max_failure")]
    pub max_failure_fraction: f64,
    #[serde(default = "default_boot_failure")]
    pub bootstrap_max_failure_fraction: f64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Single-line JSON echo, stable for a given config.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.replications == 0 {
            return Err(invalid("replications must be at least 1"));
        }
        if self.levels.is_empty() || self.levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(invalid("levels must lie in (0, 1)"));
        }
        for name in self.true_params.keys() {
            if !self.model.param_names().contains(&name.as_str()) {
                return Err(invalid(format!("unknown parameter {name:?} for {}", self.model)));
            }
        }
        self.theta()?;
        match self.model {
            ModelKind::Mvn if self.shape.n.is_none() => return Err(invalid("mvn shape needs n and q")),
            ModelKind::Mvn | ModelKind::Ar1 if self.shape.l.is_some() => {
                return Err(invalid("l only applies to geostat"))
            }
            ModelKind::Ar1 | ModelKind::Geostat if self.shape.n.is_some() => {
                return Err(invalid("n only applies to mvn"))
            }
            _ => {}
        }
        if self.model != ModelKind::Ar1 && self.contamination.is_some() {
            return Err(invalid("contamination only applies to ar1"));
        }
        if self.model == ModelKind::Mvn && self.tuning.is_some() {
            return Err(invalid("tuning does not apply to mvn"));
        }
        self.robust_tuning()?;
        self.contamination_spec()?;
        let cols = self.columns()?;
        if cols.is_empty() {
            return Err(invalid("no statistics requested"));
        }
        if self.model == ModelKind::Geostat && cols.contains(&StatColumn::FullLr) {
            return Err(invalid("the full likelihood is not available for geostat"));
        }
        if cols.contains(&StatColumn::SpBoot) && self.bootstrap_b == 0 {
            return Err(invalid("bootstrap_b must be positive"));
        }
        let expected = cols
            .iter()
            .any(|c| matches!(c, StatColumn::Classic(_, Provenance::McExpected)));
        if expected && self.mc_replications == 0 {
            return Err(invalid("mc_replications must be positive"));
        }
        for f in [self.max_failure_fraction, self.bootstrap_max_failure_fraction] {
            if !(0.0..=1.0).contains(&f) {
                return Err(invalid("failure fractions must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// True parameter vector in the model's order.
    pub fn theta(&self) -> Result<Vec<f64>, ConfigError> {
        self.model
            .param_names()
            .iter()
            .map(|n| {
                self.true_params
                    .get(*n)
                    .copied()
                    .ok_or_else(|| invalid(format!("true_params lacks {n:?}")))
            })
            .collect()
    }

    pub fn robust_tuning(&self) -> Result<RobustTuning, ConfigError> {
        match self.tuning {
            None => Ok(RobustTuning::classical()),
            Some(t) => {
                let [a, b, c] = t.map(|v| v.unwrap_or(f64::INFINITY));
                RobustTuning::new(a, b, c).map_err(|e| invalid(e.to_string()))
            }
        }
    }

    pub fn contamination_spec(&self) -> Result<ContaminationSpec, ConfigError> {
        match self.contamination {
            None => Ok(ContaminationSpec::none()),
            Some(c) => ContaminationSpec::new(c.xi, c.mu_u, c.sigma2_u).map_err(|e| invalid(e.to_string())),
        }
    }

    /// Block side parameter for geostat, defaulting to the effective range.
    pub fn block_l(&self) -> Result<usize, ConfigError> {
        match self.shape.l {
            Some(l) => Ok(l),
            None => {
                let phi = self.theta()?[1];
                Ok(default_block_l(phi))
            }
        }
    }

    /// Resolved output columns, in request order, without duplicates.
    pub fn columns(&self) -> Result<Vec<StatColumn>, ConfigError> {
        let mut out: Vec<StatColumn> = Vec::new();
        let mut push = |c: StatColumn| {
            if !out.contains(&c) {
                out.push(c);
            }
        };
        for name in &self.statistics {
            let col = StatColumn::parse(name).ok_or_else(|| invalid(format!("unknown statistic {name:?}")))?;
            match col {
                StatColumn::Classic(kind, Provenance::Empirical) if kind != StatKind::Pw => match self.matrix_mode {
                    MatrixMode::Empirical => push(col),
                    MatrixMode::McExpected => push(StatColumn::Classic(kind, Provenance::McExpected)),
                    MatrixMode::Both => {
                        push(col);
                        push(StatColumn::Classic(kind, Provenance::McExpected));
                    }
                },
                _ => push(col),
            }
        }
        Ok(out)
    }
}
