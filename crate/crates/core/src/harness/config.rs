use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Method;
use crate::error::{Error, Result};
use crate::oracle::OracleLimit;
use crate::solver::{LambdaRule, SolverConfig};
use crate::synthetic::GraphSpec;

/// Which experiment a config describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Edge recovery: precision, recall, edge counts, parameter error.
    Structure,
    /// Held-out surrogate log-likelihood, plus everything `Structure` reports.
    Likelihood,
    /// Distance to the population fit as `n` grows.
    Rate,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Structure => "structure",
            Protocol::Likelihood => "likelihood",
            Protocol::Rate => "rate",
        }
    }
}

/// Gibbs settings shared by every cell; `n` and the seed come from the cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsSettings {
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for GibbsSettings {
    fn default() -> Self {
        GibbsSettings { burn_in: 1000, thin: 5 }
    }
}

/// A batch experiment: every `(xi, n, replicate)` cell is fitted by every method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub graph: GraphSpec,
    pub xi: Vec<f64>,
    pub n: Vec<usize>,
    #[serde(default = "default_lambda")]
    pub lambda: LambdaRule,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub sampler: GibbsSettings,
    /// Held-out sample size; the training size when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_size: Option<usize>,
    /// Penalty of the population fit in the rate protocol.
    #[serde(default = "default_reference_lambda")]
    pub reference_lambda: f64,
    /// Solver settings; `lambda` is replaced per cell.
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Also write one fit file per cell and method.
    #[serde(default)]
    pub write_fits: bool,
}

fn default_lambda() -> LambdaRule {
    LambdaRule::Auto
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_replicates() -> usize {
    10
}

fn default_reference_lambda() -> f64 {
    1e-6
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_workers() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn p(&self) -> usize {
        self.graph.p()
    }

    /// Number of result rows the config produces.
    pub fn row_count(&self) -> usize {
        self.xi.len() * self.n.len() * self.replicates * self.methods.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.xi.is_empty() || self.n.is_empty() || self.methods.is_empty() {
            return bad("xi, n and methods must be non-empty");
        }
        if self.replicates == 0 {
            return bad("replicates must be >= 1");
        }
        if self.workers == 0 {
            return bad("workers must be >= 1");
        }
        if self.n.contains(&0) || self.test_size == Some(0) {
            return bad("sample sizes must be >= 1");
        }
        if self.sampler.thin == 0 {
            return bad("sampler.thin must be >= 1");
        }
        if self.xi.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return bad("coupling strengths must be finite and >= 0");
        }
        if let LambdaRule::Fixed(l) = self.lambda {
            if !(l.is_finite() && l >= 0.0) {
                return bad("lambda must be >= 0");
            }
        }
        self.solver.validate()?;
        if self.protocol == Protocol::Rate {
            let limit = OracleLimit::default();
            if self.p() > limit.max_p {
                return Err(Error::TooLarge { p: self.p(), max_p: limit.max_p });
            }
            if self.methods.iter().any(|m| m.is_pseudo_likelihood()) {
                return bad("the rate protocol supports only logdet and logdet-cut");
            }
            if !(self.reference_lambda.is_finite() && self.reference_lambda >= 0.0) {
                return bad("reference_lambda must be >= 0");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
protocol = "structure"
xi = [0.5]
n = [100, 200]
graph = { kind = "grid4", rows = 3, cols = 3 }
"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.replicates, 10);
        assert_eq!(cfg.methods, Method::ALL.to_vec());
        assert_eq!(cfg.lambda, LambdaRule::Auto);
        assert_eq!(cfg.p(), 9);
        assert_eq!(cfg.row_count(), 2 * 10 * 4);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.lambda = LambdaRule::Fixed(0.25);
        cfg.methods = vec![Method::PlMax, Method::LogdetCut];
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn lambda_accepts_names_and_numbers() {
        let cfg = ExperimentConfig::from_toml(&format!("{MINIMAL}lambda = 0.3\n")).unwrap();
        assert_eq!(cfg.lambda, LambdaRule::Fixed(0.3));
        let cfg = ExperimentConfig::from_toml(&format!("{MINIMAL}lambda = \"auto\"\n")).unwrap();
        assert_eq!(cfg.lambda, LambdaRule::Auto);
        assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}lambda = \"big\"\n")).is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        for extra in [
            "replicates = 0\n",
            "workers = 0\n",
            "methods = []\n",
            "methods = [\"glasso\"]\n",
            "unknown = 1\n",
        ] {
            assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}{extra}")).is_err(), "{extra}");
        }
        let empty_n = MINIMAL.replace("[100, 200]", "[]");
        assert!(ExperimentConfig::from_toml(&empty_n).is_err());
    }

    #[test]
    fn rate_protocol_limits() {
        let rate = MINIMAL.replace("\"structure\"", "\"rate\"");
        let cfg = ExperimentConfig::from_toml(&format!("{rate}methods = [\"logdet-cut\"]\n")).unwrap();
        assert_eq!(cfg.protocol, Protocol::Rate);
        assert!(ExperimentConfig::from_toml(&rate).is_err(), "pseudo-likelihood in rate protocol");
        let big = rate.replace("rows = 3, cols = 3", "rows = 5, cols = 5");
        assert!(matches!(
            ExperimentConfig::from_toml(&format!("{big}methods = [\"logdet\"]\n")),
            Err(Error::TooLarge { .. })
        ));
    }
}
