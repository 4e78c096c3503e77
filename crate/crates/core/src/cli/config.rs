use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domset::DomsetOptions;
use crate::estimators::{Method, PipelineConfig};
use crate::par::Exec;
use crate::problems::{ProblemSpec, ABLATION_GAMMAS};
use crate::relunet::TrainConfig;

use super::CliError;

fn default_arch() -> Vec<usize> {
    vec![16]
}
fn default_target_re() -> f64 {
    0.1
}
fn default_max_points() -> usize {
    100
}
fn default_min_n() -> u64 {
    1000
}
fn default_candidates() -> usize {
    10_000
}

/// Search tolerances for dominating-point extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Cut margin.
    pub tau: f64,
    /// Absolute branch-and-bound optimality gap on the rate.
    pub gap: f64,
    pub box_radius: f64,
    pub max_nodes: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        let d = DomsetOptions::default();
        Self {
            tau: d.tau,
            gap: d.gap,
            box_radius: d.box_radius,
            max_nodes: d.max_nodes,
        }
    }
}

fn default_nmc_cap() -> u64 {
    10_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    /// Crude Monte Carlo is replaced by the Chebyshev sample-size bound
    /// beyond this many draws.
    #[serde(default = "default_nmc_cap")]
    pub nmc_cap: u64,
}

fn default_gammas() -> Vec<f64> {
    ABLATION_GAMMAS.to_vec()
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            gammas: default_gammas(),
            nmc_cap: default_nmc_cap(),
        }
    }
}

/// One experiment. Plain keys come before tables so the resolved form
/// re-serialises as valid TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub method: Method,
    /// Set-learning draws; unused by `nmc`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n1: Option<usize>,
    /// Estimation draws.
    pub n2: u64,
    /// Batches, `iter_robust` only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Hidden layer widths.
    #[serde(default = "default_arch")]
    pub arch: Vec<usize>,
    #[serde(default = "default_target_re")]
    pub target_re: f64,
    #[serde(default = "default_max_points")]
    pub max_points: usize,
    #[serde(default = "default_min_n")]
    pub min_n: u64,
    #[serde(default = "default_candidates")]
    pub candidates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<AblationConfig>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub target_re: Option<f64>,
    pub out: Option<PathBuf>,
}

fn bad(field: &str, reason: &str) -> CliError {
    CliError::Config(format!("`{field}`: {reason}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.threads {
            self.threads = Some(t);
        }
        if let Some(r) = o.target_re {
            self.target_re = r;
        }
        if let Some(p) = &o.out {
            self.out = Some(p.clone());
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.n2 == 0 {
            return Err(bad("n2", "must be positive"));
        }
        if self.method != Method::Nmc {
            match self.n1 {
                None => return Err(bad("n1", "required for learned-set methods")),
                Some(0) => return Err(bad("n1", "must be positive")),
                Some(_) => {}
            }
        }
        match (self.method, self.k) {
            (Method::IterRobust, None) => return Err(bad("k", "required for iter_robust")),
            (Method::IterRobust, Some(0)) => return Err(bad("k", "must be positive")),
            (Method::IterRobust, Some(k)) if Some(k) > self.n1 => {
                return Err(bad("k", "cannot exceed n1"))
            }
            (Method::IterRobust, _) => {}
            (_, Some(_)) => return Err(bad("k", "only valid for iter_robust")),
            (_, None) => {}
        }
        if self.arch.is_empty() || self.arch.contains(&0) {
            return Err(bad("arch", "need at least one hidden layer of positive width"));
        }
        if !(self.target_re > 0.0 && self.target_re.is_finite()) {
            return Err(bad("target_re", "must be positive"));
        }
        if self.max_points == 0 {
            return Err(bad("max_points", "must be positive"));
        }
        if self.threads == Some(0) {
            return Err(bad("threads", "must be positive"));
        }
        if let Some(a) = &self.ablation {
            if a.gammas.is_empty() || a.gammas.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
                return Err(bad("ablation.gammas", "need positive values"));
            }
            if a.nmc_cap == 0 {
                return Err(bad("ablation.nmc_cap", "must be positive"));
            }
        }
        self.pipeline().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.problem.build().map_err(|e| CliError::Config(format!("`problem`: {e}")))?;
        Ok(())
    }

    pub fn exec(&self) -> Exec {
        match self.threads {
            Some(t) => Exec::from_threads(t),
            None => Exec::Parallel,
        }
    }

    pub fn domset_options(&self) -> DomsetOptions {
        DomsetOptions {
            max_points: self.max_points,
            tau: self.tolerances.tau,
            gap: self.tolerances.gap,
            box_radius: self.tolerances.box_radius,
            max_nodes: self.tolerances.max_nodes,
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            n1: self.n1.unwrap_or(1),
            n2: self.n2,
            hidden: self.arch.clone(),
            train: self.train.clone(),
            domset: self.domset_options(),
            candidates: self.candidates,
            target_re: self.target_re,
            min_n: self.min_n,
            exec: self.exec(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serialises")
    }
}
