//! TOML experiment configs. The structure is documented in
//! `configs/schema.json`; unknown keys are rejected.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use confound_core::divergence::DivergenceKind;
use confound_core::envs::{FourRoomsConfig, Layout};
use confound_core::imitation::DEFAULT_ENUMERATION_CAP;
use confound_core::rl::{LambdaMode, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub env: EnvSpec,
    #[serde(default)]
    pub data: DataSpec,
    pub algorithm: AlgorithmSpec,
    pub evaluation: EvaluationSpec,
}

fn default_gamma() -> f64 {
    0.9
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvSpec {
    /// Three-state toy; `rho` is the online weight of the first context.
    Toy {
        #[serde(default = "default_gamma")]
        gamma: f64,
        #[serde(default = "half")]
        rho: f64,
    },
    Catastrophic {
        k: usize,
        m: usize,
        d_star: Vec<f64>,
        #[serde(default)]
        rho_online: Option<Vec<f64>>,
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
    FourRooms(FourRoomsSpec),
    /// An MDP file written by `gen-env`, relative to the config file.
    File { path: PathBuf },
}

/// Four-rooms overrides; anything left out keeps the library default.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourRoomsSpec {
    pub grid: Option<usize>,
    pub gamma: Option<f64>,
    pub start: Option<(usize, usize)>,
    pub layouts: Option<Vec<Layout>>,
    pub layout_probs: Option<Vec<f64>>,
    pub shifted_layout_probs: Option<Vec<f64>>,
    pub goals: Option<Vec<(usize, usize)>>,
    pub goal_probs: Option<Vec<f64>>,
    pub mines: Option<Vec<(usize, usize)>>,
    pub mine_probs: Option<Vec<f64>>,
    pub shift_beta: Option<f64>,
    pub max_contexts: Option<usize>,
}

impl FourRoomsSpec {
    pub fn to_config(&self) -> FourRoomsConfig {
        let d = FourRoomsConfig::default();
        FourRoomsConfig {
            grid: self.grid.unwrap_or(d.grid),
            gamma: self.gamma.unwrap_or(d.gamma),
            start: self.start.unwrap_or(d.start),
            layouts: self.layouts.clone().unwrap_or(d.layouts),
            layout_probs: self.layout_probs.clone().unwrap_or(d.layout_probs),
            shifted_layout_probs: self.shifted_layout_probs.clone().unwrap_or(d.shifted_layout_probs),
            goals: self.goals.clone().unwrap_or(d.goals),
            goal_probs: self.goal_probs.clone().unwrap_or(d.goal_probs),
            mines: self.mines.clone().unwrap_or(d.mines),
            mine_probs: self.mine_probs.clone().unwrap_or(d.mine_probs),
            shift_beta: self.shift_beta.unwrap_or(d.shift_beta),
            max_contexts: self.max_contexts.unwrap_or(d.max_contexts),
        }
    }
}

/// Expert data. The context law is `rho_e` when given, otherwise the
/// environment's own expert law; `shift_beta` then mixes it with the online
/// law, `(1−β) ρ_o + β ρ_e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default)]
    pub rho_e: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub shift_beta: f64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

fn default_n() -> usize {
    2000
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec {
            rho_e: None,
            shift_beta: 1.0,
            n: default_n(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    Imitate(ImitateSpec),
    P1b(SolverSpec),
    P2Ftl(SolverSpec),
    P2Ogd(SolverSpec),
}

impl AlgorithmSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmSpec::Imitate(_) => "imitate",
            AlgorithmSpec::P1b(_) => "p1b",
            AlgorithmSpec::P2Ftl(_) => "p2-ftl",
            AlgorithmSpec::P2Ogd(_) => "p2-ogd",
        }
    }
}

/// What the imitation target is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetSource {
    /// Empirical occupancy of the dataset.
    #[default]
    Data,
    /// Exact marginal of the expert under the data law.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImitateSpec {
    #[serde(default)]
    pub delta: f64,
    /// Iterative recovery with this λ; plain enumeration when absent.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default)]
    pub target: TargetSource,
}

fn default_max_iters() -> usize {
    20
}

fn default_cap() -> usize {
    DEFAULT_ENUMERATION_CAP
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSetting {
    Fixed(f64),
    Named(LambdaName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaName {
    Adaptive,
}

/// Where the solver reads the expert from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpertMode {
    /// Confounded trajectories.
    #[default]
    Data,
    /// Exact expert tables and a direct search over context laws (needs
    /// oracle access).
    Oracle,
}

/// Solver block; defaults follow [`SolverConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default)]
    pub lambda: Option<LambdaSetting>,
    pub alpha: Option<f64>,
    pub batch: Option<usize>,
    pub epochs: Option<usize>,
    pub candidates: Option<usize>,
    pub outer_iters: Option<usize>,
    pub divergence: Option<String>,
    pub g_step: Option<f64>,
    #[serde(default)]
    pub mode: ExpertMode,
}

impl SolverSpec {
    pub fn to_config(&self, seed: u64) -> Result<SolverConfig> {
        let d = SolverConfig::default();
        let lambda = match self.lambda {
            None => d.lambda,
            Some(LambdaSetting::Fixed(l)) => LambdaMode::Fixed(l),
            Some(LambdaSetting::Named(LambdaName::Adaptive)) => LambdaMode::Adaptive,
        };
        let divergence = match &self.divergence {
            None => d.divergence,
            Some(s) => s
                .parse::<DivergenceKind>()
                .map_err(|e| LabError::Config(format!("divergence: {e}")))?,
        };
        let cfg = SolverConfig {
            lambda,
            alpha: self.alpha.unwrap_or(d.alpha),
            batch: self.batch.unwrap_or(d.batch),
            epochs: self.epochs.unwrap_or(d.epochs),
            candidates: self.candidates.unwrap_or(d.candidates),
            outer_iters: self.outer_iters.unwrap_or(d.outer_iters),
            divergence,
            g_step: self.g_step.unwrap_or(d.g_step),
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSpec {
    pub seeds: Vec<u64>,
    /// Output directory, relative to the config file.
    pub out_dir: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| LabError::parse(origin, e))
    }

    /// Reads a config and resolves its relative paths against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let mut cfg = Self::from_toml(&text, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        if let EnvSpec::File { path } = &mut self.env {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        if self.evaluation.out_dir.is_relative() {
            self.evaluation.out_dir = base.join(&self.evaluation.out_dir);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let seeds = &self.evaluation.seeds;
        if seeds.is_empty() {
            return Err(LabError::Config("evaluation.seeds is empty".into()));
        }
        if seeds.iter().collect::<BTreeSet<_>>().len() != seeds.len() {
            return Err(LabError::Config("evaluation.seeds has duplicates".into()));
        }
        if self.evaluation.workers == Some(0) {
            return Err(LabError::Config("evaluation.workers must be at least 1".into()));
        }
        if let EnvSpec::File { path } = &self.env {
            if !path.is_file() {
                return Err(LabError::Config(format!("env file {} does not exist", path.display())));
            }
        }
        if self.data.n == 0 {
            return Err(LabError::Config("data.n must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.data.shift_beta) {
            return Err(LabError::Config("data.shift_beta must be in [0, 1]".into()));
        }
        match &self.algorithm {
            AlgorithmSpec::Imitate(s) => {
                if !(s.delta >= 0.0) || s.max_iters == 0 || s.cap == 0 {
                    return Err(LabError::Config(
                        "imitate needs delta ≥ 0, max_iters ≥ 1 and cap ≥ 1".into(),
                    ));
                }
            }
            AlgorithmSpec::P1b(s) | AlgorithmSpec::P2Ftl(s) | AlgorithmSpec::P2Ogd(s) => {
                s.to_config(0)?;
            }
        }
        if let (AlgorithmSpec::P2Ftl(s), Some(LambdaSetting::Named(_))) = (&self.algorithm, self.algorithm_lambda()) {
            let _ = s;
            return Err(LabError::Config("p2-ftl takes a fixed lambda".into()));
        }
        Ok(())
    }

    fn algorithm_lambda(&self) -> Option<LambdaSetting> {
        match &self.algorithm {
            AlgorithmSpec::P1b(s) | AlgorithmSpec::P2Ftl(s) | AlgorithmSpec::P2Ogd(s) => s.lambda,
            AlgorithmSpec::Imitate(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"
name = "toy"
[env]
kind = "toy"
rho = 0.8
[data]
rho_e = [0.2, 0.8]
n = 100
[algorithm]
kind = "p2-ogd"
lambda = 2.0
divergence = "chi2"
[evaluation]
seeds = [0, 1]
out_dir = "out"
"#;

    #[test]
    fn parses_and_fills_defaults() {
        let cfg = ExperimentConfig::from_toml(TOY, Path::new("t.toml")).unwrap();
        cfg.validate().unwrap();
        let AlgorithmSpec::P2Ogd(s) = &cfg.algorithm else { panic!() };
        let sc = s.to_config(3).unwrap();
        assert_eq!(sc.lambda, LambdaMode::Fixed(2.0));
        assert_eq!(sc.batch, 256);
        assert_eq!(sc.seed, 3);
        assert_eq!(cfg.data.shift_beta, 1.0);
    }

    #[test]
    fn adaptive_lambda_and_bad_inputs() {
        let text = TOY.replace("lambda = 2.0", "lambda = \"adaptive\"");
        let cfg = ExperimentConfig::from_toml(&text, Path::new("t.toml")).unwrap();
        let AlgorithmSpec::P2Ogd(s) = &cfg.algorithm else { panic!() };
        assert_eq!(s.to_config(0).unwrap().lambda, LambdaMode::Adaptive);

        let empty = ExperimentConfig::from_toml(&TOY.replace("[0, 1]", "[]"), Path::new("t")).unwrap();
        assert!(matches!(empty.validate(), Err(LabError::Config(_))));
        let dup = ExperimentConfig::from_toml(&TOY.replace("[0, 1]", "[4, 4]"), Path::new("t")).unwrap();
        assert!(matches!(dup.validate(), Err(LabError::Config(_))));
        assert!(ExperimentConfig::from_toml(&TOY.replace("n = 100", "n = 100\nbogus = 1"), Path::new("t")).is_err());
        let bad_div = ExperimentConfig::from_toml(&TOY.replace("chi2", "hellinger"), Path::new("t")).unwrap();
        assert!(bad_div.validate().is_err());
    }
}
