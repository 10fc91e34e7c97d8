//! Experiment configuration: a single JSON document, with CLI flags layered
//! on top by the binary. Every under-specified constant is resolved here and
//! echoed into the run manifest for auditability.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::belief::DivergenceMode;
use crate::envs::maze::DEFAULT_MAZE_MAX_STEPS;
use crate::envs::particle::DEFAULT_NAV_MAX_STEPS;
use crate::envs::PhysicsParams;
use crate::learners::LearnerConfig;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Lfm,
    SimpleNavigation,
}

impl EnvKind {
    pub fn default_max_steps(self) -> u32 {
        match self {
            EnvKind::Lfm => DEFAULT_MAZE_MAX_STEPS,
            EnvKind::SimpleNavigation => DEFAULT_NAV_MAX_STEPS,
        }
    }

    pub fn default_recognizer(self) -> RecognizerKind {
        match self {
            EnvKind::Lfm => RecognizerKind::Empirical,
            EnvKind::SimpleNavigation => RecognizerKind::MaxEnt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgoKind {
    QLearning,
    Sarsa,
    TileTd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecognizerKind {
    Empirical,
    MaxEnt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub algo: AlgoKind,
    pub betas: Vec<f64>,
    pub episodes: usize,
    /// Episode step cap; `None` picks the environment default.
    pub max_steps: Option<u32>,
    pub seeds: Vec<u64>,
    pub divergence: DivergenceMode,
    /// `None` picks the environment default: empirical counts in the maze,
    /// max-entropy in the particle world.
    pub recognizer: Option<RecognizerKind>,
    pub learner: LearnerConfig,
    /// Particle-world physics overrides.
    pub physics: Option<PhysicsParams>,
    /// Per-observer aggregation weights for self-belief queries.
    pub omega: Option<Vec<f64>>,
    /// Public-target baseline: goal-less agents act on the true goal.
    pub oracle_follower: bool,
    /// Maze layout override; `None` uses the canonical shipped map.
    pub map_file: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Trailing window used by rolling-metric plots.
    pub metrics_window: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: EnvKind::Lfm,
            algo: AlgoKind::QLearning,
            betas: vec![0.0, 0.01, 0.1],
            episodes: 50_000,
            max_steps: None,
            seeds: vec![1, 2, 3, 4, 5],
            divergence: DivergenceMode::ReverseKl,
            recognizer: None,
            learner: LearnerConfig::default(),
            physics: None,
            omega: None,
            oracle_follower: false,
            map_file: None,
            out_dir: PathBuf::from("runs/latest"),
            metrics_window: 1000,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.episodes < 1 {
            return Err(HarnessError::Config("episodes must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed required".into()));
        }
        if self.betas.is_empty() {
            return Err(HarnessError::Config("at least one beta required".into()));
        }
        for &b in &self.betas {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(HarnessError::Config(format!(
                    "betas must be finite and non-negative, got {b}"
                )));
            }
        }
        if self.metrics_window < 1 {
            return Err(HarnessError::Config("metrics_window must be >= 1".into()));
        }
        self.learner
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        match (self.env, self.algo) {
            (EnvKind::Lfm, AlgoKind::TileTd) => Err(HarnessError::Config(
                "tile_td targets the continuous world; use q_learning or sarsa in the maze".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn resolved_max_steps(&self) -> u32 {
        self.max_steps.unwrap_or_else(|| self.env.default_max_steps())
    }

    pub fn resolved_recognizer(&self) -> RecognizerKind {
        self.recognizer
            .unwrap_or_else(|| self.env.default_recognizer())
    }

    pub fn resolved_physics(&self) -> PhysicsParams {
        self.physics.unwrap_or_default()
    }

    /// Agents whose reward the shaping pipeline touches: the goal holder
    /// plus, in the particle world, the middle link of the observation
    /// chain (whose motion agent 3 reads).
    pub fn shaped_agents(&self) -> BTreeSet<usize> {
        match self.env {
            EnvKind::Lfm => BTreeSet::from([0]),
            EnvKind::SimpleNavigation => BTreeSet::from([0, 1]),
        }
    }

    /// Directory holding one cell's outputs.
    pub fn cell_dir(&self, beta: f64, seed: u64) -> PathBuf {
        self.out_dir
            .join(format!("beta_{}_seed_{}", super::csvio::fmt_sig9(beta), seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_via_json() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"env":"simple_navigation","algo":"tile_td"}"#)
            .unwrap();
        assert_eq!(cfg.env, EnvKind::SimpleNavigation);
        assert_eq!(cfg.episodes, 50_000);
        assert_eq!(cfg.resolved_max_steps(), 100);
        assert_eq!(cfg.resolved_recognizer(), RecognizerKind::MaxEnt);
        assert_eq!(cfg.shaped_agents(), BTreeSet::from([0, 1]));
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut cfg = ExperimentConfig::default();
        cfg.episodes = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.betas = vec![-0.5];
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.algo = AlgoKind::TileTd; // lfm + tile_td
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn maze_defaults() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.resolved_max_steps(), 50);
        assert_eq!(cfg.resolved_recognizer(), RecognizerKind::Empirical);
        assert_eq!(cfg.shaped_agents(), BTreeSet::from([0]));
    }
}
