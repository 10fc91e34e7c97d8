//! Reward shaping for active legibility: augmented observations, the
//! KL-gain bonus, and the shaped transition tuple consumed by learners.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{concat_beliefs, BeliefError, DivergenceMode, GoalDistribution, OneHotGoal};

#[derive(Debug, Error)]
pub enum LegibilityError {
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error("shaping config invalid: {0}")]
    Config(String),
}

/// How strongly the legibility bonus weighs into the reward, which agents
/// receive it, and how observers are weighted when aggregating self-beliefs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapingConfig {
    /// Legibility weight; zero disables shaping without touching the
    /// pipeline structure.
    pub beta: f64,
    pub mode: DivergenceMode,
    /// Agents whose reward is shaped. Only agents with a private goal that
    /// at least one other agent models belong here.
    pub shaped_agents: BTreeSet<usize>,
    /// Per-observer weights, applied in each agent's fixed observer order.
    /// `None` means all ones.
    pub omega: Option<Vec<f64>>,
}

impl ShapingConfig {
    pub fn new(beta: f64, mode: DivergenceMode, shaped_agents: BTreeSet<usize>) -> Result<Self, LegibilityError> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(LegibilityError::Config(format!(
                "beta must be finite and non-negative, got {beta}"
            )));
        }
        Ok(Self {
            beta,
            mode,
            shaped_agents,
            omega: None,
        })
    }
}

/// Policy input `obs (+) own goal (+) others' beliefs`, kept in blocks so
/// the layout invariant is checkable and the flat vector is reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedObservation {
    pub obs: Vec<f64>,
    pub own_goal: Vec<f64>,
    pub others_beliefs: Vec<f64>,
}

impl AugmentedObservation {
    pub fn len(&self) -> usize {
        self.obs.len() + self.own_goal.len() + self.others_beliefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat concatenation in the fixed block order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.obs);
        out.extend_from_slice(&self.own_goal);
        out.extend_from_slice(&self.others_beliefs);
        out
    }
}

/// Assembles the augmented observation. The goal is the agent's own private
/// goal when it has one, or its current argmax estimate otherwise; `beliefs`
/// are the agent's distributions over the goals of the agents it models, in
/// the fixed agent ordering excluding self.
pub fn augment(
    obs: &[f64],
    goal: OneHotGoal,
    goal_count: usize,
    beliefs: &[GoalDistribution],
) -> Result<AugmentedObservation, LegibilityError> {
    let own_goal = GoalDistribution::one_hot(goal, goal_count)?;
    for b in beliefs {
        if b.len() != goal_count {
            return Err(LegibilityError::Belief(BeliefError::SizeMismatch {
                expected: goal_count,
                got: b.len(),
            }));
        }
    }
    Ok(AugmentedObservation {
        obs: obs.to_vec(),
        own_goal: own_goal.as_slice().to_vec(),
        others_beliefs: concat_beliefs(beliefs)?,
    })
}

/// The legibility term folded into the raw reward: `raw + beta * klg`.
pub fn shape_reward(raw: f64, klg: f64, beta: f64) -> f64 {
    raw + beta * klg
}

/// The augmented learning tuple: the transition a learner updates on, with
/// both the raw and shaped rewards and the KL gain that separates them.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapedTransition {
    pub agent: usize,
    pub s_aug: AugmentedObservation,
    pub action: usize,
    pub s_aug_next: AugmentedObservation,
    pub reward_shaped: f64,
    pub reward_raw: f64,
    pub klg: f64,
    pub done: bool,
}

impl ShapedTransition {
    /// The defining identity `reward_shaped = reward_raw + beta * klg`.
    pub fn consistent_with(&self, beta: f64) -> bool {
        (self.reward_shaped - (self.reward_raw + beta * self.klg)).abs() <= 1e-12
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{uniform_over, DivergenceMode};

    #[test]
    fn augment_concatenates_in_block_order() {
        let beliefs = vec![uniform_over(2).unwrap()];
        let aug = augment(&[1.0, 2.0], OneHotGoal::new(1, 2).unwrap(), 2, &beliefs).unwrap();
        assert_eq!(aug.to_vec(), vec![1.0, 2.0, 0.0, 1.0, 0.5, 0.5]);
        assert_eq!(aug.len(), 2 + 2 + 2);
    }

    #[test]
    fn augment_with_no_observed_agents() {
        let aug = augment(&[3.0], OneHotGoal::new(0, 4).unwrap(), 4, &[]).unwrap();
        assert_eq!(aug.to_vec(), vec![3.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(aug.others_beliefs.is_empty());
    }

    #[test]
    fn augment_rejects_size_mismatch() {
        let beliefs = vec![uniform_over(3).unwrap()];
        assert!(augment(&[0.0], OneHotGoal::new(0, 2).unwrap(), 2, &beliefs).is_err());
    }

    #[test]
    fn shape_reward_examples() {
        assert!((shape_reward(-0.1, 0.6931, 0.01) - (-0.093069)).abs() < 1e-9);
        assert_eq!(shape_reward(-0.1, 123.0, 0.0), -0.1);
        assert!((shape_reward(-0.1, -0.6931, 0.1) - (-0.16931)).abs() < 1e-12);
    }

    #[test]
    fn shaping_monotone_in_klg() {
        let raw = -0.3;
        let beta = 0.05;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..50 {
            let klg = -2.0 + i as f64 * 0.1;
            let shaped = shape_reward(raw, klg, beta);
            assert!(shaped > prev);
            prev = shaped;
        }
    }

    #[test]
    fn transition_identity() {
        let aug = augment(&[0.0], OneHotGoal::new(0, 2).unwrap(), 2, &[]).unwrap();
        let t = ShapedTransition {
            agent: 0,
            s_aug: aug.clone(),
            action: 1,
            s_aug_next: aug,
            reward_raw: -0.1,
            klg: 0.5,
            reward_shaped: shape_reward(-0.1, 0.5, 0.02),
            done: false,
        };
        assert!(t.consistent_with(0.02));
        assert!(!t.consistent_with(0.5));
    }

    #[test]
    fn config_validates_beta() {
        let set = std::collections::BTreeSet::from([0usize]);
        assert!(ShapingConfig::new(-0.1, DivergenceMode::ReverseKl, set.clone()).is_err());
        assert!(ShapingConfig::new(0.0, DivergenceMode::ReverseKl, set).is_ok());
    }
}
