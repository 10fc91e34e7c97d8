//! Multiagent active-legibility workbench.
//!
//! Agents learn policies whose actions actively disambiguate their private
//! goals for observing teammates: observers track goal beliefs by Bayesian
//! plan recognition, and each goal-holding agent's reward is shaped by the
//! KL-divergence gain its last action produced in those beliefs. Standard
//! single-agent learners (tabular Q-learning, SARSA, tile-coded TD) consume
//! the shaped transitions unchanged.
//!
//! The crate ships two reference environments (the Lead-Follow Maze and
//! particle Simple Navigation), legibility metrics (PCR and PTR), a
//! deterministic experiment harness with CSV/SVG output, and a verification
//! suite that doubles as the release gate.

pub mod belief;
pub mod envs;
pub mod harness;
pub mod learners;
pub mod legibility;
pub mod metrics;
pub mod pipeline;
pub mod plot;
pub mod recognition;
pub mod verify;
