//! Reference environments: the Lead-Follow Maze (discrete) and particle
//! Simple Navigation (continuous). Each exposes observe/step/reward and
//! termination, plus the discrete observation codes the recognizers key on.

pub mod maze;
pub mod particle;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("episode already finished; reset before stepping again")]
    EpisodeOver,
    #[error("non-finite force component")]
    NonFiniteForce,
    #[error("invalid action index {0}")]
    BadAction(usize),
    #[error("target index {0} out of range ({1} goals)")]
    BadTarget(usize, usize),
    #[error("invalid map: {0}")]
    Map(String),
}

pub use maze::{ExitLabel, MazeAction, MazeMap, MazeObservation, MazeWorld};
pub use particle::{ObservationChain, ParticleWorld, PhysicsParams};
