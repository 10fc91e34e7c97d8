//! Particle Simple Navigation: three agents and six landmarks in a
//! continuous 2D arena with circular obstacles. Agent 1 is assigned a target
//! landmark the others cannot see; agent 2 only observes agent 1, and
//! agent 3 only observes agent 2, forming an observation chain.
//!
//! Integration is semi-implicit Euler with velocity damping and a speed
//! clamp. Agents pass through each other; only obstacles collide, resolved
//! by projecting the agent onto the obstacle surface and zeroing the inward
//! normal velocity.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::EnvError;

pub const N_AGENTS: usize = 3;
pub const N_LANDMARKS: usize = 6;
pub const N_FORCE_ACTIONS: usize = 5;
pub const DEFAULT_NAV_MAX_STEPS: u32 = 100;

/// Penetration tolerance on the obstacle non-overlap invariant.
pub const PENETRATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsParams {
    pub dt: f64,
    pub damping: f64,
    pub mass: f64,
    pub max_force: f64,
    pub max_speed: f64,
    pub agent_radius: f64,
    pub capture_radius: f64,
    pub success_bonus: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            damping: 0.25,
            mass: 1.0,
            max_force: 1.0,
            max_speed: 1.0,
            agent_radius: 0.05,
            capture_radius: 0.1,
            success_bonus: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Static landmark ring: six landmarks evenly spaced on a circle of radius
/// 0.8 around the origin.
pub fn canonical_landmarks() -> [[f64; 2]; N_LANDMARKS] {
    let mut out = [[0.0; 2]; N_LANDMARKS];
    for (k, lm) in out.iter_mut().enumerate() {
        let angle = std::f64::consts::TAU * k as f64 / N_LANDMARKS as f64;
        *lm = [0.8 * angle.cos(), 0.8 * angle.sin()];
    }
    out
}

/// Two immovable circular obstacles between the spawn region and the
/// landmark ring.
pub fn canonical_obstacles() -> Vec<Obstacle> {
    vec![
        Obstacle {
            center: [0.4, 0.0],
            radius: 0.15,
        },
        Obstacle {
            center: [-0.4, 0.0],
            radius: 0.15,
        },
    ]
}

/// Who observes whom: observer -> observed. The canonical chain is
/// agent 2 -> agent 1 and agent 3 -> agent 2 (zero-indexed 1 -> 0, 2 -> 1).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationChain {
    pairs: Vec<(usize, usize)>,
}

impl Default for ObservationChain {
    fn default() -> Self {
        Self {
            pairs: vec![(1, 0), (2, 1)],
        }
    }
}

impl ObservationChain {
    /// Validates that the observer->observed mapping is an acyclic chain.
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self, EnvError> {
        for &(observer, observed) in &pairs {
            if observer == observed {
                return Err(EnvError::Map(format!(
                    "agent {observer} cannot observe itself"
                )));
            }
        }
        // Follow each chain; revisiting a node means a cycle.
        for &(start, _) in &pairs {
            let mut seen = vec![start];
            let mut cur = start;
            while let Some(&(_, next)) = pairs.iter().find(|(obs, _)| *obs == cur) {
                if seen.contains(&next) {
                    return Err(EnvError::Map("observation chain contains a cycle".into()));
                }
                seen.push(next);
                cur = next;
            }
        }
        Ok(Self { pairs })
    }

    pub fn observed_by(&self, observer: usize) -> Option<usize> {
        self.pairs
            .iter()
            .find(|(obs, _)| *obs == observer)
            .map(|&(_, observed)| observed)
    }

    pub fn observers_of(&self, observed: usize) -> Vec<usize> {
        self.pairs
            .iter()
            .filter(|&&(_, o)| o == observed)
            .map(|&(obs, _)| obs)
            .collect()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavStepResult {
    pub rewards: [f64; N_AGENTS],
    pub done: bool,
    pub success: bool,
}

/// Full simulator state for one episode of Simple Navigation.
#[derive(Debug, Clone)]
pub struct ParticleWorld {
    pub positions: [[f64; 2]; N_AGENTS],
    pub velocities: [[f64; 2]; N_AGENTS],
    pub prev_actions: [Option<usize>; N_AGENTS],
    landmarks: [[f64; 2]; N_LANDMARKS],
    obstacles: Vec<Obstacle>,
    chain: ObservationChain,
    target: usize,
    params: PhysicsParams,
    step_count: u32,
    max_steps: u32,
    done: bool,
    success: bool,
}

impl ParticleWorld {
    pub fn reset(seed: u64, target: usize) -> Result<Self, EnvError> {
        Self::reset_with(seed, target, PhysicsParams::default(), DEFAULT_NAV_MAX_STEPS)
    }

    pub fn reset_with(
        seed: u64,
        target: usize,
        params: PhysicsParams,
        max_steps: u32,
    ) -> Result<Self, EnvError> {
        if target >= N_LANDMARKS {
            return Err(EnvError::BadTarget(target, N_LANDMARKS));
        }
        let obstacles = canonical_obstacles();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut positions = [[0.0; 2]; N_AGENTS];
        for pos in &mut positions {
            // Rejection-sample a spawn outside every obstacle.
            loop {
                let candidate = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let clear = obstacles.iter().all(|o| {
                    dist(candidate, o.center) >= o.radius + params.agent_radius
                });
                if clear {
                    *pos = candidate;
                    break;
                }
            }
        }
        Ok(Self {
            positions,
            velocities: [[0.0; 2]; N_AGENTS],
            prev_actions: [None; N_AGENTS],
            landmarks: canonical_landmarks(),
            obstacles,
            chain: ObservationChain::default(),
            target,
            params,
            step_count: 0,
            max_steps,
            done: false,
            success: false,
        })
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn params(&self) -> &PhysicsParams {
        &self.params
    }

    pub fn landmarks(&self) -> &[[f64; 2]; N_LANDMARKS] {
        &self.landmarks
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn chain(&self) -> &ObservationChain {
        &self.chain
    }

    pub fn step_count(&self) -> u32 {
        self.step_count
    }

    pub fn done(&self) -> bool {
        self.done
    }

    pub fn success(&self) -> bool {
        self.success
    }

    /// The fixed 5-way force basis discrete learners emit:
    /// +x, -x, +y, -y, null, scaled by `max_force`.
    pub fn force_basis(action: usize, max_force: f64) -> Result<[f64; 2], EnvError> {
        match action {
            0 => Ok([max_force, 0.0]),
            1 => Ok([-max_force, 0.0]),
            2 => Ok([0.0, max_force]),
            3 => Ok([0.0, -max_force]),
            4 => Ok([0.0, 0.0]),
            other => Err(EnvError::BadAction(other)),
        }
    }

    /// Advances the world on per-agent force vectors. Forces are clamped to
    /// `max_force` magnitude before integration.
    pub fn step_forces(&mut self, forces: &[[f64; 2]; N_AGENTS]) -> Result<NavStepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        for f in forces {
            if !f[0].is_finite() || !f[1].is_finite() {
                return Err(EnvError::NonFiniteForce);
            }
        }
        let p = self.params;
        for i in 0..N_AGENTS {
            let f = clamp_norm(forces[i], p.max_force);
            let mut v = [
                (1.0 - p.damping) * self.velocities[i][0] + f[0] / p.mass * p.dt,
                (1.0 - p.damping) * self.velocities[i][1] + f[1] / p.mass * p.dt,
            ];
            v = clamp_norm(v, p.max_speed);
            let mut pos = [
                self.positions[i][0] + v[0] * p.dt,
                self.positions[i][1] + v[1] * p.dt,
            ];
            for o in &self.obstacles {
                let min_dist = o.radius + p.agent_radius;
                let d = [pos[0] - o.center[0], pos[1] - o.center[1]];
                let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
                if len < min_dist {
                    let n = if len > 1e-12 {
                        [d[0] / len, d[1] / len]
                    } else {
                        [1.0, 0.0]
                    };
                    pos = [o.center[0] + n[0] * min_dist, o.center[1] + n[1] * min_dist];
                    let vn = v[0] * n[0] + v[1] * n[1];
                    if vn < 0.0 {
                        v[0] -= vn * n[0];
                        v[1] -= vn * n[1];
                    }
                }
            }
            self.velocities[i] = v;
            self.positions[i] = pos;
        }
        self.step_count += 1;

        let goal = self.landmarks[self.target];
        let all_captured = self
            .positions
            .iter()
            .all(|&pos| dist(pos, goal) <= p.capture_radius);
        let mut rewards = [0.0; N_AGENTS];
        for (i, r) in rewards.iter_mut().enumerate() {
            *r = -dist(self.positions[i], goal);
            if all_captured {
                *r += p.success_bonus;
            }
        }
        if all_captured {
            self.done = true;
            self.success = true;
        } else if self.step_count >= self.max_steps {
            self.done = true;
        }
        Ok(NavStepResult {
            rewards,
            done: self.done,
            success: self.success,
        })
    }

    /// Advances on discrete basis actions and records them as the agents'
    /// previous actions for the observation chain.
    pub fn step_discrete(&mut self, actions: [usize; N_AGENTS]) -> Result<NavStepResult, EnvError> {
        let mut forces = [[0.0; 2]; N_AGENTS];
        for (i, &a) in actions.iter().enumerate() {
            forces[i] = Self::force_basis(a, self.params.max_force)?;
        }
        let out = self.step_forces(&forces)?;
        for (slot, &a) in self.prev_actions.iter_mut().zip(actions.iter()) {
            *slot = Some(a);
        }
        Ok(out)
    }

    /// Per-agent observation vector. Layout: own position and velocity, all
    /// landmark offsets, all obstacle offsets, then the observed chain
    /// partner's offset and last action (one-hot) when the agent has one,
    /// and the target landmark one-hot for agent 0 only. Length is constant
    /// per agent.
    pub fn observe(&self, agent: usize) -> Vec<f64> {
        let pos = self.positions[agent];
        let mut obs = Vec::with_capacity(32);
        obs.extend_from_slice(&pos);
        obs.extend_from_slice(&self.velocities[agent]);
        for lm in &self.landmarks {
            obs.push(lm[0] - pos[0]);
            obs.push(lm[1] - pos[1]);
        }
        for o in &self.obstacles {
            obs.push(o.center[0] - pos[0]);
            obs.push(o.center[1] - pos[1]);
        }
        if let Some(observed) = self.chain.observed_by(agent) {
            obs.push(self.positions[observed][0] - pos[0]);
            obs.push(self.positions[observed][1] - pos[1]);
            let mut one_hot = [0.0; N_FORCE_ACTIONS];
            if let Some(a) = self.prev_actions[observed] {
                one_hot[a] = 1.0;
            }
            obs.extend_from_slice(&one_hot);
        }
        if agent == 0 {
            let mut one_hot = [0.0; N_LANDMARKS];
            one_hot[self.target] = 1.0;
            obs.extend_from_slice(&one_hot);
        }
        obs
    }

    /// Discrete observation code for the empirical recognizer backend: the
    /// observed agent's position quantized onto an 8x8 grid over the arena,
    /// combined with its heading quantized into 8 sectors (or a distinct
    /// "stationary" code when it is not moving).
    pub fn recognizer_key(&self, observed: usize) -> u64 {
        const GRID: f64 = 8.0;
        let pos = self.positions[observed];
        let cell_of = |x: f64| (((x + 1.0) / 2.0 * GRID).floor().clamp(0.0, GRID - 1.0)) as u64;
        let cell = cell_of(pos[1]) * GRID as u64 + cell_of(pos[0]);
        let v = self.velocities[observed];
        let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
        let sector = if speed < 1e-9 {
            8
        } else {
            let angle = v[1].atan2(v[0]); // (-pi, pi]
            ((angle + std::f64::consts::PI) / (std::f64::consts::PI / 4.0))
                .floor()
                .clamp(0.0, 7.0) as u64
        };
        cell * 9 + sector
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

fn clamp_norm(v: [f64; 2], max: f64) -> [f64; 2] {
    let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if norm > max && norm > 0.0 {
        [v[0] * max / norm, v[1] * max / norm]
    } else {
        v
    }
}
