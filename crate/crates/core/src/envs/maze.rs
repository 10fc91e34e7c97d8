//! Lead-Follow Maze: a 16x10 grid with four labeled exits. The leader is
//! assigned a target exit each episode; the follower cannot see it and must
//! infer it from the leader's trajectory. The episode succeeds when both
//! agents stand on the target exit cell in the same post-move state.
//!
//! Dynamics are fully deterministic: a blocked move resolves to staying in
//! place (but still costs the motion penalty), and identical (world, joint
//! action) pairs always produce identical successors.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EnvError;

pub const MAZE_WIDTH: usize = 16;
pub const MAZE_HEIGHT: usize = 10;
pub const N_EXITS: usize = 4;
pub const DEFAULT_MAZE_MAX_STEPS: u32 = 50;

/// Motion cost charged for any move action, including blocked ones.
pub const MOVE_COST: f64 = -0.1;
/// Bonus each agent receives when both reach the target exit together.
pub const SUCCESS_REWARD: f64 = 1.0;

/// Canonical wall layout shipped with the crate. Plain text grid, one row
/// per line: `#` wall, `.` free, `A`-`D` exits, `L`/`F` start cells.
pub const CANONICAL_MAP: &str = include_str!("../../maps/lead_follow.map");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MazeAction {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
    Stay = 4,
}

impl MazeAction {
    pub const ALL: [MazeAction; 5] = [
        MazeAction::Up,
        MazeAction::Down,
        MazeAction::Left,
        MazeAction::Right,
        MazeAction::Stay,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Self, EnvError> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or(EnvError::BadAction(index))
    }

    /// True for the four translations; `Stay` is free of motion cost.
    pub fn is_move(self) -> bool {
        !matches!(self, MazeAction::Stay)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExitLabel {
    A = 0,
    B = 1,
    C = 2,
    D = 3,
}

impl ExitLabel {
    pub const ALL: [ExitLabel; N_EXITS] = [ExitLabel::A, ExitLabel::B, ExitLabel::C, ExitLabel::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Self, EnvError> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or(EnvError::BadTarget(index, N_EXITS))
    }

    pub fn as_char(self) -> char {
        match self {
            ExitLabel::A => 'A',
            ExitLabel::B => 'B',
            ExitLabel::C => 'C',
            ExitLabel::D => 'D',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MazeAgent {
    Leader = 0,
    Follower = 1,
}

/// Parsed wall layout plus exit and start cells. Cheap to clone: walls are
/// one bitmask row per grid row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MazeMap {
    walls: [u16; MAZE_HEIGHT],
    exits: [(u8, u8); N_EXITS],
    leader_start: (u8, u8),
    follower_start: (u8, u8),
}

impl MazeMap {
    pub fn parse(text: &str) -> Result<Self, EnvError> {
        let rows: Vec<&str> = text.lines().collect();
        if rows.len() != MAZE_HEIGHT {
            return Err(EnvError::Map(format!(
                "expected {MAZE_HEIGHT} rows, got {}",
                rows.len()
            )));
        }
        let mut walls = [0u16; MAZE_HEIGHT];
        let mut exits = [None; N_EXITS];
        let mut leader_start = None;
        let mut follower_start = None;
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != MAZE_WIDTH {
                return Err(EnvError::Map(format!(
                    "row {y} has {} columns, expected {MAZE_WIDTH}",
                    row.chars().count()
                )));
            }
            for (x, c) in row.chars().enumerate() {
                match c {
                    '#' => walls[y] |= 1 << x,
                    '.' => {}
                    'A' | 'B' | 'C' | 'D' => {
                        let idx = (c as u8 - b'A') as usize;
                        if exits[idx].is_some() {
                            return Err(EnvError::Map(format!("duplicate exit {c}")));
                        }
                        exits[idx] = Some((x as u8, y as u8));
                    }
                    'L' => {
                        if leader_start.is_some() {
                            return Err(EnvError::Map("duplicate leader start".into()));
                        }
                        leader_start = Some((x as u8, y as u8));
                    }
                    'F' => {
                        if follower_start.is_some() {
                            return Err(EnvError::Map("duplicate follower start".into()));
                        }
                        follower_start = Some((x as u8, y as u8));
                    }
                    other => {
                        return Err(EnvError::Map(format!("unknown cell character `{other}`")));
                    }
                }
            }
        }
        let mut resolved = [(0u8, 0u8); N_EXITS];
        for (i, e) in exits.iter().enumerate() {
            resolved[i] = e.ok_or_else(|| {
                EnvError::Map(format!("missing exit {}", (b'A' + i as u8) as char))
            })?;
        }
        for w in resolved.windows(2) {
            if w[0] == w[1] {
                return Err(EnvError::Map("exits must be distinct".into()));
            }
        }
        let leader_start =
            leader_start.ok_or_else(|| EnvError::Map("missing leader start cell L".into()))?;
        let follower_start =
            follower_start.ok_or_else(|| EnvError::Map("missing follower start cell F".into()))?;
        if resolved.contains(&leader_start) || resolved.contains(&follower_start) {
            return Err(EnvError::Map("start cells must not sit on exits".into()));
        }
        Ok(Self {
            walls,
            exits: resolved,
            leader_start,
            follower_start,
        })
    }

    /// The layout every run uses unless a map override is configured.
    pub fn canonical() -> &'static MazeMap {
        static MAP: OnceLock<MazeMap> = OnceLock::new();
        MAP.get_or_init(|| MazeMap::parse(CANONICAL_MAP).expect("canonical map is valid"))
    }

    pub fn is_wall(&self, x: i32, y: i32) -> bool {
        if x < 0 || y < 0 || x >= MAZE_WIDTH as i32 || y >= MAZE_HEIGHT as i32 {
            return true;
        }
        self.walls[y as usize] & (1 << x) != 0
    }

    pub fn exit_cell(&self, label: ExitLabel) -> (u8, u8) {
        self.exits[label.index()]
    }

    pub fn leader_start(&self) -> (u8, u8) {
        self.leader_start
    }

    pub fn follower_start(&self) -> (u8, u8) {
        self.follower_start
    }

    /// Deterministic move resolution: a step into a wall or out of bounds
    /// leaves the position unchanged.
    pub fn resolve_move(&self, pos: (u8, u8), action: MazeAction) -> (u8, u8) {
        let (x, y) = (pos.0 as i32, pos.1 as i32);
        let (nx, ny) = match action {
            MazeAction::Up => (x, y - 1),
            MazeAction::Down => (x, y + 1),
            MazeAction::Left => (x - 1, y),
            MazeAction::Right => (x + 1, y),
            MazeAction::Stay => (x, y),
        };
        if self.is_wall(nx, ny) {
            pos
        } else {
            (nx as u8, ny as u8)
        }
    }
}

/// SHA-256 of a map file's text, hex encoded. Pinned by the run manifest so
/// every result is tied to the exact layout it was produced on.
pub fn map_sha256(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Observation handed to one maze agent: both positions are fully
/// observable, plus the other agent's previous action. Only the leader sees
/// the target exit.
#[derive(Debug, Clone, PartialEq)]
pub struct MazeObservation {
    pub leader_pos: (u8, u8),
    pub follower_pos: (u8, u8),
    /// `None` at t=0: the distinguished "no previous action" marker.
    pub other_prev_action: Option<MazeAction>,
    pub target: Option<ExitLabel>,
}

impl MazeObservation {
    /// Flat encoding `[lx, ly, fx, fy, prev_action]` with -1 standing for
    /// "no previous action". The target, when visible, travels in the goal
    /// block of the augmented observation rather than here.
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.leader_pos.0 as f64,
            self.leader_pos.1 as f64,
            self.follower_pos.0 as f64,
            self.follower_pos.1 as f64,
            self.other_prev_action
                .map(|a| a.index() as f64)
                .unwrap_or(-1.0),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MazeStepResult {
    pub rewards: (f64, f64),
    pub done: bool,
    pub success: bool,
}

/// Full simulator state for one episode of the Lead-Follow Maze.
#[derive(Debug, Clone)]
pub struct MazeWorld {
    map: MazeMap,
    pub leader_pos: (u8, u8),
    pub follower_pos: (u8, u8),
    target: ExitLabel,
    step_count: u32,
    max_steps: u32,
    done: bool,
    success: bool,
    prev_actions: Option<(MazeAction, MazeAction)>,
}

impl MazeWorld {
    /// Fresh episode on the canonical map. Start positions are canonical and
    /// the layout is fixed, so the seed does not influence the reset; it is
    /// accepted for interface parity with the particle world.
    pub fn reset(seed: u64, target: ExitLabel) -> Self {
        Self::reset_with(MazeMap::canonical().clone(), seed, target, DEFAULT_MAZE_MAX_STEPS)
    }

    pub fn reset_with(map: MazeMap, _seed: u64, target: ExitLabel, max_steps: u32) -> Self {
        let leader_pos = map.leader_start();
        let follower_pos = map.follower_start();
        Self {
            map,
            leader_pos,
            follower_pos,
            target,
            step_count: 0,
            max_steps,
            done: false,
            success: false,
            prev_actions: None,
        }
    }

    pub fn map(&self) -> &MazeMap {
        &self.map
    }

    pub fn target(&self) -> ExitLabel {
        self.target
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

    /// Advances one synchronized time step on the joint action.
    ///
    /// Any move action costs [`MOVE_COST`] even when blocked; `Stay` is
    /// free. When both agents occupy the target exit after moving, each
    /// receives [`SUCCESS_REWARD`] on top of its motion cost and the episode
    /// ends. Hitting the step cap ends the episode with no bonus.
    pub fn step(&mut self, joint: (MazeAction, MazeAction)) -> Result<MazeStepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        self.leader_pos = self.map.resolve_move(self.leader_pos, joint.0);
        self.follower_pos = self.map.resolve_move(self.follower_pos, joint.1);
        self.step_count += 1;
        self.prev_actions = Some(joint);

        let mut rewards = (
            if joint.0.is_move() { MOVE_COST } else { 0.0 },
            if joint.1.is_move() { MOVE_COST } else { 0.0 },
        );
        let goal_cell = self.map.exit_cell(self.target);
        if self.leader_pos == goal_cell && self.follower_pos == goal_cell {
            rewards.0 += SUCCESS_REWARD;
            rewards.1 += SUCCESS_REWARD;
            self.done = true;
            self.success = true;
        } else if self.step_count >= self.max_steps {
            self.done = true;
        }
        Ok(MazeStepResult {
            rewards,
            done: self.done,
            success: self.success,
        })
    }

    pub fn observe(&self, agent: MazeAgent) -> MazeObservation {
        let other_prev_action = self.prev_actions.map(|(l, f)| match agent {
            MazeAgent::Leader => f,
            MazeAgent::Follower => l,
        });
        MazeObservation {
            leader_pos: self.leader_pos,
            follower_pos: self.follower_pos,
            other_prev_action,
            target: match agent {
                MazeAgent::Leader => Some(self.target),
                MazeAgent::Follower => None,
            },
        }
    }

    /// Injective code for the joint discrete state (both coordinates); this
    /// is the observation key recognizers and tabular learners use.
    pub fn state_code(&self) -> u64 {
        Self::code_for(self.leader_pos, self.follower_pos)
    }

    pub fn code_for(leader: (u8, u8), follower: (u8, u8)) -> u64 {
        let cell = |p: (u8, u8)| p.1 as u64 * MAZE_WIDTH as u64 + p.0 as u64;
        cell(leader) * (MAZE_WIDTH * MAZE_HEIGHT) as u64 + cell(follower)
    }
}
