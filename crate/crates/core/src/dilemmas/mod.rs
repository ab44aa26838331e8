//! Harvest (commons) and Cleanup (public goods) gridworlds.
//!
//! Dynamics are fully determined by the reset seed and the joint action
//! sequence: every random draw (movement conflicts, regrowth, waste) comes
//! from the env's own stream.

mod env;
mod map;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use env::{AgentBody, AgentEvents, Env, Observation, Orientation, StepOutcome, OBS_CHANNELS};
pub use map::{Cell, GridMap, Pos, BUILTIN_MAPS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("map error: {0}")]
    Map(String),
    #[error("{agents} agents requested but the map has {starts} start positions")]
    TooManyAgents { agents: usize, starts: usize },
    #[error("action id {id} is not valid in {game}")]
    UnknownAction { id: usize, game: GameKind },
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("unknown agent id {0}")]
    UnknownAgent(usize),
    #[error("episode already finished at t = {0}")]
    EpisodeOver(u32),
    #[error("invalid config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GameKind {
    Harvest,
    Cleanup,
}

impl GameKind {
    pub fn num_actions(self) -> usize {
        match self {
            GameKind::Harvest => 8,
            GameKind::Cleanup => 9,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GameKind::Harvest => "harvest",
            GameKind::Cleanup => "cleanup",
        }
    }
}

impl std::fmt::Display for GameKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Action {
    Forward = 0,
    Backward = 1,
    StepLeft = 2,
    StepRight = 3,
    RotateLeft = 4,
    RotateRight = 5,
    Fire = 6,
    Noop = 7,
    Clean = 8,
}

impl Action {
    pub const ALL: [Action; 9] = [
        Action::Forward,
        Action::Backward,
        Action::StepLeft,
        Action::StepRight,
        Action::RotateLeft,
        Action::RotateRight,
        Action::Fire,
        Action::Noop,
        Action::Clean,
    ];

    pub fn from_id(id: usize, game: GameKind) -> Result<Self, EnvError> {
        if id < game.num_actions() {
            Ok(Self::ALL[id])
        } else {
            Err(EnvError::UnknownAction { id, game })
        }
    }

    pub fn id(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamShape {
    pub length: u32,
    /// Lanes across the beam; odd, centred on the shooter.
    pub width: u32,
}

/// Harvest regrowth: a dead spawn point revives with `probs[bucket(k)]` where
/// `k` counts live apples within `radius` (L2) and buckets are
/// `k = 0`, `1..=2`, `3..=4`, `>= 5`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegrowthTable {
    pub radius: f64,
    pub probs: [f64; 4],
}

impl RegrowthTable {
    pub fn probability(&self, live_neighbors: usize) -> f64 {
        match live_neighbors {
            0 => self.probs[0],
            1 | 2 => self.probs[1],
            3 | 4 => self.probs[2],
            _ => self.probs[3],
        }
    }
}

impl Default for RegrowthTable {
    fn default() -> Self {
        RegrowthTable { radius: 2.0, probs: [0.0, 0.005, 0.02, 0.05] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WasteParams {
    /// Apple spawn probability per free spawn point at zero waste.
    pub apple_base_rate: f64,
    /// Waste density at and above which apples stop spawning.
    pub saturation_threshold: f64,
    /// Probability per step that one clean aquifer cell becomes polluted.
    pub spawn_prob: f64,
    /// Waste stops accumulating once density reaches this cap.
    pub cap: f64,
    pub initial_fraction: f64,
}

impl Default for WasteParams {
    fn default() -> Self {
        WasteParams { apple_base_rate: 0.05, saturation_threshold: 0.4, spawn_prob: 0.5, cap: 1.0, initial_fraction: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub game: GameKind,
    pub episode_len: u32,
    pub apple_reward: f64,
    pub fire_cost: f64,
    pub hit_penalty: f64,
    pub hit_freeze: u32,
    pub fire_beam: BeamShape,
    pub clean_beam: BeamShape,
    pub regrowth: RegrowthTable,
    pub waste: WasteParams,
    /// Fraction of spawn points holding an apple at reset.
    pub initial_apple_fraction: f64,
    /// Side of the egocentric observation window (odd).
    pub view_size: u32,
}

impl EnvConfig {
    pub fn harvest() -> Self {
        EnvConfig {
            game: GameKind::Harvest,
            episode_len: 1000,
            apple_reward: 1.0,
            fire_cost: 1.0,
            hit_penalty: 50.0,
            hit_freeze: 25,
            fire_beam: BeamShape { length: 5, width: 1 },
            clean_beam: BeamShape { length: 3, width: 3 },
            regrowth: RegrowthTable::default(),
            waste: WasteParams::default(),
            initial_apple_fraction: 1.0,
            view_size: 7,
        }
    }

    pub fn cleanup() -> Self {
        EnvConfig { game: GameKind::Cleanup, initial_apple_fraction: 0.0, ..Self::harvest() }
    }

    pub fn for_game(game: GameKind) -> Self {
        match game {
            GameKind::Harvest => Self::harvest(),
            GameKind::Cleanup => Self::cleanup(),
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::Config(m.to_string()));
        if self.episode_len == 0 {
            return bad("episode_len must be positive");
        }
        if self.view_size == 0 || self.view_size.is_multiple_of(2) {
            return bad("view_size must be odd");
        }
        if self.fire_beam.width.is_multiple_of(2) || self.clean_beam.width.is_multiple_of(2) {
            return bad("beam widths must be odd");
        }
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if !self.regrowth.probs.iter().all(|&p| unit(p)) {
            return bad("regrowth probabilities must lie in [0, 1]");
        }
        let w = &self.waste;
        if !(unit(w.apple_base_rate) && unit(w.spawn_prob) && unit(w.cap) && unit(w.initial_fraction)) {
            return bad("waste rates and fractions must lie in [0, 1]");
        }
        if w.saturation_threshold <= 0.0 {
            return bad("saturation_threshold must be positive");
        }
        if !unit(self.initial_apple_fraction) {
            return bad("initial_apple_fraction must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        (self.view_size * self.view_size) as usize * OBS_CHANNELS
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_ids() {
        assert_eq!(Action::from_id(6, GameKind::Harvest).unwrap(), Action::Fire);
        assert!(Action::from_id(8, GameKind::Harvest).is_err());
        assert_eq!(Action::from_id(8, GameKind::Cleanup).unwrap(), Action::Clean);
        assert!(Action::from_id(9, GameKind::Cleanup).is_err());
        for (i, a) in Action::ALL.iter().enumerate() {
            assert_eq!(a.id(), i);
        }
    }

    #[test]
    fn regrowth_buckets() {
        let t = RegrowthTable::default();
        assert_eq!(t.probability(0), 0.0);
        assert_eq!(t.probability(2), 0.005);
        assert_eq!(t.probability(3), 0.02);
        assert_eq!(t.probability(9), 0.05);
    }

    #[test]
    fn obs_dim_default() {
        assert_eq!(EnvConfig::harvest().obs_dim(), 245);
    }

    #[test]
    fn validation() {
        assert!(EnvConfig::harvest().validate().is_ok());
        let mut c = EnvConfig::cleanup();
        c.view_size = 4;
        assert!(c.validate().is_err());
    }
}
