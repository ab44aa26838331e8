//! Desk-scale independent learners on shaped rewards.
//!
//! Every agent owns its policy and only ever sees its own observations,
//! actions and `r_tot`. Rollouts run in parallel over disjoint env
//! instances; updates happen per agent at batch boundaries.

mod actor_critic;
mod checkpoint;
mod pbt;
mod rollout;
mod scripted;
mod tabular;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dilemmas::EnvError;
use crate::metrics::EpisodeLog;
use crate::rng::StreamRng;
use crate::shaping::ShapingError;

pub use actor_critic::{ActorCritic, Sample};
pub use checkpoint::{load_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use pbt::{pbt_schedule, PbtConfig, PbtMember, PbtOutput, PbtRun};
pub use rollout::{rollout, EpisodeRecord, RolloutContext, ShapingMode};
pub use scripted::Scripted;
pub use tabular::TabularQ;
pub use train::{train, TrainConfig, TrainOutput, Trainer, UpdateRecord};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("invalid policy spec: {0}")]
    Spec(String),
    #[error("invalid run parameters: {0}")]
    Run(String),
    #[error("env failure in episode {episode}: {source}")]
    Worker {
        episode: u64,
        source: EnvError,
        /// Logs of episodes that finished before the failure, in episode order.
        partial: Vec<EpisodeLog>,
    },
    #[error("agent {agent} diverged after episode {episode}: loss = {loss}")]
    Divergence { agent: usize, episode: u64, loss: f64 },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Shaping(#[from] ShapingError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One step of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Active indices of the binary observation.
    pub obs: Vec<u32>,
    pub action: u8,
    pub r_tot: f64,
    pub r_env: f64,
    pub done: bool,
}

/// Per-agent transition sequences of one episode, all of equal length.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub agents: Vec<Vec<Transition>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.agents.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub samples: usize,
}

/// The learner interface. `act` must not mutate, so one policy can serve
/// several rollout workers at once; `update` sees only the owning agent's
/// own transitions.
pub trait Policy: Send + Sync {
    fn act(&self, obs: &[u32], rng: &mut StreamRng) -> usize;

    fn update(&mut self, episodes: &[&[Transition]], rng: &mut StreamRng) -> Result<UpdateStats, LearnError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    ScriptedRandom,
    ScriptedStill,
    TabularQ,
    ActorCritic,
}

impl std::str::FromStr for PolicyKind {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scripted-random" => Ok(PolicyKind::ScriptedRandom),
            "scripted-still" => Ok(PolicyKind::ScriptedStill),
            "tabular-q" => Ok(PolicyKind::TabularQ),
            "actor-critic" => Ok(PolicyKind::ActorCritic),
            other => Err(LearnError::Spec(format!("unknown policy kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub gamma: f64,
    /// Actor-critic samples per Adam step.
    pub minibatch: usize,
    /// Tabular exploration: linear decay from `epsilon_start` to `epsilon_end`
    /// over `epsilon_decay_episodes` trained episodes.
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: u64,
}

impl PolicySpec {
    pub fn actor_critic() -> Self {
        PolicySpec {
            kind: PolicyKind::ActorCritic,
            hidden: vec![64],
            learning_rate: 1e-3,
            entropy_coef: 0.01,
            value_coef: 0.5,
            gamma: 0.99,
            minibatch: 500,
            epsilon_start: 0.0,
            epsilon_end: 0.0,
            epsilon_decay_episodes: 1,
        }
    }

    pub fn tabular_q() -> Self {
        PolicySpec {
            kind: PolicyKind::TabularQ,
            hidden: Vec::new(),
            learning_rate: 0.1,
            entropy_coef: 0.0,
            value_coef: 0.0,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_episodes: 100,
            ..Self::actor_critic()
        }
    }

    pub fn scripted(kind: PolicyKind) -> Self {
        PolicySpec { kind, hidden: Vec::new(), ..Self::actor_critic() }
    }

    pub fn for_kind(kind: PolicyKind) -> Self {
        match kind {
            PolicyKind::ActorCritic => Self::actor_critic(),
            PolicyKind::TabularQ => Self::tabular_q(),
            k => Self::scripted(k),
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::Spec(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return bad("loss coefficients must be non-negative");
        }
        match self.kind {
            PolicyKind::ActorCritic => {
                if self.hidden.is_empty() || self.hidden.contains(&0) {
                    return bad("actor-critic needs at least one non-empty hidden layer");
                }
                if self.minibatch == 0 {
                    return bad("minibatch must be positive");
                }
            }
            PolicyKind::TabularQ => {
                let unit = |e: f64| (0.0..=1.0).contains(&e);
                if !(unit(self.epsilon_start) && unit(self.epsilon_end)) || self.epsilon_decay_episodes == 0 {
                    return bad("epsilon values must lie in [0, 1] with a positive decay horizon");
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Fresh policy for one agent; initial parameters come from `(seed, agent)`.
    pub fn build(&self, obs_dim: usize, n_actions: usize, seed: u64, agent: usize) -> Result<AnyPolicy, LearnError> {
        self.validate()?;
        Ok(match self.kind {
            PolicyKind::ScriptedRandom => AnyPolicy::Scripted(Scripted::random(n_actions)),
            PolicyKind::ScriptedStill => AnyPolicy::Scripted(Scripted::still()),
            PolicyKind::TabularQ => AnyPolicy::TabularQ(TabularQ::new(self, n_actions)),
            PolicyKind::ActorCritic => AnyPolicy::ActorCritic(ActorCritic::new(self, obs_dim, n_actions, seed, agent)),
        })
    }
}

/// Concrete policies behind one serializable type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnyPolicy {
    Scripted(Scripted),
    TabularQ(TabularQ),
    ActorCritic(ActorCritic),
}

impl Policy for AnyPolicy {
    fn act(&self, obs: &[u32], rng: &mut StreamRng) -> usize {
        match self {
            AnyPolicy::Scripted(p) => p.act(obs, rng),
            AnyPolicy::TabularQ(p) => p.act(obs, rng),
            AnyPolicy::ActorCritic(p) => p.act(obs, rng),
        }
    }

    fn update(&mut self, episodes: &[&[Transition]], rng: &mut StreamRng) -> Result<UpdateStats, LearnError> {
        match self {
            AnyPolicy::Scripted(p) => p.update(episodes, rng),
            AnyPolicy::TabularQ(p) => p.update(episodes, rng),
            AnyPolicy::ActorCritic(p) => p.update(episodes, rng),
        }
    }
}

/// Discounted returns `G_t = r_t + γ G_{t+1}`, reset at `done`.
pub fn discounted_returns(rewards: &[f64], dones: &[bool], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = 0.0;
    for t in (0..rewards.len()).rev() {
        if dones[t] {
            g = 0.0;
        }
        g = rewards[t] + gamma * g;
        out[t] = g;
    }
    out
}
