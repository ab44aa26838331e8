use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::{rollout, AnyPolicy, LearnError, Policy, PolicySpec, RolloutContext, ShapingMode, Transition, UpdateStats};
use crate::metrics::EpisodeLog;
use crate::rng::stream;
use crate::shaping::PreferenceProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub policy: PolicySpec,
    /// Rounded up to whole episodes.
    pub total_steps: u64,
    pub checkpoint_every: u64,
    pub checkpoint_dir: Option<PathBuf>,
    /// Written into every checkpoint header.
    pub config_hash: String,
}

impl TrainConfig {
    pub fn new(policy: PolicySpec, total_steps: u64) -> Self {
        TrainConfig { policy, total_steps, checkpoint_every: 50, checkpoint_dir: None, config_hash: String::new() }
    }

    pub fn episodes(&self, episode_len: u32) -> u64 {
        self.total_steps.div_ceil(u64::from(episode_len))
    }
}

/// Learning-curve entry: mean per-agent update statistics of one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    /// Episodes completed when the update ran.
    pub episodes: u64,
    pub agents: Vec<UpdateStats>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub policies: Vec<AnyPolicy>,
    pub logs: Vec<EpisodeLog>,
    pub updates: Vec<UpdateRecord>,
    pub checkpoints: Vec<PathBuf>,
}

/// Resumable training loop. A batch is one episode per worker; after each
/// batch every agent updates on its own transitions.
pub struct Trainer {
    ctx: RolloutContext,
    config: TrainConfig,
    profile: Option<PreferenceProfile>,
    policies: Vec<AnyPolicy>,
    next_episode: u64,
    total_episodes: u64,
    logs: Vec<EpisodeLog>,
    updates: Vec<UpdateRecord>,
    checkpoints: Vec<PathBuf>,
}

impl Trainer {
    pub fn new(ctx: RolloutContext, config: TrainConfig) -> Result<Self, LearnError> {
        ctx.validate()?;
        let total_episodes = config.episodes(ctx.env.episode_len);
        if total_episodes == 0 {
            return Err(LearnError::Run("total_steps must cover at least one episode".into()));
        }
        let policies = (0..ctx.n_agents)
            .map(|i| config.policy.build(ctx.obs_dim(), ctx.n_actions(), ctx.seed, i))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Trainer {
            ctx,
            config,
            profile: None,
            policies,
            next_episode: 0,
            total_episodes,
            logs: Vec::new(),
            updates: Vec::new(),
            checkpoints: Vec::new(),
        })
    }

    /// Restores policies and the episode counter from a checkpoint.
    pub fn resume(&mut self, ckpt: Checkpoint) -> Result<(), LearnError> {
        ckpt.verify(&self.config.config_hash)?;
        if ckpt.policies.len() != self.ctx.n_agents {
            return Err(LearnError::Checkpoint(format!("{} policies for {} agents", ckpt.policies.len(), self.ctx.n_agents)));
        }
        self.policies = ckpt.policies;
        self.next_episode = ckpt.episode;
        self.profile = ckpt.profile;
        Ok(())
    }

    /// Swaps the shaping used from the next batch on, recording the profile for checkpoints.
    pub fn set_shaping(&mut self, shaping: ShapingMode, profile: Option<PreferenceProfile>) {
        self.ctx.shaping = shaping;
        self.profile = profile;
    }

    pub fn context(&self) -> &RolloutContext {
        &self.ctx
    }

    pub fn policies(&self) -> &[AnyPolicy] {
        &self.policies
    }

    pub fn logs(&self) -> &[EpisodeLog] {
        &self.logs
    }

    pub fn episodes_done(&self) -> u64 {
        self.next_episode
    }

    pub fn total_episodes(&self) -> u64 {
        self.total_episodes
    }

    pub fn is_finished(&self) -> bool {
        self.next_episode >= self.total_episodes
    }

    /// Trains for up to `k` more episodes; returns the logs of those episodes.
    pub fn run_episodes(&mut self, k: u64) -> Result<&[EpisodeLog], LearnError> {
        let first_log = self.logs.len();
        let stop = (self.next_episode + k).min(self.total_episodes);
        while self.next_episode < stop {
            let batch_end = (self.next_episode + self.ctx.workers as u64).min(stop);
            let records = match rollout(&self.ctx, &self.policies, self.next_episode..batch_end, true) {
                Ok(r) => r,
                Err(LearnError::Worker { episode, source, mut partial }) => {
                    let mut all = std::mem::take(&mut self.logs);
                    all.append(&mut partial);
                    return Err(LearnError::Worker { episode, source, partial: all });
                }
                Err(e) => return Err(e),
            };
            let mut per_agent: Vec<Vec<&[Transition]>> = vec![Vec::with_capacity(records.len()); self.ctx.n_agents];
            for r in &records {
                let traj = r.trajectory.as_ref().expect("trajectories requested");
                for (i, t) in traj.agents.iter().enumerate() {
                    per_agent[i].push(t);
                }
            }
            let update_index = self.next_episode;
            let seed = self.ctx.seed;
            let n = self.ctx.n_agents as u64;
            let mut jobs: Vec<(&mut AnyPolicy, Vec<&[Transition]>, Option<Result<UpdateStats, LearnError>>)> =
                self.policies.iter_mut().zip(per_agent).map(|(p, eps)| (p, eps, None)).collect();
            self.ctx.exec.for_each_mut(&mut jobs, |agent, (policy, eps, out)| {
                let mut rng = stream(seed, "update", update_index * n + agent as u64);
                *out = Some(policy.update(eps, &mut rng));
            });
            let mut stats = Vec::with_capacity(jobs.len());
            for (agent, (_, _, out)) in jobs.into_iter().enumerate() {
                let s = out.expect("update ran")?;
                if !s.loss.is_finite() {
                    return Err(LearnError::Divergence { agent, episode: batch_end, loss: s.loss });
                }
                stats.push(s);
            }
            self.logs.extend(records.into_iter().map(|r| r.log));
            self.updates.push(UpdateRecord { episodes: batch_end, agents: stats });
            let crossed = batch_end / self.config.checkpoint_every.max(1) > self.next_episode / self.config.checkpoint_every.max(1);
            self.next_episode = batch_end;
            if crossed || self.is_finished() {
                self.write_checkpoint()?;
            }
        }
        Ok(&self.logs[first_log..])
    }

    fn write_checkpoint(&mut self) -> Result<(), LearnError> {
        let Some(dir) = &self.config.checkpoint_dir else { return Ok(()) };
        std::fs::create_dir_all(dir)?;
        let ckpt = Checkpoint::new(&self.config.config_hash, self.next_episode, self.profile.clone(), self.policies.clone());
        let path = dir.join(format!("checkpoint_{:06}.json", self.next_episode));
        ckpt.save(&path)?;
        self.checkpoints.push(path);
        Ok(())
    }

    pub fn finish(self) -> TrainOutput {
        TrainOutput { policies: self.policies, logs: self.logs, updates: self.updates, checkpoints: self.checkpoints }
    }
}

/// Trains fresh policies for `config.total_steps` steps.
pub fn train(ctx: RolloutContext, config: TrainConfig) -> Result<TrainOutput, LearnError> {
    let mut t = Trainer::new(ctx, config)?;
    let total = t.total_episodes();
    t.run_episodes(total)?;
    Ok(t.finish())
}
