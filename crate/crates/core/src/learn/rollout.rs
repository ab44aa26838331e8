use std::ops::Range;
use std::sync::Arc;

use rand::Rng;

use super::{LearnError, Policy, Trajectory, Transition};
use crate::dilemmas::{EnvConfig, Env, EnvError, GridMap};
use crate::metrics::EpisodeLog;
use crate::par::Exec;
use crate::rng::stream;
use crate::shaping::Portfolios;

/// How per-step socio rewards are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapingMode {
    Shaped(Portfolios),
    /// No shaping code runs at all; `r_tot = r_env` and socio rewards log as 0.
    Disabled,
}

/// Everything a rollout needs apart from the policies.
#[derive(Debug, Clone)]
pub struct RolloutContext {
    pub map: Arc<GridMap>,
    pub env: Arc<EnvConfig>,
    pub n_agents: usize,
    pub shaping: ShapingMode,
    pub seed: u64,
    pub workers: usize,
    pub exec: Exec,
}

impl RolloutContext {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.workers == 0 {
            return Err(LearnError::Run("worker count must be at least 1".into()));
        }
        if let ShapingMode::Shaped(p) = &self.shaping {
            if p.n() != self.n_agents {
                return Err(LearnError::Run(format!("portfolios cover {} agents, run has {}", p.n(), self.n_agents)));
            }
        }
        self.env.validate()?;
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        self.env.obs_dim()
    }

    pub fn n_actions(&self) -> usize {
        self.env.game.num_actions()
    }

    /// Env seed of a global episode index; independent of which worker runs it.
    pub fn episode_seed(&self, episode: u64) -> u64 {
        stream(self.seed, "episode", episode).random()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub log: EpisodeLog,
    pub trajectory: Option<Trajectory>,
}

/// Runs the episodes in `episodes`, split into `workers` contiguous chunks.
///
/// Each episode's env and action streams are keyed by its global index, so
/// the result is the same for any worker count and any scheduling; records
/// come back sorted by episode.
pub fn rollout<P: Policy>(
    ctx: &RolloutContext,
    policies: &[P],
    episodes: Range<u64>,
    keep_trajectories: bool,
) -> Result<Vec<EpisodeRecord>, LearnError> {
    ctx.validate()?;
    if policies.len() != ctx.n_agents {
        return Err(LearnError::Run(format!("{} policies for {} agents", policies.len(), ctx.n_agents)));
    }
    let total = episodes.end.saturating_sub(episodes.start);
    let workers = (ctx.workers as u64).min(total.max(1));
    let chunk = total.div_ceil(workers);
    let chunks: Vec<Range<u64>> = (0..workers)
        .map(|w| {
            let lo = episodes.start + w * chunk;
            lo.min(episodes.end)..(lo + chunk).min(episodes.end)
        })
        .collect();
    let results = ctx.exec.map(chunks, |range| {
        let mut done = Vec::with_capacity((range.end - range.start) as usize);
        for ep in range {
            match run_episode(ctx, policies, ep, keep_trajectories) {
                Ok(r) => done.push(r),
                Err(e) => return (done, Some((ep, e))),
            }
        }
        (done, None)
    });
    let mut out = Vec::with_capacity(total as usize);
    let mut failure = None;
    for (records, err) in results {
        out.extend(records);
        if failure.is_none() {
            failure = err;
        }
    }
    out.sort_by_key(|r| (r.log.seed, r.log.episode));
    if let Some((episode, source)) = failure {
        return Err(LearnError::Worker { episode, source, partial: out.into_iter().map(|r| r.log).collect() });
    }
    Ok(out)
}

fn run_episode<P: Policy>(
    ctx: &RolloutContext,
    policies: &[P],
    episode: u64,
    keep: bool,
) -> Result<EpisodeRecord, EnvError> {
    let n = ctx.n_agents;
    let mut env = Env::reset(ctx.map.clone(), ctx.env.clone(), n, ctx.episode_seed(episode))?;
    let mut act_rng = stream(ctx.seed, "act", episode);
    let mut log = EpisodeLog::new(ctx.seed, episode, n);
    let len = ctx.env.episode_len as usize;
    let mut traj = Trajectory { agents: if keep { (0..n).map(|_| Vec::with_capacity(len)).collect() } else { Vec::new() } };
    let mut socio = vec![0.0; n];
    let mut actions = vec![0usize; n];
    let mut obs: Vec<Vec<u32>> = Vec::with_capacity(n);
    while !env.done() {
        obs.clear();
        for (i, policy) in policies.iter().enumerate() {
            let o = env.observe(i)?.active();
            actions[i] = policy.act(&o, &mut act_rng);
            obs.push(o);
        }
        let out = env.step(&actions)?;
        match &ctx.shaping {
            ShapingMode::Shaped(p) => p.socio_into(&out.rewards, &mut socio),
            ShapingMode::Disabled => {}
        }
        for i in 0..n {
            let a = &mut log.agents[i];
            let ev = out.events[i];
            a.apples += u32::from(ev.apple_collected);
            a.fire_count += u32::from(ev.fired);
            a.clean_count += u32::from(ev.cleaned);
            a.env_reward += out.rewards[i];
            let r_tot = match &ctx.shaping {
                ShapingMode::Shaped(_) => {
                    a.socio_reward += socio[i];
                    out.rewards[i] + socio[i]
                }
                ShapingMode::Disabled => out.rewards[i],
            };
            if keep {
                traj.agents[i].push(Transition {
                    obs: std::mem::take(&mut obs[i]),
                    action: actions[i] as u8,
                    r_tot,
                    r_env: out.rewards[i],
                    done: out.done,
                });
            }
        }
    }
    Ok(EpisodeRecord { log, trajectory: keep.then_some(traj) })
}
