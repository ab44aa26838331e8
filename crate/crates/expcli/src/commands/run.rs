use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use ssdnet::learn::{LearnError, PbtRun, RolloutContext, ShapingMode, TrainConfig, TrainOutput, Trainer, UpdateRecord};
use ssdnet::metrics::{bci_summary, episode_start, utilitarian, AgentEpisode, EpisodeLog, RewardBasis, Stage};
use ssdnet::shaping::{resolve_portfolio, PreferenceProfile};

use crate::config::{Resolved, RunConfig};
use crate::error::{CliError, Result};
use crate::logs::{episode_rows, write_csv};
use crate::report::{assemble, RunReport, SeedReport, SeedStatus, EFFECTIVE_CONFIG_FILE};

pub const EPISODE_LOG: &str = "episodes.csv";
pub const UPDATE_LOG: &str = "updates.csv";
pub const PROFILE_LOG: &str = "profiles.csv";
pub const STAGE_METRICS: &str = "stage_metrics.csv";

pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: RunReport,
}

#[derive(Serialize)]
struct UpdateRow {
    episodes: u64,
    agent_id: usize,
    loss: f64,
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    samples: usize,
}

#[derive(Serialize)]
struct ProfileRow {
    seed: u64,
    episode: u64,
    agent_id: usize,
    alpha: f64,
    beta: f64,
    omega: f64,
}

#[derive(Serialize)]
struct StageMetricRow<'a> {
    topology: &'a str,
    preference: &'a str,
    seed: u64,
    stage: String,
    metric: &'static str,
    value: f64,
}

/// What one seed produced, complete or not.
struct SeedResult {
    seed: u64,
    logs: Vec<EpisodeLog>,
    updates: Vec<UpdateRecord>,
    checkpoints: Vec<PathBuf>,
    profiles: Option<Vec<(u64, PreferenceProfile)>>,
    error: Option<String>,
}

fn seed_dir(seed: u64) -> PathBuf {
    PathBuf::from(format!("seed_{seed}"))
}

/// Trains every seed, writes per-seed logs, then assembles and writes the
/// report. A failed seed keeps the episodes it finished and is marked in
/// the report; the outcome is still `Ok` so callers can inspect it.
pub fn cmd_run(cfg: &RunConfig, root: Option<&Path>) -> Result<RunOutcome> {
    let resolved = cfg.resolve()?;
    let hash = cfg.hash();
    let dir = cfg.output_dir(root);
    std::fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
    let echo = dir.join(EFFECTIVE_CONFIG_FILE);
    std::fs::write(&echo, format!("# config_hash={hash}\n{}", cfg.to_toml())).map_err(CliError::io(&echo))?;

    let portfolios = resolve_portfolio(&resolved.network, &resolved.profile, &resolved.mapping).map_err(CliError::config)?;
    let template = RolloutContext {
        map: Arc::new(resolved.map.clone()),
        env: Arc::new(cfg.env.params.clone()),
        n_agents: resolved.network.n(),
        shaping: ShapingMode::Shaped(portfolios),
        seed: 0,
        workers: cfg.run.workers,
        exec: cfg.run.exec,
    };
    let train = TrainConfig {
        policy: cfg.learner.clone(),
        total_steps: cfg.run.total_steps,
        checkpoint_every: cfg.run.checkpoint_every,
        checkpoint_dir: Some(dir.clone()),
        config_hash: hash.clone(),
    };

    let results = match &cfg.pbt {
        None => cfg.run.seed_exec.map(cfg.run.seeds.clone(), |seed| {
            let ctx = RolloutContext { seed, ..template.clone() };
            let train = TrainConfig { checkpoint_dir: Some(dir.join(seed_dir(seed))), ..train.clone() };
            train_seed(ctx, train, &resolved)
        }),
        Some(pbt) => {
            let run = PbtRun::new(
                pbt.clone(),
                template,
                train,
                resolved.network.clone(),
                resolved.mapping.clone(),
                resolved.profile.clone(),
                &cfg.run.seeds,
            )
            .map_err(CliError::config)?;
            match run.run() {
                Ok(out) => cfg
                    .run
                    .seeds
                    .iter()
                    .zip(out.members)
                    .map(|(&seed, m)| SeedResult {
                        seed,
                        logs: m.output.logs,
                        updates: m.output.updates,
                        checkpoints: m.output.checkpoints,
                        profiles: Some(m.profiles),
                        error: None,
                    })
                    .collect(),
                Err(e) => cfg
                    .run
                    .seeds
                    .iter()
                    .map(|&seed| SeedResult {
                        seed,
                        logs: Vec::new(),
                        updates: Vec::new(),
                        checkpoints: Vec::new(),
                        profiles: None,
                        error: Some(format!("population run failed: {e}")),
                    })
                    .collect(),
            }
        }
    };

    let mut seeds = Vec::with_capacity(results.len());
    let mut complete = Vec::new();
    for r in results {
        let report = write_seed(&dir, &hash, &r)?;
        if r.error.is_none() {
            complete.push((r.seed, r.logs));
        }
        seeds.push(report);
    }
    let report = assemble(cfg, &resolved, seeds, &complete, cfg.run.exec)?;
    report.save(&dir)?;
    write_stage_metrics(&dir.join(STAGE_METRICS), &report, &complete, &resolved, cfg.metrics.bci_basis)?;
    Ok(RunOutcome { dir, report })
}

fn train_seed(ctx: RolloutContext, train: TrainConfig, resolved: &Resolved) -> SeedResult {
    let seed = ctx.seed;
    let failed = |error: LearnError, logs| SeedResult {
        seed,
        logs,
        updates: Vec::new(),
        checkpoints: Vec::new(),
        profiles: None,
        error: Some(error.to_string()),
    };
    let mut trainer = match Trainer::new(ctx, train) {
        Ok(t) => t,
        Err(e) => return failed(e, Vec::new()),
    };
    trainer.set_shaping(trainer.context().shaping.clone(), Some(resolved.profile.clone()));
    let total = trainer.total_episodes();
    match trainer.run_episodes(total).map(|_| ()) {
        Ok(()) => {
            let TrainOutput { logs, updates, checkpoints, .. } = trainer.finish();
            SeedResult { seed, logs, updates, checkpoints, profiles: None, error: None }
        }
        Err(LearnError::Worker { episode, source, partial }) => {
            failed(LearnError::Run(format!("episode {episode}: {source}")), partial)
        }
        Err(e) => {
            let logs = trainer.logs().to_vec();
            let TrainOutput { updates, checkpoints, .. } = trainer.finish();
            SeedResult { updates, checkpoints, ..failed(e, logs) }
        }
    }
}

/// Writes one seed's files into its own directory.
fn write_seed(dir: &Path, hash: &str, r: &SeedResult) -> Result<SeedReport> {
    let rel = seed_dir(r.seed);
    let abs = dir.join(&rel);
    std::fs::create_dir_all(&abs).map_err(CliError::io(&abs))?;
    let rows = write_csv(&abs.join(EPISODE_LOG), hash, episode_rows(&r.logs))?;
    let updates = r.updates.iter().flat_map(|u| {
        u.agents.iter().enumerate().map(move |(agent_id, s)| UpdateRow {
            episodes: u.episodes,
            agent_id,
            loss: s.loss,
            policy_loss: s.policy_loss,
            value_loss: s.value_loss,
            entropy: s.entropy,
            samples: s.samples,
        })
    });
    write_csv(&abs.join(UPDATE_LOG), hash, updates)?;
    let profile_log = match &r.profiles {
        None => None,
        Some(history) => {
            let rows = history.iter().flat_map(|(episode, p)| {
                p.weights().iter().enumerate().map(move |(agent_id, w)| ProfileRow {
                    seed: r.seed,
                    episode: *episode,
                    agent_id,
                    alpha: w.alpha,
                    beta: w.beta,
                    omega: w.omega,
                })
            });
            write_csv(&abs.join(PROFILE_LOG), hash, rows)?;
            Some(rel.join(PROFILE_LOG))
        }
    };
    let checkpoints = r.checkpoints.iter().map(|p| p.strip_prefix(dir).unwrap_or(p).to_path_buf()).collect();
    Ok(SeedReport {
        seed: r.seed,
        status: match &r.error {
            None => SeedStatus::Ok,
            Some(error) => SeedStatus::Failed { error: error.clone() },
        },
        episode_log: rel.join(EPISODE_LOG),
        rows: 0..rows,
        episodes: r.logs.len() as u64,
        update_log: rel.join(UPDATE_LOG),
        checkpoints,
        profile_log,
    })
}

/// Long-format metrics keyed by topology, preference, seed and stage.
fn write_stage_metrics(
    path: &Path,
    report: &RunReport,
    logs: &[(u64, Vec<EpisodeLog>)],
    resolved: &Resolved,
    basis: RewardBasis,
) -> Result<()> {
    let len = report.episode_len;
    let mut rows = Vec::new();
    for (seed, l) in logs {
        for stage in Stage::ALL {
            let in_stage: Vec<&EpisodeLog> = l
                .iter()
                .filter(|x| report.windows.stage_of(episode_start(x.episode, len)) == Some(stage))
                .collect();
            if in_stage.is_empty() {
                continue;
            }
            let count = in_stage.len() as f64;
            let total = |f: fn(&AgentEpisode) -> f64| {
                in_stage.iter().flat_map(|x| x.agents.iter()).map(f).sum::<f64>()
            };
            let bci = bci_summary(in_stage.iter().copied(), &resolved.network.profile, basis).map_err(CliError::runtime)?;
            let mut push = |metric, value| {
                rows.push(StageMetricRow {
                    topology: &report.topology.label,
                    preference: &report.preference,
                    seed: *seed,
                    stage: stage.to_string(),
                    metric,
                    value,
                })
            };
            push("episodes", count);
            push("utilitarian_mean", in_stage.iter().map(|x| utilitarian(x)).sum::<f64>() / count);
            push("apples", total(|a| f64::from(a.apples)));
            push("env_reward", total(|a| a.env_reward));
            push("fire_count", total(|a| f64::from(a.fire_count)));
            push("clean_count", total(|a| f64::from(a.clean_count)));
            if let (Some(q), Some(m)) = (bci.quartiles, bci.mean) {
                push("bci_mean", m);
                push("bci_median", q.median);
            }
            push("bci_dropped", bci.dropped as f64);
        }
    }
    write_csv(path, &report.config_hash, rows)?;
    Ok(())
}
