//! Run reports: one JSON document per run directory. Every number in it is
//! computed from the per-seed episode logs it names, and the stage row spans
//! locate each window inside those files.

use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use ssdnet::analysis::summarize;
use ssdnet::dilemmas::GameKind;
use ssdnet::metrics::{
    bci_for_log, bci_summary, episode_start, sci, stage_aggregate, utilitarian, BciSummary, EpisodeLog, LogField,
    Stage, StageStat, StageTable, StageWindows,
};
use ssdnet::topology::Tctr;
use ssdnet::Exec;

use crate::config::{Resolved, RunConfig};
use crate::error::{CliError, Result};
use crate::logs::{read_episodes, require_hash};

pub const REPORT_FORMAT: &str = "ssdnet-run-report";
pub const REPORT_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";
pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.toml";
pub const BASELINE_PROTOCOL: &str = "network-free and preference-free protocol";
pub const BCI_NOTE: &str = "per-episode BCI over stage 3; zero-reward episodes dropped and counted";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum SeedStatus {
    Ok,
    Failed { error: String },
}

/// Files of one seed, relative to the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub status: SeedStatus,
    pub episode_log: PathBuf,
    /// Data rows of `episode_log`, header excluded.
    pub rows: Range<u64>,
    pub episodes: u64,
    pub update_log: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyInfo {
    pub label: String,
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub bridging: Vec<f64>,
    pub tctr: Tctr,
}

/// Episodes of one stage window and their data rows in every complete episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRows {
    pub stage: String,
    pub episodes: Range<u64>,
    pub rows: Range<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedValue {
    pub seed: u64,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BciReport {
    pub note: String,
    /// Pooled over all complete seeds.
    pub summary: BciSummary,
    /// Mean per-episode BCI of each seed.
    pub per_seed: Vec<SeedValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSeries {
    pub seed: u64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilitarianReport {
    /// Mean utilitarian return over stage-3 episodes, per seed.
    pub stage3_per_seed: Vec<SeedValue>,
    /// Utilitarian return of every episode, per seed.
    pub series: Vec<SeedSeries>,
}

/// Stage-3 mean extrinsic reward of one agent across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentReward {
    pub agent_id: usize,
    pub mean: f64,
    /// `None` with fewer than two complete seeds.
    pub ci95: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    /// Hash of the environment and topology only; analyses require it to match.
    pub env_fingerprint: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<String>,
    pub game: GameKind,
    pub preference: String,
    pub topology: TopologyInfo,
    pub episode_len: u32,
    pub episodes: u64,
    pub steps: u64,
    pub windows: StageWindows,
    pub stage_rows: Vec<StageRows>,
    pub effective_config: String,
    pub seeds: Vec<SeedReport>,
    pub stage_tables: Vec<StageTable>,
    /// Why `stage_tables` is empty, if it is.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_note: Option<String>,
    pub bci: Option<BciReport>,
    /// Cleanup only: SCI of each agent over stage 3, averaged across seeds.
    pub sci: Option<Vec<f64>>,
    pub utilitarian: UtilitarianReport,
    pub agent_env_reward: Vec<AgentReward>,
}

impl RunReport {
    pub fn all_ok(&self) -> bool {
        self.seeds.iter().all(|s| s.status == SeedStatus::Ok)
    }

    pub fn complete_seeds(&self) -> impl Iterator<Item = &SeedReport> {
        self.seeds.iter().filter(|s| s.status == SeedStatus::Ok)
    }

    /// Loads `report.json` from a run directory or the file itself; returns the run directory too.
    pub fn load(path: &Path) -> Result<(PathBuf, RunReport)> {
        let file = if path.is_dir() { path.join(REPORT_FILE) } else { path.to_path_buf() };
        let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        let text = std::fs::read_to_string(&file)
            .map_err(|e| CliError::config(format!("cannot read report {}: {e}", file.display())))?;
        let report: RunReport =
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", file.display())))?;
        if report.format != REPORT_FORMAT || report.version != REPORT_VERSION {
            return Err(CliError::config(format!("{} is not a version {REPORT_VERSION} run report", file.display())));
        }
        Ok((dir, report))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(REPORT_FILE);
        let json = serde_json::to_string_pretty(self).map_err(CliError::runtime)?;
        std::fs::write(&path, json).map_err(CliError::io(&path))
    }

    /// Episode logs of the complete seeds, each file checked against the report hash.
    pub fn load_logs(&self, dir: &Path) -> Result<Vec<(u64, Vec<EpisodeLog>)>> {
        self.complete_seeds()
            .map(|s| {
                let path = dir.join(&s.episode_log);
                let (hash, logs) = read_episodes(&path)?;
                require_hash(&path, &hash, &self.config_hash)?;
                Ok((s.seed, logs))
            })
            .collect()
    }
}

/// Hash of the environment section and the edge list.
pub fn env_fingerprint(cfg: &RunConfig, resolved: &Resolved) -> String {
    let value = serde_json::json!({ "env": cfg.env, "edges": resolved.network.topology.edges() });
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

/// Episodes whose start step falls in `window`.
pub fn window_episodes(window: &Range<u64>, episode_len: u32) -> Range<u64> {
    let len = u64::from(episode_len);
    window.start.div_ceil(len)..window.end.div_ceil(len)
}

fn in_stage(log: &EpisodeLog, windows: &StageWindows, episode_len: u32, stage: Stage) -> bool {
    windows.stage_of(episode_start(log.episode, episode_len)) == Some(stage)
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Builds the report from the complete seeds' logs. `seeds` lists every
/// seed, failed ones included; `logs` holds only the complete ones.
pub fn assemble(
    cfg: &RunConfig,
    resolved: &Resolved,
    seeds: Vec<SeedReport>,
    logs: &[(u64, Vec<EpisodeLog>)],
    exec: Exec,
) -> Result<RunReport> {
    let episode_len = cfg.env.params.episode_len;
    let windows = resolved.windows.clone();
    let profile = &resolved.network.profile;
    let n = resolved.network.n() as u64;
    let stage_rows = Stage::ALL
        .iter()
        .map(|&s| {
            let episodes = window_episodes(windows.window(s), episode_len).start.min(resolved.episodes)
                ..window_episodes(windows.window(s), episode_len).end.min(resolved.episodes);
            StageRows { stage: s.to_string(), rows: episodes.start * n..episodes.end * n, episodes }
        })
        .collect();

    let all: Vec<EpisodeLog> = logs.iter().flat_map(|(_, l)| l.iter().cloned()).collect();
    let mut fields = vec![LogField::Apples, LogField::EnvReward, LogField::FireCount];
    if cfg.env.game == GameKind::Cleanup {
        fields.push(LogField::CleanCount);
    }
    let mut stage_tables = Vec::new();
    let mut stage_note = None;
    if all.is_empty() {
        stage_note = Some("no complete seeds".to_string());
    } else {
        'fields: for &field in &fields {
            for stat in [StageStat::MeanSummed, StageStat::Median, StageStat::Iqr] {
                match stage_aggregate(&all, episode_len, &windows, field, stat, exec) {
                    Ok(t) => stage_tables.push(t),
                    Err(e) => {
                        stage_tables.clear();
                        stage_note = Some(e.to_string());
                        break 'fields;
                    }
                }
            }
        }
    }

    let stage3 = |l: &&EpisodeLog| in_stage(l, &windows, episode_len, Stage::Convergence);
    let bci = if all.is_empty() {
        None
    } else {
        let summary = bci_summary(all.iter().filter(stage3), profile, cfg.metrics.bci_basis).map_err(CliError::runtime)?;
        let mut per_seed = Vec::new();
        for (seed, l) in logs {
            let mut values = Vec::new();
            for log in l.iter().filter(stage3) {
                if let Some(v) = bci_for_log(log, profile, cfg.metrics.bci_basis).map_err(CliError::runtime)?.value {
                    values.push(v);
                }
            }
            per_seed.push(SeedValue { seed: *seed, value: mean(&values) });
        }
        Some(BciReport { note: BCI_NOTE.to_string(), summary, per_seed })
    };

    let sci = if cfg.env.game == GameKind::Cleanup && !logs.is_empty() {
        let mut per_agent = vec![0.0; n as usize];
        for (_, l) in logs {
            for (agent, acc) in per_agent.iter_mut().enumerate() {
                let (effort, apples) = l.iter().filter(stage3).fold((0u64, 0u64), |(e, a), log| {
                    (e + u64::from(log.agents[agent].clean_count), a + u64::from(log.agents[agent].apples))
                });
                *acc += sci(effort, apples, cfg.metrics.sci_epsilon).map_err(CliError::runtime)?;
            }
        }
        Some(per_agent.into_iter().map(|s| s / logs.len() as f64).collect())
    } else {
        None
    };

    let utilitarian_report = UtilitarianReport {
        stage3_per_seed: logs
            .iter()
            .map(|(seed, l)| {
                let v: Vec<f64> = l.iter().filter(stage3).map(utilitarian).collect();
                SeedValue { seed: *seed, value: mean(&v) }
            })
            .collect(),
        series: logs
            .iter()
            .map(|(seed, l)| SeedSeries { seed: *seed, values: l.iter().map(utilitarian).collect() })
            .collect(),
    };

    let mut agent_env_reward = Vec::new();
    for agent in 0..n as usize {
        let per_seed: Vec<f64> = logs
            .iter()
            .filter_map(|(_, l)| mean(&l.iter().filter(stage3).map(|x| x.agents[agent].env_reward).collect::<Vec<_>>()))
            .collect();
        let Some(m) = mean(&per_seed) else { continue };
        let ci95 = summarize(&agent.to_string(), &per_seed).ok().map(|s| s.ci95);
        agent_env_reward.push(AgentReward { agent_id: agent, mean: m, ci95 });
    }

    Ok(RunReport {
        format: REPORT_FORMAT.to_string(),
        version: REPORT_VERSION,
        config_hash: cfg.hash(),
        env_fingerprint: env_fingerprint(cfg, resolved),
        name: cfg.name.clone(),
        protocol: resolved.profile.is_baseline().then(|| BASELINE_PROTOCOL.to_string()),
        game: cfg.env.game,
        preference: cfg.preference_label(),
        topology: TopologyInfo {
            label: cfg.topology_label(),
            n: resolved.network.n(),
            edges: resolved.network.topology.edges().to_vec(),
            bridging: profile.bridging.clone(),
            tctr: resolved.network.tctr(),
        },
        episode_len,
        episodes: resolved.episodes,
        steps: resolved.steps,
        windows,
        stage_rows,
        effective_config: cfg.to_toml(),
        seeds,
        stage_tables,
        stage_note,
        bci,
        sci,
        utilitarian: utilitarian_report,
        agent_env_reward,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_episodes_use_start_steps() {
        assert_eq!(window_episodes(&(100..1000), 50), 2..20);
        assert_eq!(window_episodes(&(0..120), 50), 0..3);
        assert_eq!(window_episodes(&(6000..10000), 50), 120..200);
    }
}
