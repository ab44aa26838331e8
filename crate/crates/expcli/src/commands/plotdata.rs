use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;
use ssdnet::metrics::{bci_summary, episode_start, EpisodeLog, LogField, Stage, StageStat, StageValue};
use ssdnet::topology::Network;
use ssdnet::topology::Topology;

use crate::error::{CliError, Result};
use crate::logs::write_csv_annotated;
use crate::report::RunReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    BaseReward,
    Aggressiveness,
    CleanCount,
    BciDist,
}

impl Figure {
    pub fn as_str(self) -> &'static str {
        match self {
            Figure::BaseReward => "base-reward",
            Figure::Aggressiveness => "aggressiveness",
            Figure::CleanCount => "clean-count",
            Figure::BciDist => "bci-dist",
        }
    }

    fn field(self) -> Option<LogField> {
        match self {
            Figure::BaseReward => Some(LogField::EnvReward),
            Figure::Aggressiveness => Some(LogField::FireCount),
            Figure::CleanCount => Some(LogField::CleanCount),
            Figure::BciDist => None,
        }
    }
}

/// One downsampled point. `color_index` equals the agent id in every figure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesRow {
    pub agent_id: usize,
    pub color_index: usize,
    /// First episode of the block.
    pub episode: u64,
    pub value: f64,
}

/// Per-agent stage sums: sum over the stage's episodes per seed, mean across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageSumRow {
    pub agent_id: usize,
    pub color_index: usize,
    pub stage1: f64,
    pub stage2: f64,
    pub stage3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BciDistRow {
    pub stage: String,
    pub n: usize,
    pub dropped: usize,
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
    pub mean: Option<f64>,
    pub tctr_lower: f64,
    pub tctr_upper: f64,
}

/// Default block size: `max(1, episodes / 500)`.
pub fn default_stride(episodes: u64) -> u64 {
    (episodes / 500).max(1)
}

/// Trailing moving average over `window` points (shorter at the start).
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for i in 0..xs.len() {
        sum += xs[i];
        if i >= w {
            sum -= xs[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}

/// Means of consecutive blocks of `stride` points; a short final block is kept.
pub fn block_means(xs: &[f64], stride: u64) -> Vec<f64> {
    xs.chunks(stride.max(1) as usize).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}

/// Per-agent series of one field, averaged across seeds per episode.
fn seed_mean_series(logs: &[(u64, Vec<EpisodeLog>)], episodes: u64, n: usize, field: LogField) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; episodes as usize]; n];
    let mut counts = vec![0usize; episodes as usize];
    for (_, l) in logs {
        for log in l {
            let e = log.episode as usize;
            counts[e] += 1;
            for (agent, a) in log.agents.iter().enumerate() {
                sums[agent][e] += field.get(a);
            }
        }
    }
    for row in &mut sums {
        for (v, &c) in row.iter_mut().zip(&counts) {
            *v /= c.max(1) as f64;
        }
    }
    sums
}

/// Writes plot-ready CSVs for one figure and returns their paths.
pub fn cmd_plotdata(report_path: &Path, figure: Figure, window: Option<usize>, out: Option<&Path>) -> Result<Vec<PathBuf>> {
    let (dir, report) = RunReport::load(report_path)?;
    if !report.all_ok() {
        return Err(CliError::config(format!("{} is incomplete: some seeds failed", dir.display())));
    }
    if figure == Figure::CleanCount && report.game != ssdnet::dilemmas::GameKind::Cleanup {
        return Err(CliError::config("clean-count needs a Cleanup run"));
    }
    if window == Some(0) {
        return Err(CliError::config("window must be positive"));
    }
    let logs = report.load_logs(&dir)?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| dir.clone());
    std::fs::create_dir_all(&out).map_err(CliError::io(&out))?;
    let stride = default_stride(report.episodes);
    let name = figure.as_str();
    let mut written = Vec::new();

    if let Some(field) = figure.field() {
        let n = report.topology.n;
        let series = seed_mean_series(&logs, report.episodes, n, field);
        let rows: Vec<SeriesRow> = series
            .iter()
            .enumerate()
            .flat_map(|(agent, xs)| {
                let smoothed = window.map_or_else(|| xs.clone(), |w| moving_average(xs, w));
                block_means(&smoothed, stride)
                    .into_iter()
                    .enumerate()
                    .map(move |(k, value)| SeriesRow { agent_id: agent, color_index: agent, episode: k as u64 * stride, value })
                    .collect::<Vec<_>>()
            })
            .collect();
        let notes = [
            ("figure", name.to_string()),
            ("field", serde_json::to_value(field).map(|v| v.as_str().unwrap_or_default().to_string()).unwrap_or_default()),
            ("stride", stride.to_string()),
            ("window", window.map_or("none".to_string(), |w| w.to_string())),
        ];
        let path = out.join(format!("plot_{}.csv", name.replace('-', "_")));
        write_csv_annotated(&path, &report.config_hash, &notes, rows)?;
        written.push(path);

        if figure != Figure::BaseReward {
            let table = report
                .stage_tables
                .iter()
                .find(|t| t.field == field && t.stat == StageStat::MeanSummed)
                .ok_or_else(|| {
                    CliError::config(format!(
                        "report has no stage table for {name}: {}",
                        report.stage_note.as_deref().unwrap_or("not computed")
                    ))
                })?;
            let scalar = |v: &StageValue| match v {
                StageValue::Scalar(x) => *x,
                StageValue::Range { .. } => f64::NAN,
            };
            let rows = table.values.iter().enumerate().map(|(agent, v)| StageSumRow {
                agent_id: agent,
                color_index: agent,
                stage1: scalar(&v[0]),
                stage2: scalar(&v[1]),
                stage3: scalar(&v[2]),
            });
            let path = out.join(format!("plot_{}_stages.csv", name.replace('-', "_")));
            write_csv_annotated(&path, &report.config_hash, &[("figure", name.to_string())], rows)?;
            written.push(path);
        }
    } else {
        let topology = Topology::from_edges(report.topology.n, &report.topology.edges).map_err(CliError::config)?;
        let network = Network::new(topology).map_err(CliError::config)?;
        let basis = report.bci.as_ref().map(|b| b.summary.basis).unwrap_or_default();
        let mut rows = Vec::new();
        for stage in Stage::ALL {
            let in_stage = logs
                .iter()
                .flat_map(|(_, l)| l.iter())
                .filter(|l| report.windows.stage_of(episode_start(l.episode, report.episode_len)) == Some(stage));
            let s = bci_summary(in_stage, &network.profile, basis).map_err(CliError::runtime)?;
            rows.push(BciDistRow {
                stage: stage.to_string(),
                n: s.n,
                dropped: s.dropped,
                q1: s.quartiles.map(|q| q.q1),
                median: s.quartiles.map(|q| q.median),
                q3: s.quartiles.map(|q| q.q3),
                mean: s.mean,
                tctr_lower: s.tctr.lower,
                tctr_upper: s.tctr.upper,
            });
        }
        let path = out.join("plot_bci_dist.csv");
        write_csv_annotated(&path, &report.config_hash, &[("figure", name.to_string())], rows)?;
        written.push(path);
    }
    Ok(written)
}
