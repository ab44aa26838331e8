//! CSV persistence. Every file starts with a `# config_hash=<hex>` line,
//! followed by a header row and data rows.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use ssdnet::metrics::{AgentEpisode, EpisodeLog};

use crate::error::{CliError, Result};

const HASH_PREFIX: &str = "# config_hash=";

/// Column order of per-agent episode logs.
pub const EPISODE_COLUMNS: [&str; 8] =
    ["seed", "episode", "agent_id", "apples", "env_reward", "socio_reward", "fire_count", "clean_count"];

/// One row per `(seed, episode, agent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub seed: u64,
    pub episode: u64,
    pub agent_id: usize,
    pub apples: u32,
    pub env_reward: f64,
    pub socio_reward: f64,
    pub fire_count: u32,
    pub clean_count: u32,
}

pub fn episode_rows(logs: &[EpisodeLog]) -> impl Iterator<Item = EpisodeRow> + '_ {
    logs.iter().flat_map(|l| {
        l.agents.iter().enumerate().map(move |(agent_id, a)| EpisodeRow {
            seed: l.seed,
            episode: l.episode,
            agent_id,
            apples: a.apples,
            env_reward: a.env_reward,
            socio_reward: a.socio_reward,
            fire_count: a.fire_count,
            clean_count: a.clean_count,
        })
    })
}

/// Writes `rows` under the hash line; returns the number of data rows.
pub fn write_csv<S: Serialize>(path: &Path, hash: &str, rows: impl IntoIterator<Item = S>) -> Result<u64> {
    write_csv_annotated(path, hash, &[], rows)
}

/// [`write_csv`] with extra `# key=value` lines after the hash line.
pub fn write_csv_annotated<S: Serialize>(
    path: &Path,
    hash: &str,
    notes: &[(&str, String)],
    rows: impl IntoIterator<Item = S>,
) -> Result<u64> {
    let io = CliError::io;
    let file = File::create(path).map_err(io(path))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{HASH_PREFIX}{hash}").map_err(io(path))?;
    for (key, value) in notes {
        writeln!(out, "# {key}={value}").map_err(io(path))?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut count = 0;
    for row in rows {
        w.serialize(row).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        count += 1;
    }
    w.flush().map_err(io(path))?;
    Ok(count)
}

/// Reads the hash line of a file written by [`write_csv`].
pub fn read_hash(path: &Path) -> Result<String> {
    let file = File::open(path).map_err(|e| CliError::config(format!("cannot open {}: {e}", path.display())))?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first).map_err(CliError::io(path))?;
    first
        .trim_end()
        .strip_prefix(HASH_PREFIX)
        .map(str::to_string)
        .ok_or_else(|| CliError::config(format!("{} lacks a `{HASH_PREFIX}` header", path.display())))
}

pub fn read_csv<D: DeserializeOwned>(path: &Path) -> Result<(String, Vec<D>)> {
    let hash = read_hash(path)?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<D>, _>>()
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    Ok((hash, rows))
}

/// Reads an episode log, checking that every episode has one row per agent
/// with ids `0..n`, the same `n` throughout.
pub fn read_episodes(path: &Path) -> Result<(String, Vec<EpisodeLog>)> {
    let (hash, rows) = read_csv::<EpisodeRow>(path)?;
    let bad = |m: String| CliError::config(format!("{}: {m}", path.display()));
    let mut grouped: BTreeMap<(u64, u64), Vec<EpisodeRow>> = BTreeMap::new();
    for r in rows {
        grouped.entry((r.seed, r.episode)).or_default().push(r);
    }
    let n = grouped.values().next().map_or(0, Vec::len);
    let mut logs = Vec::with_capacity(grouped.len());
    for ((seed, episode), mut rows) in grouped {
        rows.sort_by_key(|r| r.agent_id);
        if rows.len() != n || rows.iter().enumerate().any(|(i, r)| r.agent_id != i) {
            return Err(bad(format!("seed {seed} episode {episode} does not list agents 0..{n} once each")));
        }
        let agents = rows
            .iter()
            .map(|r| AgentEpisode {
                apples: r.apples,
                env_reward: r.env_reward,
                socio_reward: r.socio_reward,
                fire_count: r.fire_count,
                clean_count: r.clean_count,
            })
            .collect();
        logs.push(EpisodeLog { seed, episode, agents });
    }
    Ok((hash, logs))
}

/// Rejects a file whose hash differs from `expected`.
pub fn require_hash(path: &Path, found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(CliError::config(format!(
            "{} has config hash {found}, expected {expected}; outputs of different configs cannot be mixed",
            path.display()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn episode_logs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let mut logs = Vec::new();
        for ep in 0..3 {
            let mut l = EpisodeLog::new(7, ep, 2);
            l.agents[1].env_reward = -50.0 + 0.1 * ep as f64;
            l.agents[0].apples = ep as u32;
            logs.push(l);
        }
        assert_eq!(write_csv(&path, "abc", episode_rows(&logs)).unwrap(), 6);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# config_hash=abc\n"));
        assert_eq!(text.lines().nth(1).unwrap(), EPISODE_COLUMNS.join(","));
        let (hash, back) = read_episodes(&path).unwrap();
        assert_eq!((hash.as_str(), back), ("abc", logs));
    }

    #[test]
    fn ragged_logs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let mut rows: Vec<EpisodeRow> = episode_rows(&[EpisodeLog::new(0, 0, 3), EpisodeLog::new(0, 1, 3)]).collect();
        rows.pop();
        write_csv(&path, "h", rows).unwrap();
        assert!(read_episodes(&path).is_err());
        std::fs::write(&path, "seed\n1\n").unwrap();
        assert!(read_hash(&path).is_err());
        assert!(require_hash(&path, "a", "b").is_err());
    }
}
