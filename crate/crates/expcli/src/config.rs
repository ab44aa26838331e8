//! Run definitions. A config file is TOML with fixed sections; loading fills
//! every default explicitly so the serialized [`RunConfig`] is the complete
//! effective configuration, and reloading it yields the same value and hash.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use ssdnet::dilemmas::{EnvConfig, GameKind, GridMap, BUILTIN_MAPS};
use ssdnet::learn::{PbtConfig, PolicyKind, PolicySpec};
use ssdnet::metrics::{segment_stages_with, RewardBasis, StageWindows, CONVERGENCE_FRACTION, SCI_EPSILON};
use ssdnet::shaping::{IdMapping, PreferenceProfile, Preset, Weights};
use ssdnet::topology::{build_named, load_edge_list, NamedTopology, Network, Topology};
use ssdnet::Exec;
use toml::{Table, Value};

use crate::error::{CliError, Result};

/// Environment variable naming the directory that relative output paths resolve against.
pub const OUTPUT_ROOT_VAR: &str = "NETSSD_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub name: String,
    pub env: EnvSection,
    pub topology: TopologySection,
    pub preference: PreferenceSection,
    pub learner: PolicySpec,
    pub run: RunSection,
    pub stages: StageSection,
    pub metrics: MetricsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pbt: Option<PbtConfig>,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSection {
    pub game: GameKind,
    /// Built-in map name or absolute path to a map file.
    pub map: String,
    pub params: EnvConfig,
}

/// Exactly one of `named` and `file`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub named: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

/// Exactly one of `preset`, `weights` (every agent) and `per_agent`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_agent: Option<Vec<[f64; 3]>>,
    /// `mapping[agent] = vertex`; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapping: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seeds: Vec<u64>,
    /// Episodes rolled out per batch.
    pub workers: usize,
    pub total_steps: u64,
    /// Strategy inside one seed (rollout workers, per-agent updates).
    pub exec: Exec,
    /// Strategy across seeds.
    pub seed_exec: Exec,
    pub checkpoint_every: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    pub exploration_end: u64,
    pub stage1_end: u64,
    pub transient_end: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    pub bci_basis: RewardBasis,
    pub sci_epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    env: RawEnv,
    topology: TopologySection,
    preference: PreferenceSection,
    #[serde(default)]
    learner: Table,
    #[serde(default)]
    run: RawRun,
    #[serde(default)]
    stages: RawStages,
    #[serde(default)]
    metrics: RawMetrics,
    pbt: Option<RawPbt>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnv {
    game: GameKind,
    map: Option<String>,
    #[serde(default)]
    params: Table,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawRun {
    seeds: Option<Vec<u64>>,
    workers: Option<usize>,
    total_steps: Option<u64>,
    exec: Option<Exec>,
    seed_exec: Option<Exec>,
    checkpoint_every: Option<u64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawStages {
    exploration_end: Option<u64>,
    stage1_end: Option<u64>,
    transient_end: Option<u64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMetrics {
    bci_basis: Option<RewardBasis>,
    sci_epsilon: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawPbt {
    population: Option<usize>,
    perturb: Option<f64>,
    interval: Option<u64>,
    quantile: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

/// Objects a validated config resolves to.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub network: Network,
    /// Map scaled to hold every agent.
    pub map: GridMap,
    pub profile: PreferenceProfile,
    pub mapping: IdMapping,
    pub episodes: u64,
    /// Steps actually run: whole episodes covering `total_steps`.
    pub steps: u64,
    pub windows: StageWindows,
}

impl RunConfig {
    /// Reads and validates a config file. Relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
        Self::parse(&text, base, stem)
    }

    pub fn parse(text: &str, base_dir: &Path, default_name: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(CliError::config)?;
        let name = raw.name.unwrap_or_else(|| default_name.to_string());
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(CliError::config(format!("name `{name}` must be non-empty without path separators")));
        }

        let game = raw.env.game;
        let mut params = to_table(&EnvConfig::for_game(game))?;
        if let Some(g) = raw.env.params.get("game") {
            if g.as_str() != Some(game.as_str()) {
                return Err(CliError::config(format!("env.params.game {g} disagrees with env.game = {game}")));
            }
        }
        overlay(&mut params, raw.env.params, "env.params")?;
        let params: EnvConfig = from_table(params, "env.params")?;
        let map = match raw.env.map {
            None => format!("{}-small", game.as_str()),
            Some(m) if BUILTIN_MAPS.contains(&m.as_str()) => m,
            Some(m) => absolute(base_dir, Path::new(&m))?.display().to_string(),
        };
        let env = EnvSection { game, map, params };

        let mut topology = raw.topology;
        if let Some(f) = &topology.file {
            topology.file = Some(absolute(base_dir, f)?);
        }
        if let Some(n) = &topology.named {
            let named: NamedTopology = n.parse().map_err(CliError::config)?;
            topology.named = Some(named.as_str().to_string());
        }

        let mut preference = raw.preference;
        if let Some(p) = &preference.preset {
            let preset: Preset = p.parse().map_err(CliError::config)?;
            preference.preset = Some(preset.label().to_string());
        }

        let mut learner_table = raw.learner;
        let kind = match learner_table.remove("kind") {
            None => PolicyKind::ActorCritic,
            Some(Value::String(s)) => s.parse().map_err(CliError::config)?,
            Some(other) => return Err(CliError::config(format!("learner.kind must be a string, got {other}"))),
        };
        let mut learner = to_table(&PolicySpec::for_kind(kind))?;
        overlay(&mut learner, learner_table, "learner")?;
        let learner: PolicySpec = from_table(learner, "learner")?;

        let r = raw.run;
        let seeds = r.seeds.ok_or_else(|| CliError::config("run.seeds is required"))?;
        let total_steps = r.total_steps.ok_or_else(|| CliError::config("run.total_steps is required"))?;
        let run = RunSection {
            seeds,
            workers: r.workers.unwrap_or(4),
            total_steps,
            exec: r.exec.unwrap_or_default(),
            seed_exec: r.seed_exec.unwrap_or(Exec::Sequential),
            checkpoint_every: r.checkpoint_every.unwrap_or(50),
        };

        // Default boundaries are proportional to the steps actually run.
        let steps = run_steps(total_steps, env.params.episode_len);
        let transient_default = (steps as f64 * (1.0 - CONVERGENCE_FRACTION)).round() as u64;
        let transient_end = raw.stages.transient_end.unwrap_or(transient_default);
        let stages = StageSection {
            exploration_end: raw.stages.exploration_end.unwrap_or(steps / 100),
            stage1_end: raw.stages.stage1_end.unwrap_or(transient_end / 6),
            transient_end,
        };

        let metrics = MetricsSection {
            bci_basis: raw.metrics.bci_basis.unwrap_or_default(),
            sci_epsilon: raw.metrics.sci_epsilon.unwrap_or(SCI_EPSILON),
        };

        let pbt = raw.pbt.map(|p| {
            let d = PbtConfig::default();
            PbtConfig {
                population: p.population.unwrap_or(run.seeds.len()),
                perturb: p.perturb.unwrap_or(d.perturb),
                interval: p.interval.unwrap_or(d.interval),
                quantile: p.quantile.unwrap_or(d.quantile),
            }
        });

        let output = OutputSection { dir: raw.output.dir.unwrap_or_else(|| Path::new("runs").join(&name)) };

        let cfg = RunConfig { name, env, topology, preference, learner, run, stages, metrics, pbt, output };
        cfg.resolve()?;
        Ok(cfg)
    }

    /// Complete effective configuration as TOML; parsing it back gives an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    /// SHA-256 over the canonical TOML with the output directory and the
    /// execution strategies cleared: neither changes any result, so the same
    /// experiment shares one hash wherever and however it runs.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir = PathBuf::new();
        c.run.exec = Exec::Sequential;
        c.run.seed_exec = Exec::Sequential;
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    /// Output directory: absolute paths as given, relative ones under
    /// `root`, else under the output-root variable, else the working directory.
    pub fn output_dir(&self, root: Option<&Path>) -> PathBuf {
        if self.output.dir.is_absolute() {
            return self.output.dir.clone();
        }
        let base = match root {
            Some(r) => r.to_path_buf(),
            None => std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from).unwrap_or_default(),
        };
        base.join(&self.output.dir)
    }

    /// Label used to group runs in analysis.
    pub fn preference_label(&self) -> String {
        match (&self.preference.preset, &self.preference.weights) {
            (Some(p), _) => p.clone(),
            (None, Some([a, b, w])) => format!("w({a},{b},{w})"),
            _ => "per-agent".to_string(),
        }
    }

    pub fn topology_label(&self) -> String {
        match (&self.topology.named, &self.topology.file) {
            (Some(n), _) => n.clone(),
            (None, Some(f)) => f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            _ => String::new(),
        }
    }

    /// Checks every invariant and builds the objects the runner needs.
    pub fn resolve(&self) -> Result<Resolved> {
        self.env.params.validate().map_err(CliError::config)?;
        if self.env.params.game != self.env.game {
            return Err(CliError::config("env.params.game must equal env.game"));
        }
        let topology = match (&self.topology.named, &self.topology.file) {
            (Some(name), None) => {
                let named: NamedTopology = name.parse().map_err(CliError::config)?;
                build_named(name, named.size()).map_err(CliError::config)?
            }
            (None, Some(file)) => load_topology_file(file)?,
            _ => return Err(CliError::config("topology needs exactly one of `named` and `file`")),
        };
        let network = Network::new(topology).map_err(CliError::config)?;
        let n = network.n();

        let base_map = if BUILTIN_MAPS.contains(&self.env.map.as_str()) {
            GridMap::builtin(&self.env.map).map_err(CliError::config)?
        } else {
            let text = std::fs::read_to_string(&self.env.map)
                .map_err(|e| CliError::config(format!("cannot read map {}: {e}", self.env.map)))?;
            GridMap::parse(&text).map_err(CliError::config)?
        };
        let map = base_map.scaled_for(n);

        let p = &self.preference;
        let weights = |w: &[f64; 3]| Weights::new(w[0], w[1], w[2]).map_err(CliError::config);
        let profile = match (&p.preset, &p.weights, &p.per_agent) {
            (Some(name), None, None) => PreferenceProfile::preset(name.parse().map_err(CliError::config)?, n),
            (None, Some(w), None) => PreferenceProfile::homogeneous(n, weights(w)?),
            (None, None, Some(rows)) => {
                if rows.len() != n {
                    return Err(CliError::config(format!("preference.per_agent has {} rows for {n} agents", rows.len())));
                }
                let ws = rows.iter().map(weights).collect::<Result<Vec<_>>>()?;
                PreferenceProfile::from_weights(ws).map_err(CliError::config)?
            }
            _ => return Err(CliError::config("preference needs exactly one of `preset`, `weights` and `per_agent`")),
        };
        let mapping = match &p.mapping {
            None => IdMapping::identity(n),
            Some(m) if m.len() == n => IdMapping::new(m.clone()).map_err(CliError::config)?,
            Some(m) => return Err(CliError::config(format!("preference.mapping has {} entries for {n} agents", m.len()))),
        };

        self.learner.validate().map_err(CliError::config)?;

        let r = &self.run;
        if r.seeds.is_empty() {
            return Err(CliError::config("run.seeds must be non-empty"));
        }
        let mut sorted = r.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::config("run.seeds must be distinct"));
        }
        if r.workers == 0 {
            return Err(CliError::config("run.workers must be positive"));
        }
        if r.total_steps == 0 {
            return Err(CliError::config("run.total_steps must be positive"));
        }
        if r.checkpoint_every == 0 {
            return Err(CliError::config("run.checkpoint_every must be positive"));
        }
        let episodes = r.total_steps.div_ceil(u64::from(self.env.params.episode_len));
        let steps = run_steps(r.total_steps, self.env.params.episode_len);
        let s = &self.stages;
        let windows = segment_stages_with(steps, s.exploration_end, s.stage1_end, s.transient_end)
            .map_err(|e| CliError::config(format!("stages: {e}")))?;

        if !(self.metrics.sci_epsilon > 0.0 && self.metrics.sci_epsilon.is_finite()) {
            return Err(CliError::config("metrics.sci_epsilon must be positive"));
        }
        if let Some(pbt) = &self.pbt {
            pbt.validate().map_err(CliError::config)?;
            if pbt.population != r.seeds.len() {
                return Err(CliError::config(format!(
                    "pbt.population = {} but there are {} seeds; each member trains one seed",
                    pbt.population,
                    r.seeds.len()
                )));
            }
        }
        Ok(Resolved { network, map, profile, mapping, episodes, steps, windows })
    }
}

fn run_steps(total_steps: u64, episode_len: u32) -> u64 {
    total_steps.div_ceil(u64::from(episode_len)) * u64::from(episode_len)
}

/// Reads an edge-list file; errors name the file.
pub fn load_topology_file(path: &Path) -> Result<Topology> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read topology {}: {e}", path.display())))?;
    load_edge_list(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn absolute(base: &Path, p: &Path) -> Result<PathBuf> {
    let joined = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    std::path::absolute(&joined).map_err(|e| CliError::config(format!("{}: {e}", joined.display())))
}

fn to_table<T: Serialize>(value: &T) -> Result<Table> {
    Table::try_from(value).map_err(CliError::config)
}

fn from_table<T: DeserializeOwned>(table: Table, section: &str) -> Result<T> {
    Value::Table(table).try_into().map_err(|e| CliError::config(format!("{section}: {e}")))
}

/// Writes `over` onto `base` key by key. Keys absent from `base` are
/// rejected; integers are accepted where `base` holds a float.
fn overlay(base: &mut Table, over: Table, path: &str) -> Result<()> {
    for (key, value) in over {
        let here = format!("{path}.{key}");
        match (base.get_mut(&key), value) {
            (None, _) => return Err(CliError::config(format!("unknown key `{here}`"))),
            (Some(Value::Table(b)), Value::Table(o)) => overlay(b, o, &here)?,
            (Some(slot @ Value::Float(_)), Value::Integer(i)) => *slot = Value::Float(i as f64),
            (Some(slot), value) => *slot = value,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        name = "smoke"
        [env]
        game = "harvest"
        map = "harvest-micro"
        [env.params]
        episode_len = 50
        apple_reward = 2
        [topology]
        named = "star5"
        [preference]
        preset = "hbn"
        [learner]
        kind = "tabular-q"
        [run]
        seeds = [3, 1]
        total_steps = 10000
    "#;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Path::new("."), "x")
    }

    #[test]
    fn defaults_are_filled_explicitly() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.env.params.episode_len, 50);
        assert_eq!(c.env.params.apple_reward, 2.0);
        assert_eq!(c.env.params.hit_penalty, 50.0);
        assert_eq!(c.topology.named.as_deref(), Some("star"));
        assert_eq!(c.preference.preset.as_deref(), Some("HBN"));
        assert_eq!(c.learner, PolicySpec::tabular_q());
        assert_eq!((c.run.workers, c.run.checkpoint_every), (4, 50));
        assert_eq!(c.stages, StageSection { exploration_end: 100, stage1_end: 1000, transient_end: 6000 });
        assert_eq!(c.metrics.sci_epsilon, SCI_EPSILON);
        assert_eq!(c.output.dir, Path::new("runs/smoke"));
        let text = c.to_toml();
        assert!(text.contains("hit_freeze = 25") && text.contains("minibatch = 500"));
    }

    #[test]
    fn effective_config_round_trips_with_stable_hash() {
        let c = parse(MINIMAL).unwrap();
        let again = parse(&c.to_toml()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
        let mut moved = c.clone();
        moved.output.dir = PathBuf::from("/elsewhere");
        assert_eq!(moved.hash(), c.hash());
        moved.run.exec = Exec::Sequential;
        moved.run.seed_exec = Exec::Parallel;
        assert_eq!(moved.hash(), c.hash());
        let mut other = c.clone();
        other.run.seeds.push(9);
        assert_ne!(other.hash(), c.hash());
    }

    #[test]
    fn rejects_invalid_configs() {
        let cases = [
            MINIMAL.replace("seeds = [3, 1]", "seeds = [3, 3]"),
            MINIMAL.replace("seeds = [3, 1]", "seeds = []"),
            MINIMAL.replace("apple_reward = 2", "apple_rewrd = 2"),
            MINIMAL.replace("named = \"star5\"", "named = \"ring\""),
            MINIMAL.replace("preset = \"hbn\"", "preset = \"hbn\"\nweights = [1.0, 0.0, 0.0]"),
            MINIMAL.replace("preset = \"hbn\"", "per_agent = [[1.0, 0.0, 0.0]]"),
            MINIMAL.replace("kind = \"tabular-q\"", "kind = \"ppo\""),
            MINIMAL.replace("named = \"star5\"", "file = \"missing.edges\""),
            MINIMAL.replace("total_steps = 10000", "total_steps = 10000\nbogus = 1"),
            MINIMAL.replace("[run]", "[stages]\ntransient_end = 9000\n[run]"),
            MINIMAL.replace("[run]", "[pbt]\npopulation = 3\n[run]"),
        ];
        for text in cases {
            let err = parse(&text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{err}");
        }
    }

    #[test]
    fn explicit_weights_and_mapping() {
        let text = MINIMAL.replace("preset = \"hbn\"", "weights = [0.5, 0.0, 2.0]\nmapping = [4, 3, 2, 1, 0]");
        let c = parse(&text).unwrap();
        let r = c.resolve().unwrap();
        assert_eq!(r.profile.get(2), Some(Weights::new(0.5, 0.0, 2.0).unwrap()));
        assert_eq!(r.mapping.vertex(0), 4);
        assert_eq!(c.preference_label(), "w(0.5,0,2)");
        assert_eq!(r.episodes, 200);
        assert!(r.map.starts().len() >= 5);
    }

    #[test]
    fn output_dir_resolution() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.output_dir(Some(Path::new("/tmp/root"))), Path::new("/tmp/root/runs/smoke"));
    }
}
