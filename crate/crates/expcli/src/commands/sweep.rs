use std::path::{Path, PathBuf};

use ssdnet::shaping::Preset;
use ssdnet::topology::NamedTopology;

use super::analyze::{cmd_analyze, AnalysisOutcome};
use super::run::{cmd_run, RunOutcome};
use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub struct SweepOutcome {
    pub dir: PathBuf,
    pub runs: Vec<RunOutcome>,
    /// One comparison per topology with at least two presets.
    pub analyses: Vec<(String, AnalysisOutcome)>,
}

/// Runs `base` once per `topology × preset` into `<output>/<name>-<topology>-<preset>`,
/// then compares the presets on each topology. Without `topologies` the
/// base config's topology is used.
pub fn cmd_sweep(base: &RunConfig, presets: &[String], topologies: &[String], root: Option<&Path>) -> Result<SweepOutcome> {
    if presets.is_empty() {
        return Err(CliError::config("sweep needs at least one preset"));
    }
    let presets = presets
        .iter()
        .map(|p| p.parse::<Preset>().map(|p| p.label().to_string()).map_err(CliError::config))
        .collect::<Result<Vec<_>>>()?;
    let topologies: Vec<Option<String>> = if topologies.is_empty() {
        vec![None]
    } else {
        topologies
            .iter()
            .map(|t| t.parse::<NamedTopology>().map(|n| Some(n.to_string())).map_err(CliError::config))
            .collect::<Result<_>>()?
    };
    let dir = base.output_dir(root);
    let mut runs = Vec::new();
    let mut analyses = Vec::new();
    for topology in &topologies {
        let mut cfg = base.clone();
        if let Some(t) = topology {
            cfg.topology.named = Some(t.clone());
            cfg.topology.file = None;
        }
        let topo_label = cfg.topology_label();
        let mut reports = Vec::new();
        for preset in &presets {
            let mut c = cfg.clone();
            c.preference = Default::default();
            c.preference.preset = Some(preset.clone());
            c.preference.mapping = base.preference.mapping.clone();
            c.name = format!("{}-{topo_label}-{preset}", base.name);
            c.output.dir = dir.join(&c.name);
            c.resolve()?;
            let outcome = cmd_run(&c, None)?;
            if !outcome.report.all_ok() {
                return Err(CliError::runtime(format!("run {} had failed seeds", outcome.dir.display())));
            }
            reports.push(outcome.dir.clone());
            runs.push(outcome);
        }
        if reports.len() >= 2 {
            let out = dir.join(format!("analysis-{topo_label}"));
            analyses.push((topo_label, cmd_analyze(&reports, Some(&out))?));
        }
    }
    Ok(SweepOutcome { dir, runs, analyses })
}
