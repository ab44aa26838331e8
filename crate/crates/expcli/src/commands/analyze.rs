use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use ssdnet::analysis::{ascending_order, compare_preferences, Comparison};

use crate::error::{CliError, Result};
use crate::logs::{read_hash, require_hash, write_csv};
use crate::report::{RunReport, SeedValue};

pub const ANALYSIS_CSV: &str = "analysis.csv";
pub const ANALYSIS_TEXT: &str = "analysis.txt";
pub const ALPHA: f64 = 0.05;

/// One pairwise Welch test; seeds are the unit of analysis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisRow {
    pub metric: String,
    pub a: String,
    pub b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub t: f64,
    pub dof: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub significant: bool,
    pub degenerate: bool,
    pub ci_a_lower: f64,
    pub ci_a_upper: f64,
    pub ci_b_lower: f64,
    pub ci_b_upper: f64,
}

impl AnalysisRow {
    fn new(metric: &str, c: &Comparison) -> Self {
        AnalysisRow {
            metric: metric.to_string(),
            a: c.a.clone(),
            b: c.b.clone(),
            n_a: c.summary_a.n,
            n_b: c.summary_b.n,
            mean_a: c.summary_a.mean,
            mean_b: c.summary_b.mean,
            t: c.test.t,
            dof: c.test.dof,
            p_raw: c.test.p_value,
            p_adjusted: c.p_adjusted,
            significant: c.significant,
            degenerate: c.test.degenerate,
            ci_a_lower: c.summary_a.ci95.0,
            ci_a_upper: c.summary_a.ci95.1,
            ci_b_lower: c.summary_b.ci95.0,
            ci_b_upper: c.summary_b.ci95.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisOutcome {
    pub rows: Vec<AnalysisRow>,
    /// Human-readable ordering statements, one per metric plus one per pair.
    pub statements: Vec<String>,
    pub csv: PathBuf,
    pub text: PathBuf,
}

type MetricOf = fn(&RunReport) -> Vec<SeedValue>;

const METRICS: [(&str, MetricOf); 2] = [
    ("bci", |r| r.bci.as_ref().map(|b| b.per_seed.clone()).unwrap_or_default()),
    ("utilitarian", |r| r.utilitarian.stage3_per_seed.clone()),
];

/// Compares runs that differ only in preference: every pair of reports,
/// per metric, with Bonferroni correction over the pairs.
pub fn cmd_analyze(paths: &[PathBuf], out: Option<&Path>) -> Result<AnalysisOutcome> {
    if paths.len() < 2 {
        return Err(CliError::config("nothing to compare: analysis needs at least two run reports"));
    }
    let mut reports = Vec::with_capacity(paths.len());
    for p in paths {
        let (dir, report) = RunReport::load(p)?;
        for s in report.complete_seeds() {
            let log = dir.join(&s.episode_log);
            require_hash(&log, &read_hash(&log)?, &report.config_hash)?;
        }
        reports.push((dir, report));
    }
    let first = &reports[0].1;
    for (dir, r) in &reports[1..] {
        if r.env_fingerprint != first.env_fingerprint {
            return Err(CliError::config(format!(
                "{} was run on a different environment or topology than {}",
                dir.display(),
                reports[0].0.display()
            )));
        }
    }
    let mut labels = BTreeSet::new();
    let mut hashes = BTreeSet::new();
    for (dir, r) in &reports {
        if !hashes.insert(r.config_hash.clone()) {
            return Err(CliError::config(format!("{} repeats a run already given", dir.display())));
        }
        if !labels.insert(r.preference.clone()) {
            return Err(CliError::config(format!("two reports share the preference `{}`", r.preference)));
        }
    }

    let mut rows = Vec::new();
    let mut statements = Vec::new();
    for (metric, of) in METRICS {
        let samples: Vec<(String, Vec<f64>)> = reports
            .iter()
            .map(|(_, r)| (r.preference.clone(), of(r).iter().filter_map(|v| v.value).collect()))
            .collect();
        let comparisons = compare_preferences(&samples, ALPHA).map_err(|e| CliError::config(format!("{metric}: {e}")))?;
        statements.push(format!("{metric} ascending by mean: {}", ascending_order(&samples).join(" < ")));
        for c in &comparisons {
            let rel = match c.ordering() {
                std::cmp::Ordering::Less => "<",
                std::cmp::Ordering::Greater => ">",
                std::cmp::Ordering::Equal => "~",
            };
            statements.push(format!(
                "{metric}: {} {rel} {} (t = {:.4}, dof = {:.2}, p = {:.3e}, adjusted p = {:.3e})",
                c.a, c.b, c.test.t, c.test.dof, c.test.p_value, c.p_adjusted
            ));
            rows.push(AnalysisRow::new(metric, c));
        }
    }

    let out = match out {
        Some(o) => o.to_path_buf(),
        None => reports[0].0.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    std::fs::create_dir_all(&out).map_err(CliError::io(&out))?;
    let joint = hex::encode(Sha256::digest(hashes.into_iter().collect::<Vec<_>>().join(",").as_bytes()));
    let csv = out.join(ANALYSIS_CSV);
    write_csv(&csv, &joint, &rows)?;
    let mut text = format!("# config_hash={joint}\n");
    text.push_str("# Welch t-tests over seeds, Bonferroni-corrected per metric, alpha = 0.05\n");
    for (dir, r) in &reports {
        let _ = writeln!(text, "# {} = {} ({})", r.preference, dir.display(), r.config_hash);
    }
    for s in &statements {
        let _ = writeln!(text, "{s}");
    }
    let text_path = out.join(ANALYSIS_TEXT);
    std::fs::write(&text_path, text).map_err(CliError::io(&text_path))?;
    Ok(AnalysisOutcome { rows, statements, csv, text: text_path })
}
