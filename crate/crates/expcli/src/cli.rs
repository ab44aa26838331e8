//! Command-line front end. [`run_cli`] returns the text to print and an exit
//! code so the binary stays a thin wrapper.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{cmd_analyze, cmd_plotdata, cmd_run, cmd_sweep, cmd_topo, Figure, TopoSource};
use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "expcli", version, about = "Networked sequential social dilemma experiments")]
pub struct Cli {
    /// Directory that relative output paths resolve against; overrides NETSSD_OUTPUT_ROOT.
    #[arg(long, global = true)]
    pub output_root: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print per-vertex structure of a topology.
    Topo(TopoArgs),
    /// Train every seed of a run config and write logs plus a report.
    Run {
        config: PathBuf,
    },
    /// Run a config once per preset (and topology) and compare the presets.
    Sweep {
        config: PathBuf,
        /// Comma-separated presets, e.g. NN,CN,HBN.
        #[arg(long, value_delimiter = ',', required = true)]
        presets: Vec<String>,
        /// Comma-separated catalog topologies; defaults to the config's.
        #[arg(long, value_delimiter = ',')]
        topologies: Vec<String>,
    },
    /// Pairwise comparison of two or more run reports.
    Analyze {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit plot-ready CSV for one figure of a run.
    Plotdata {
        report: PathBuf,
        #[arg(long, value_enum)]
        figure: Figure,
        /// Trailing moving-average window applied before downsampling.
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct TopoArgs {
    /// Catalog topology, e.g. star5 or house.
    #[arg(long, required_unless_present = "file", conflicts_with = "file")]
    pub named: Option<String>,
    /// Edge-list file.
    #[arg(long)]
    pub file: Option<PathBuf>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

/// Parses `args` and runs the command. Returns `(exit code, stdout text)`;
/// errors are rendered into the text.
pub fn run_cli<I, T>(args: I) -> (i32, String)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            return (code, e.to_string());
        }
    };
    match execute(cli) {
        Ok((code, text)) => (code, text),
        Err(e) => (e.exit_code(), format!("error: {e}\n")),
    }
}

fn execute(cli: Cli) -> Result<(i32, String)> {
    let root = cli.output_root.as_deref();
    let mut out = String::new();
    match cli.command {
        Command::Topo(a) => {
            let source = match (a.named, a.file) {
                (Some(n), _) => TopoSource::Named(n),
                (None, Some(f)) => TopoSource::File(f),
                (None, None) => return Err(CliError::config("topo needs --named or --file")),
            };
            let report = cmd_topo(&source)?;
            if a.json {
                out = serde_json::to_string_pretty(&report).map_err(CliError::runtime)? + "\n";
            } else {
                out = report.render();
            }
        }
        Command::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            let outcome = cmd_run(&cfg, root)?;
            let _ = writeln!(out, "run {} -> {}", cfg.name, outcome.dir.display());
            let _ = writeln!(out, "config_hash={}", outcome.report.config_hash);
            for s in &outcome.report.seeds {
                let _ = writeln!(out, "seed {}: {:?}, {} episodes", s.seed, s.status, s.episodes);
            }
            if !outcome.report.all_ok() {
                return Ok((3, out));
            }
        }
        Command::Sweep { config, presets, topologies } => {
            let cfg = RunConfig::load(&config)?;
            let outcome = cmd_sweep(&cfg, &presets, &topologies, root)?;
            for r in &outcome.runs {
                let _ = writeln!(out, "run -> {}", r.dir.display());
            }
            for (topology, a) in &outcome.analyses {
                let _ = writeln!(out, "[{topology}] {}", a.text.display());
                for s in &a.statements {
                    let _ = writeln!(out, "  {s}");
                }
            }
        }
        Command::Analyze { reports, out: dir } => {
            let a = cmd_analyze(&reports, dir.as_deref())?;
            for s in &a.statements {
                let _ = writeln!(out, "{s}");
            }
            let _ = writeln!(out, "tables: {} {}", a.csv.display(), a.text.display());
        }
        Command::Plotdata { report, figure, window, out: dir } => {
            for p in cmd_plotdata(&report, figure, window, dir.as_deref())? {
                let _ = writeln!(out, "{}", p.display());
            }
        }
    }
    Ok((0, out))
}
