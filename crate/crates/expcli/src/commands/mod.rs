pub mod analyze;
pub mod plotdata;
pub mod run;
pub mod sweep;
pub mod topo;

pub use analyze::{cmd_analyze, AnalysisOutcome, AnalysisRow};
pub use plotdata::{cmd_plotdata, Figure};
pub use run::{cmd_run, RunOutcome};
pub use sweep::{cmd_sweep, SweepOutcome};
pub use topo::{cmd_topo, TopoReport, TopoSource};
