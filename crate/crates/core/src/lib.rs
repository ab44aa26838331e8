//! Networked sequential social dilemmas at desk scale.
//!
//! * [`topology`]: agent graphs, betweenness, Burt's constraint, portfolio sets.
//! * [`dilemmas`]: the Harvest and Cleanup gridworlds.
//! * [`shaping`]: preference profiles and socio-relational reward shaping.
//! * [`metrics`]: episode logs, BCI, SCI, utilitarian return and stage summaries.
//! * [`learn`]: policies, parallel rollouts, training and population-based weight tuning.
//! * [`analysis`]: Welch t-tests, Bonferroni correction and confidence intervals.

pub mod analysis;
pub mod dilemmas;
pub mod learn;
pub mod metrics;
pub mod par;
pub mod rng;
pub mod shaping;
pub mod topology;

pub use par::Exec;
