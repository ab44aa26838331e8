use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use ssdnet::topology::{build_named, NamedTopology, Network, Tctr};

use crate::config::load_topology_file;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopoSource {
    /// Catalog name, with or without the size suffix (`star`, `star5`).
    Named(String),
    /// Edge-list file.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VertexRow {
    pub vertex: usize,
    pub degree: usize,
    pub betweenness: f64,
    pub burt_constraint: f64,
    pub bridging: f64,
    pub nearest: Vec<usize>,
    pub clique: Vec<usize>,
    pub hbn: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopoReport {
    pub label: String,
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub max_betweenness_set: Vec<usize>,
    pub tctr: Tctr,
    pub vertices: Vec<VertexRow>,
}

pub fn cmd_topo(source: &TopoSource) -> Result<TopoReport> {
    let (label, topology) = match source {
        TopoSource::Named(name) => {
            let named: NamedTopology = name.parse().map_err(CliError::config)?;
            (named.to_string(), build_named(name, named.size()).map_err(CliError::config)?)
        }
        TopoSource::File(path) => (path.display().to_string(), load_topology_file(path)?),
    };
    let net = Network::new(topology).map_err(CliError::config)?;
    let p = &net.profile;
    let vertices = (0..net.n())
        .map(|v| VertexRow {
            vertex: v,
            degree: p.degree[v],
            betweenness: p.betweenness[v],
            burt_constraint: p.burt_constraint[v],
            bridging: p.bridging[v],
            nearest: net.portfolios.nearest[v].clone(),
            clique: net.portfolios.clique[v].clone(),
            hbn: net.portfolios.hbn[v].clone(),
        })
        .collect();
    Ok(TopoReport {
        label,
        n: net.n(),
        edges: net.topology.edges().to_vec(),
        max_betweenness_set: p.max_betweenness_set.clone(),
        tctr: net.tctr(),
        vertices,
    })
}

fn set(xs: &[usize]) -> String {
    if xs.is_empty() {
        return "∅".to_string();
    }
    let ids: Vec<String> = xs.iter().map(usize::to_string).collect();
    format!("{{{}}}", ids.join(","))
}

impl TopoReport {
    /// Fixed-width table, one line per vertex, followed by the range line.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "topology {} (n = {}, {} edges)", self.label, self.n, self.edges.len());
        let _ = writeln!(s, "{:>6} {:>6} {:>11} {:>8} {:>8}  {:<12} {:<12} {:<12}", "vertex", "degree", "betweenness", "C", "1-C", "nearest", "clique", "hbn");
        for v in &self.vertices {
            let _ = writeln!(
                s,
                "{:>6} {:>6} {:>11.4} {:>8.4} {:>8.4}  {:<12} {:<12} {:<12}",
                v.vertex,
                v.degree,
                v.betweenness,
                v.burt_constraint,
                v.bridging,
                set(&v.nearest),
                set(&v.clique),
                set(&v.hbn)
            );
        }
        let _ = writeln!(s, "max betweenness {}", set(&self.max_betweenness_set));
        let _ = writeln!(s, "TCTR {:.3}-{:.3}", self.tctr.lower, self.tctr.upper);
        s
    }
}
