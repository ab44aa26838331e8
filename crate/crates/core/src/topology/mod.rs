//! Undirected agent graphs and the sub-graph analyses built on them.
//!
//! A [`Topology`] is an immutable, connected, simple undirected graph over
//! vertex ids `0..n`. [`analyze`] derives the [`StructuralProfile`]
//! (distances, betweenness, Burt's constraint) and the portfolio builders in
//! [`portfolio`] derive nearest, clique and critical-connection neighbor
//! sets. [`Network`] bundles all three so they are computed once per run.

mod analysis;
mod portfolio;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analysis::{analyze, betweenness, burt_constraints, distances, tctr, StructuralProfile, Tctr};
pub use portfolio::{clique_neighbors, hbn_neighbors, nearest_neighbors, PortfolioSet};

/// Relative tolerance used when deciding which vertices tie for maximal betweenness.
pub const BETWEENNESS_TIE_RTOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("unknown topology name `{0}`")]
    UnknownName(String),
    #[error("topology `{name}` has {expected} vertices, requested {requested}")]
    SizeMismatch { name: String, expected: usize, requested: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: self-loop on vertex {vertex}")]
    SelfLoop { line: usize, vertex: usize },
    #[error("line {line}: vertex {vertex} out of range for n = {n}")]
    OutOfRange { line: usize, vertex: usize, n: usize },
    #[error("graph needs at least 2 vertices, got {0}")]
    TooSmall(usize),
    #[error("graph is disconnected: components {}", fmt_components(.0))]
    Disconnected(Vec<Vec<usize>>),
    #[error("vertex {0} has degree 0")]
    IsolatedVertex(usize),
}

fn fmt_components(components: &[Vec<usize>]) -> String {
    components
        .iter()
        .map(|c| {
            let ids: Vec<String> = c.iter().map(|v| v.to_string()).collect();
            format!("{{{}}}", ids.join(","))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Topologies with a fixed, built-in edge list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedTopology {
    Complete,
    Cycle,
    Wheel,
    Star,
    Bipartite23,
    House,
}

impl NamedTopology {
    pub const ALL: [NamedTopology; 6] = [
        NamedTopology::Complete,
        NamedTopology::Cycle,
        NamedTopology::Wheel,
        NamedTopology::Star,
        NamedTopology::Bipartite23,
        NamedTopology::House,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NamedTopology::Complete => "complete",
            NamedTopology::Cycle => "cycle",
            NamedTopology::Wheel => "wheel",
            NamedTopology::Star => "star",
            NamedTopology::Bipartite23 => "bipartite23",
            NamedTopology::House => "house",
        }
    }

    /// Vertex count of the built-in family.
    pub fn size(self) -> usize {
        5
    }

    fn edges(self) -> Vec<(usize, usize)> {
        match self {
            NamedTopology::Complete => {
                let mut e = Vec::new();
                for u in 0..5 {
                    for v in u + 1..5 {
                        e.push((u, v));
                    }
                }
                e
            }
            NamedTopology::Cycle => (0..5).map(|i| (i, (i + 1) % 5)).collect(),
            NamedTopology::Wheel => {
                let mut e: Vec<_> = (1..5).map(|i| (0, i)).collect();
                e.extend([(1, 2), (2, 3), (3, 4), (4, 1)]);
                e
            }
            NamedTopology::Star => (1..5).map(|i| (0, i)).collect(),
            NamedTopology::Bipartite23 => {
                let mut e = Vec::new();
                for a in [0, 1] {
                    for b in [2, 3, 4] {
                        e.push((a, b));
                    }
                }
                e
            }
            // Square 0-1-2-3 with roof apex 4 over the 1-2 side.
            NamedTopology::House => vec![(0, 1), (0, 3), (3, 2), (1, 2), (1, 4), (2, 4)],
        }
    }
}

impl fmt::Display for NamedTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NamedTopology {
    type Err = TopologyError;

    /// Accepts the bare family name or the name with its size suffix (`star5`, `house5`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let name = match lower.as_str() {
            "bipartite23" | "bipartite" | "bipartite5" => return Ok(NamedTopology::Bipartite23),
            other => other.strip_suffix('5').unwrap_or(other),
        };
        match name {
            "complete" => Ok(NamedTopology::Complete),
            "cycle" => Ok(NamedTopology::Cycle),
            "wheel" => Ok(NamedTopology::Wheel),
            "star" => Ok(NamedTopology::Star),
            "house" => Ok(NamedTopology::House),
            _ => Err(TopologyError::UnknownName(s.to_string())),
        }
    }
}

/// Connected simple undirected graph over vertices `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<bool>,
}

impl Topology {
    /// Builds and validates a graph. Duplicate edges (in either orientation) collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, TopologyError> {
        if n < 2 {
            return Err(TopologyError::TooSmall(n));
        }
        let mut set = BTreeSet::new();
        for (idx, &(u, v)) in edges.iter().enumerate() {
            let line = idx + 1;
            for w in [u, v] {
                if w >= n {
                    return Err(TopologyError::OutOfRange { line, vertex: w, n });
                }
            }
            if u == v {
                return Err(TopologyError::SelfLoop { line, vertex: u });
            }
            set.insert((u.min(v), u.max(v)));
        }
        let mut adjacency = vec![false; n * n];
        for &(u, v) in &set {
            adjacency[u * n + v] = true;
            adjacency[v * n + u] = true;
        }
        let topo = Topology { n, edges: set.into_iter().collect(), adjacency };
        let comps = topo.components();
        if comps.len() > 1 {
            return Err(TopologyError::Disconnected(comps));
        }
        Ok(topo)
    }

    pub fn named(name: NamedTopology) -> Self {
        Self::from_edges(name.size(), &name.edges()).expect("built-in topology is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Canonical edge list, each pair `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    #[inline]
    pub fn adjacent(&self, u: usize, v: usize) -> bool {
        self.adjacency[u * self.n + v]
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&v| self.adjacent(u, v))
    }

    pub fn degree(&self, u: usize) -> usize {
        self.neighbors(u).count()
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n];
        let mut out = Vec::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut i = 0;
            while i < comp.len() {
                let u = comp[i];
                i += 1;
                for v in 0..self.n {
                    if self.adjacency[u * self.n + v] && !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Serializes to the edge-list text format accepted by [`load_edge_list`].
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("n {}\n", self.n);
        for (u, v) in &self.edges {
            s.push_str(&format!("{u} {v}\n"));
        }
        s
    }
}

/// Builds one of the fixed catalog topologies, checking the requested size.
pub fn build_named(name: &str, n: usize) -> Result<Topology, TopologyError> {
    let named: NamedTopology = name.parse()?;
    if n != named.size() {
        return Err(TopologyError::SizeMismatch {
            name: named.to_string(),
            expected: named.size(),
            requested: n,
        });
    }
    Ok(Topology::named(named))
}

/// Parses the edge-list format: a header `n <count>` followed by one `u v`
/// pair per line. Blank lines and `#` comments are ignored.
pub fn load_edge_list(text: &str) -> Result<Topology, TopologyError> {
    let mut n: Option<usize> = None;
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| TopologyError::Parse { line, msg: format!("expected a vertex id, got `{s}`") })
        };
        match n {
            None => {
                if fields.len() != 2 || fields[0] != "n" {
                    return Err(TopologyError::Parse { line, msg: "expected header `n <count>`".into() });
                }
                let count = parse(fields[1])?;
                if count < 2 {
                    return Err(TopologyError::TooSmall(count));
                }
                n = Some(count);
            }
            Some(count) => {
                if fields.len() != 2 {
                    return Err(TopologyError::Parse { line, msg: "expected `u v`".into() });
                }
                let (u, v) = (parse(fields[0])?, parse(fields[1])?);
                for w in [u, v] {
                    if w >= count {
                        return Err(TopologyError::OutOfRange { line, vertex: w, n: count });
                    }
                }
                if u == v {
                    return Err(TopologyError::SelfLoop { line, vertex: u });
                }
                edges.push((u, v));
            }
        }
    }
    let n = n.ok_or(TopologyError::Parse { line: 0, msg: "missing header `n <count>`".into() })?;
    Topology::from_edges(n, &edges)
}

/// Erdős–Rényi style graph conditioned on connectivity: a random spanning
/// tree guarantees a single component, then every other pair is added with
/// probability `p`.
pub fn random_connected<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Topology {
    assert!(n >= 2, "random_connected needs n >= 2");
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut edges = Vec::new();
    for i in 1..n {
        let parent = order[rng.random_range(0..i)];
        edges.push((order[i], parent));
    }
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Topology::from_edges(n, &edges).expect("spanning tree keeps the graph connected")
}

/// A topology together with its cached structural profile and portfolio sets.
#[derive(Debug, Clone)]
pub struct Network {
    pub topology: Topology,
    pub profile: StructuralProfile,
    pub portfolios: PortfolioSet,
}

impl Network {
    pub fn new(topology: Topology) -> Result<Self, TopologyError> {
        let profile = analyze(&topology)?;
        let portfolios = PortfolioSet {
            nearest: nearest_neighbors(&topology),
            clique: clique_neighbors(&topology),
            hbn: hbn_neighbors(&topology, &profile),
        };
        Ok(Network { topology, profile, portfolios })
    }

    pub fn n(&self) -> usize {
        self.topology.n()
    }

    pub fn tctr(&self) -> Tctr {
        tctr(&self.profile)
    }
}
