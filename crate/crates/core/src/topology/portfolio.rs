use serde::{Deserialize, Serialize};

use super::{StructuralProfile, Topology};

/// Per-vertex neighbor sets used to build preference portfolios. Every list is sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortfolioSet {
    pub nearest: Vec<Vec<usize>>,
    pub clique: Vec<Vec<usize>>,
    pub hbn: Vec<Vec<usize>>,
}

pub fn nearest_neighbors(t: &Topology) -> Vec<Vec<usize>> {
    (0..t.n()).map(|i| t.neighbors(i).collect()).collect()
}

/// `k ∈ clique(i)` iff `i` and `k` are adjacent and share a common neighbor,
/// i.e. they lie together on a triangle.
pub fn clique_neighbors(t: &Topology) -> Vec<Vec<usize>> {
    (0..t.n())
        .map(|i| t.neighbors(i).filter(|&k| t.neighbors(i).any(|q| q != k && t.adjacent(k, q))).collect())
        .collect()
}

/// Critical-connection neighbors: every `m ≠ i` lying on some shortest path
/// from `i` to a maximal-betweenness vertex `j ≠ i`, i.e.
/// `d(i, j) = d(i, m) + d(m, j)`. Targets themselves qualify. If `i` is the
/// unique maximum its set is empty.
pub fn hbn_neighbors(t: &Topology, profile: &StructuralProfile) -> Vec<Vec<usize>> {
    let n = t.n();
    let d = &profile.distance;
    (0..n)
        .map(|i| {
            let targets: Vec<usize> = profile.max_betweenness_set.iter().copied().filter(|&j| j != i).collect();
            (0..n)
                .filter(|&m| m != i && targets.iter().any(|&j| d[i][j] == d[i][m] + d[m][j]))
                .collect()
        })
        .collect()
}
