use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{Topology, TopologyError, BETWEENNESS_TIE_RTOL};

/// Per-vertex structural quantities of a topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralProfile {
    pub degree: Vec<usize>,
    /// Hop distances, row-major `n × n`.
    pub distance: Vec<Vec<u32>>,
    /// Unnormalized shortest-path betweenness (endpoints excluded, unordered pairs).
    pub betweenness: Vec<f64>,
    /// Burt's constraint `C_i`.
    pub burt_constraint: Vec<f64>,
    /// Bridging capacity `1 - C_i`.
    pub bridging: Vec<f64>,
    /// Vertices whose betweenness ties the maximum (relative tolerance 1e-9), sorted.
    pub max_betweenness_set: Vec<usize>,
}

impl StructuralProfile {
    pub fn n(&self) -> usize {
        self.degree.len()
    }
}

/// Topology-constrained range of the bridging capacity index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tctr {
    pub lower: f64,
    pub upper: f64,
}

impl Tctr {
    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lower - tol && x <= self.upper + tol
    }
}

pub fn analyze(t: &Topology) -> Result<StructuralProfile, TopologyError> {
    let degree: Vec<usize> = (0..t.n()).map(|v| t.degree(v)).collect();
    if let Some(v) = degree.iter().position(|&d| d == 0) {
        return Err(TopologyError::IsolatedVertex(v));
    }
    let distance = distances(t);
    let betweenness = betweenness(t);
    let burt_constraint = burt_constraints(t);
    let bridging = burt_constraint.iter().map(|c| 1.0 - c).collect();
    let max_betweenness_set = argmax_set(&betweenness);
    Ok(StructuralProfile { degree, distance, betweenness, burt_constraint, bridging, max_betweenness_set })
}

fn argmax_set(values: &[f64]) -> Vec<usize> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = BETWEENNESS_TIE_RTOL * max.abs().max(1.0);
    (0..values.len()).filter(|&v| max - values[v] <= tol).collect()
}

/// All-pairs hop distances by breadth-first search from every vertex.
pub fn distances(t: &Topology) -> Vec<Vec<u32>> {
    let n = t.n();
    (0..n)
        .map(|s| {
            let mut dist = vec![u32::MAX; n];
            dist[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for v in t.neighbors(u) {
                    if dist[v] == u32::MAX {
                        dist[v] = dist[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            dist
        })
        .collect()
}

/// Brandes' algorithm. Each unordered pair contributes once.
pub fn betweenness(t: &Topology) -> Vec<f64> {
    let n = t.n();
    let mut bc = vec![0.0; n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    let mut delta = vec![0.0f64; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut stack = Vec::with_capacity(n);
    let mut queue = VecDeque::with_capacity(n);
    for s in 0..n {
        sigma.iter_mut().for_each(|x| *x = 0.0);
        dist.iter_mut().for_each(|x| *x = -1);
        delta.iter_mut().for_each(|x| *x = 0.0);
        preds.iter_mut().for_each(Vec::clear);
        stack.clear();
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for w in t.neighbors(v) {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                bc[w] += delta[w];
            }
        }
    }
    // every unordered pair was visited from both ends
    bc.iter_mut().for_each(|x| *x *= 0.5);
    bc
}

/// Burt's constraint `C_i = Σ_{j∈N(i)} (p_ij + Σ_{q∈N(i), q≠j} p_iq p_qj)²`
/// with interaction shares `p_ij = (a_ij + a_ji) / Σ_k (a_ik + a_ki)`.
pub fn burt_constraints(t: &Topology) -> Vec<f64> {
    let n = t.n();
    let share = |i: usize, j: usize| -> f64 {
        if !t.adjacent(i, j) {
            return 0.0;
        }
        // symmetric adjacency: numerator 2, denominator 2·deg(i)
        1.0 / t.degree(i) as f64
    };
    (0..n)
        .map(|i| {
            let nbrs: Vec<usize> = t.neighbors(i).collect();
            nbrs.iter()
                .map(|&j| {
                    let indirect: f64 = nbrs.iter().filter(|&&q| q != j).map(|&q| share(i, q) * share(q, j)).sum();
                    let c = share(i, j) + indirect;
                    c * c
                })
                .sum()
        })
        .collect()
}

/// `(min_i (1 - C_i), max_i (1 - C_i))`.
pub fn tctr(profile: &StructuralProfile) -> Tctr {
    let lower = profile.bridging.iter().copied().fold(f64::INFINITY, f64::min);
    let upper = profile.bridging.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Tctr { lower, upper }
}
