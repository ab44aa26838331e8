//! Socio-relational reward shaping.
//!
//! Each agent holds weights `(alpha, beta, omega)` over its nearest, clique
//! and critical-connection neighbor sets. Its socio reward for a step is the
//! weighted sum of those neighbors' extrinsic rewards, and the learner is
//! trained on `r_tot = r_env + r_socio`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::Network;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapingError {
    #[error("profile covers {profile} agents but the topology has {n} vertices")]
    SizeMismatch { profile: usize, n: usize },
    #[error("weights must be finite and non-negative, got ({0}, {1}, {2})")]
    NegativeWeight(f64, f64, f64),
    #[error("unknown agent {0}")]
    UnknownAgent(usize),
    #[error("id mapping is not a permutation of 0..{0}")]
    NotBijective(usize),
    #[error("unknown preference preset `{0}` (expected NN, CN, HBN or baseline)")]
    UnknownPreset(String),
}

/// Care weights of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Weights {
    pub alpha: f64,
    pub beta: f64,
    pub omega: f64,
}

impl Weights {
    pub fn new(alpha: f64, beta: f64, omega: f64) -> Result<Self, ShapingError> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if ok(alpha) && ok(beta) && ok(omega) {
            Ok(Weights { alpha, beta, omega })
        } else {
            Err(ShapingError::NegativeWeight(alpha, beta, omega))
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.omega]
    }

    pub fn is_zero(&self) -> bool {
        self.as_array().iter().all(|&w| w == 0.0)
    }

    pub fn is_one_hot(&self) -> bool {
        self.as_array().iter().filter(|&&w| w > 0.0).count() == 1
    }
}

/// Named homogeneous profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    /// Network-free, preference-free protocol.
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "NN")]
    NearestNeighbor,
    #[serde(rename = "CN")]
    CliqueNeighbor,
    #[serde(rename = "HBN")]
    CriticalConnection,
}

impl Preset {
    pub fn weights(self) -> Weights {
        match self {
            Preset::Baseline => Weights::default(),
            Preset::NearestNeighbor => Weights { alpha: 1.0, ..Weights::default() },
            Preset::CliqueNeighbor => Weights { beta: 1.0, ..Weights::default() },
            Preset::CriticalConnection => Weights { omega: 1.0, ..Weights::default() },
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Preset::Baseline => "baseline",
            Preset::NearestNeighbor => "NN",
            Preset::CliqueNeighbor => "CN",
            Preset::CriticalConnection => "HBN",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Preset {
    type Err = ShapingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" | "none" => Ok(Preset::Baseline),
            "nn" => Ok(Preset::NearestNeighbor),
            "cn" => Ok(Preset::CliqueNeighbor),
            "hbn" => Ok(Preset::CriticalConnection),
            _ => Err(ShapingError::UnknownPreset(s.to_string())),
        }
    }
}

/// Per-agent care weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceProfile {
    weights: Vec<Weights>,
}

impl PreferenceProfile {
    pub fn homogeneous(n: usize, w: Weights) -> Self {
        PreferenceProfile { weights: vec![w; n] }
    }

    pub fn preset(preset: Preset, n: usize) -> Self {
        Self::homogeneous(n, preset.weights())
    }

    pub fn baseline(n: usize) -> Self {
        Self::preset(Preset::Baseline, n)
    }

    pub fn from_weights(weights: Vec<Weights>) -> Result<Self, ShapingError> {
        for w in &weights {
            Weights::new(w.alpha, w.beta, w.omega)?;
        }
        Ok(PreferenceProfile { weights })
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Weights] {
        &self.weights
    }

    pub fn get(&self, agent: usize) -> Option<Weights> {
        self.weights.get(agent).copied()
    }

    pub fn is_baseline(&self) -> bool {
        self.weights.iter().all(Weights::is_zero)
    }

    pub fn is_one_hot(&self) -> bool {
        self.weights.iter().all(Weights::is_one_hot)
    }
}

/// Returns a copy of `profile` with `agent`'s weights replaced. Callers apply
/// the result at the next episode boundary.
pub fn set_weights(
    profile: &PreferenceProfile,
    agent: usize,
    alpha: f64,
    beta: f64,
    omega: f64,
) -> Result<PreferenceProfile, ShapingError> {
    let w = Weights::new(alpha, beta, omega)?;
    if agent >= profile.n() {
        return Err(ShapingError::UnknownAgent(agent));
    }
    let mut next = profile.clone();
    next.weights[agent] = w;
    Ok(next)
}

/// Bijection between agent ids and topology vertex ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdMapping {
    agent_to_vertex: Vec<usize>,
    vertex_to_agent: Vec<usize>,
}

impl IdMapping {
    pub fn identity(n: usize) -> Self {
        IdMapping { agent_to_vertex: (0..n).collect(), vertex_to_agent: (0..n).collect() }
    }

    pub fn new(agent_to_vertex: Vec<usize>) -> Result<Self, ShapingError> {
        let n = agent_to_vertex.len();
        let mut vertex_to_agent = vec![usize::MAX; n];
        for (a, &v) in agent_to_vertex.iter().enumerate() {
            if v >= n || vertex_to_agent[v] != usize::MAX {
                return Err(ShapingError::NotBijective(n));
            }
            vertex_to_agent[v] = a;
        }
        Ok(IdMapping { agent_to_vertex, vertex_to_agent })
    }

    pub fn n(&self) -> usize {
        self.agent_to_vertex.len()
    }

    pub fn vertex(&self, agent: usize) -> usize {
        self.agent_to_vertex[agent]
    }

    pub fn agent(&self, vertex: usize) -> usize {
        self.vertex_to_agent[vertex]
    }
}

/// Resolved weighted neighbor lists, indexed by agent id (not vertex id).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolios {
    entries: Vec<Vec<(usize, f64)>>,
}

impl Portfolios {
    pub fn n(&self) -> usize {
        self.entries.len()
    }

    /// `(agent, weight)` pairs for `agent`, sorted by agent id, zero weights omitted.
    pub fn of(&self, agent: usize) -> &[(usize, f64)] {
        &self.entries[agent]
    }

    pub fn is_empty(&self) -> bool {
        self.entries.iter().all(Vec::is_empty)
    }

    /// Socio rewards for one step, written into `socio`.
    pub fn socio_into(&self, r_env: &[f64], socio: &mut [f64]) {
        for (i, out) in socio.iter_mut().enumerate() {
            *out = self.entries[i].iter().map(|&(j, w)| w * r_env[j]).sum();
        }
    }
}

/// Builds every agent's weighted portfolio. A neighbor in several sets
/// accumulates the sum of the applicable weights.
pub fn resolve_portfolio(
    network: &Network,
    profile: &PreferenceProfile,
    mapping: &IdMapping,
) -> Result<Portfolios, ShapingError> {
    let n = network.n();
    if profile.n() != n {
        return Err(ShapingError::SizeMismatch { profile: profile.n(), n });
    }
    if mapping.n() != n {
        return Err(ShapingError::SizeMismatch { profile: mapping.n(), n });
    }
    let sets = &network.portfolios;
    let entries = (0..n)
        .map(|agent| {
            let v = mapping.vertex(agent);
            let w = profile.weights[agent];
            let mut acc = vec![0.0; n];
            for (set, weight) in [(&sets.nearest[v], w.alpha), (&sets.clique[v], w.beta), (&sets.hbn[v], w.omega)] {
                if weight == 0.0 {
                    continue;
                }
                for &u in set {
                    acc[mapping.agent(u)] += weight;
                }
            }
            acc.into_iter().enumerate().filter(|&(_, w)| w != 0.0).collect()
        })
        .collect();
    Ok(Portfolios { entries })
}

/// One shaped step. `r_tot[i] == r_env[i] + r_socio[i]` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapedStep {
    pub r_env: Vec<f64>,
    pub r_socio: Vec<f64>,
    pub r_tot: Vec<f64>,
}

pub fn shape(r_env: &[f64], portfolios: &Portfolios) -> ShapedStep {
    let mut r_socio = vec![0.0; r_env.len()];
    portfolios.socio_into(r_env, &mut r_socio);
    let r_tot = r_env.iter().zip(&r_socio).map(|(e, s)| e + s).collect();
    ShapedStep { r_env: r_env.to_vec(), r_socio, r_tot }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_named, Network};
    use proptest::prelude::*;

    fn net(name: &str) -> Network {
        Network::new(build_named(name, 5).unwrap()).unwrap()
    }

    fn resolve(name: &str, preset: Preset) -> Portfolios {
        resolve_portfolio(&net(name), &PreferenceProfile::preset(preset, 5), &IdMapping::identity(5)).unwrap()
    }

    #[test]
    fn star_hbn_portfolio() {
        let p = resolve("star", Preset::CriticalConnection);
        assert_eq!(p.of(1), &[(0, 1.0)]);
        assert!(p.of(0).is_empty());
    }

    #[test]
    fn house_clique_portfolio() {
        let p = resolve("house", Preset::CliqueNeighbor);
        assert_eq!(p.of(1), &[(2, 1.0), (4, 1.0)]);
        assert!(p.of(0).is_empty());
    }

    #[test]
    fn baseline_is_empty() {
        for name in ["star", "house", "complete"] {
            assert!(resolve(name, Preset::Baseline).is_empty());
        }
    }

    #[test]
    fn overlapping_sets_accumulate() {
        let profile = PreferenceProfile::homogeneous(5, Weights::new(1.0, 0.5, 0.25).unwrap());
        let p = resolve_portfolio(&net("house"), &profile, &IdMapping::identity(5)).unwrap();
        // vertex 1: nearest {0,2,4}, clique {2,4}, hbn {2}
        assert_eq!(p.of(1), &[(0, 1.0), (2, 1.75), (4, 1.5)]);
    }

    #[test]
    fn mapping_relabels() {
        // agent a sits on vertex (a + 1) % 5: the hub vertex 0 is agent 4
        let m = IdMapping::new((0..5).map(|a| (a + 1) % 5).collect()).unwrap();
        let p = resolve_portfolio(&net("star"), &PreferenceProfile::preset(Preset::CriticalConnection, 5), &m).unwrap();
        assert!(p.of(4).is_empty());
        assert_eq!(p.of(0), &[(4, 1.0)]);
        assert!(IdMapping::new(vec![0, 0, 1]).is_err());
    }

    #[test]
    fn size_mismatch() {
        let r = resolve_portfolio(&net("star"), &PreferenceProfile::baseline(4), &IdMapping::identity(5));
        assert_eq!(r, Err(ShapingError::SizeMismatch { profile: 4, n: 5 }));
    }

    #[test]
    fn star_nn_shaping() {
        let s = shape(&[1.0, 2.0, 3.0, 4.0, 5.0], &resolve("star", Preset::NearestNeighbor));
        assert_eq!(s.r_tot[0], 15.0);
        assert_eq!(s.r_tot[1], 3.0);
        let z = shape(&[0.0; 5], &resolve("star", Preset::NearestNeighbor));
        assert!(z.r_socio.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn house_cn_shaping() {
        let s = shape(&[0.0, 10.0, 0.0, 0.0, 0.0], &resolve("house", Preset::CliqueNeighbor));
        assert_eq!(s.r_socio, vec![0.0, 0.0, 10.0, 0.0, 10.0]);
    }

    #[test]
    fn set_weights_rules() {
        let base = PreferenceProfile::baseline(5);
        let p = set_weights(&base, 0, 1.0, 0.0, 0.0).unwrap();
        assert!(p.get(0).unwrap().is_one_hot());
        assert!(p.get(1).unwrap().is_zero());
        assert_eq!(set_weights(&base, 0, -1.0, 0.0, 0.0), Err(ShapingError::NegativeWeight(-1.0, 0.0, 0.0)));
        assert_eq!(set_weights(&base, 5, 1.0, 0.0, 0.0), Err(ShapingError::UnknownAgent(5)));
        let same = set_weights(&p, 0, 1.0, 0.0, 0.0).unwrap();
        let n = net("wheel");
        let m = IdMapping::identity(5);
        assert_eq!(resolve_portfolio(&n, &p, &m).unwrap(), resolve_portfolio(&n, &same, &m).unwrap());
    }

    #[test]
    fn presets_parse() {
        assert_eq!("hbn".parse::<Preset>().unwrap(), Preset::CriticalConnection);
        assert_eq!("NN".parse::<Preset>().unwrap(), Preset::NearestNeighbor);
        assert!("xx".parse::<Preset>().is_err());
        assert!(PreferenceProfile::preset(Preset::CliqueNeighbor, 5).is_one_hot());
        assert!(PreferenceProfile::baseline(5).is_baseline());
    }

    proptest! {
        #[test]
        fn shaping_is_exact_and_linear(
            r in proptest::collection::vec(-60.0f64..10.0, 5),
            lambda in 0.1f64..10.0,
            a in 0.0f64..2.0, b in 0.0f64..2.0, w in 0.0f64..2.0,
        ) {
            let profile = PreferenceProfile::homogeneous(5, Weights::new(a, b, w).unwrap());
            let p = resolve_portfolio(&net("house"), &profile, &IdMapping::identity(5)).unwrap();
            let s = shape(&r, &p);
            for i in 0..5 {
                prop_assert_eq!(s.r_tot[i], s.r_env[i] + s.r_socio[i]);
            }
            let scaled: Vec<f64> = r.iter().map(|x| lambda * x).collect();
            let s2 = shape(&scaled, &p);
            for i in 0..5 {
                prop_assert!((s2.r_socio[i] - lambda * s.r_socio[i]).abs() <= 1e-9 * (1.0 + s2.r_socio[i].abs()));
            }
        }

        #[test]
        fn regular_graph_symmetric_care(r in proptest::collection::vec(-60.0f64..10.0, 5), alpha in 0.0f64..3.0) {
            for (name, degree) in [("cycle", 2.0), ("complete", 4.0)] {
                let profile = PreferenceProfile::homogeneous(5, Weights::new(alpha, 0.0, 0.0).unwrap());
                let p = resolve_portfolio(&net(name), &profile, &IdMapping::identity(5)).unwrap();
                let s = shape(&r, &p);
                let lhs: f64 = s.r_socio.iter().sum();
                let rhs = alpha * degree * r.iter().sum::<f64>();
                prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
            }
        }
    }
}
