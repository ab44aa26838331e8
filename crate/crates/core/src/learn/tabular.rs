use std::collections::BTreeMap;
use std::hash::{DefaultHasher, Hash, Hasher};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LearnError, Policy, PolicySpec, Transition, UpdateStats};
use crate::rng::StreamRng;

/// ε-greedy one-step Q-learning over hashed observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularQ {
    n_actions: usize,
    learning_rate: f64,
    gamma: f64,
    epsilon_start: f64,
    epsilon_end: f64,
    epsilon_decay_episodes: u64,
    episodes_seen: u64,
    table: BTreeMap<u64, Vec<f64>>,
}

fn state_key(obs: &[u32]) -> u64 {
    let mut h = DefaultHasher::new();
    obs.hash(&mut h);
    h.finish()
}

impl TabularQ {
    pub fn new(spec: &PolicySpec, n_actions: usize) -> Self {
        TabularQ {
            n_actions,
            learning_rate: spec.learning_rate,
            gamma: spec.gamma,
            epsilon_start: spec.epsilon_start,
            epsilon_end: spec.epsilon_end,
            epsilon_decay_episodes: spec.epsilon_decay_episodes,
            episodes_seen: 0,
            table: BTreeMap::new(),
        }
    }

    pub fn epsilon(&self) -> f64 {
        let frac = (self.episodes_seen as f64 / self.epsilon_decay_episodes as f64).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    pub fn states(&self) -> usize {
        self.table.len()
    }

    pub fn q(&self, obs: &[u32]) -> Option<&[f64]> {
        self.table.get(&state_key(obs)).map(Vec::as_slice)
    }

    fn max_q(&self, key: u64) -> f64 {
        self.table.get(&key).map_or(0.0, |q| q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }
}

impl Policy for TabularQ {
    fn act(&self, obs: &[u32], rng: &mut StreamRng) -> usize {
        if rng.random::<f64>() < self.epsilon() {
            return rng.random_range(0..self.n_actions);
        }
        let Some(q) = self.table.get(&state_key(obs)) else {
            return rng.random_range(0..self.n_actions);
        };
        let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = (0..q.len()).filter(|&a| q[a] == best).collect();
        ties[rng.random_range(0..ties.len())]
    }

    fn update(&mut self, episodes: &[&[Transition]], _rng: &mut StreamRng) -> Result<UpdateStats, LearnError> {
        let mut sq_err = 0.0;
        let mut samples = 0;
        for ep in episodes {
            let keys: Vec<u64> = ep.iter().map(|tr| state_key(&tr.obs)).collect();
            for (t, tr) in ep.iter().enumerate() {
                let bootstrap = if tr.done || t + 1 == ep.len() { 0.0 } else { self.gamma * self.max_q(keys[t + 1]) };
                let target = tr.r_tot + bootstrap;
                let q = self.table.entry(keys[t]).or_insert_with(|| vec![0.0; self.n_actions]);
                let err = target - q[tr.action as usize];
                q[tr.action as usize] += self.learning_rate * err;
                sq_err += err * err;
                samples += 1;
            }
        }
        self.episodes_seen += episodes.len() as u64;
        let loss = if samples == 0 { 0.0 } else { sq_err / samples as f64 };
        Ok(UpdateStats { loss, value_loss: loss, samples, ..UpdateStats::default() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn tr(obs: Vec<u32>, action: u8, r: f64, done: bool) -> Transition {
        Transition { obs, action, r_tot: r, r_env: r, done }
    }

    #[test]
    fn q_update_single_step() {
        let mut spec = PolicySpec::tabular_q();
        spec.learning_rate = 0.5;
        spec.gamma = 0.9;
        let mut q = TabularQ::new(&spec, 3);
        let ep = vec![tr(vec![1], 2, 0.0, false), tr(vec![2], 0, 4.0, true)];
        q.update(&[&ep], &mut stream(0, "t", 0)).unwrap();
        assert_eq!(q.q(&[2]).unwrap(), &[2.0, 0.0, 0.0]);
        // the successor was still unvisited when the first step updated
        assert_eq!(q.q(&[1]).unwrap(), &[0.0, 0.0, 0.0]);
        q.update(&[&ep], &mut stream(0, "t", 0)).unwrap();
        assert_eq!(q.q(&[1]).unwrap(), &[0.0, 0.0, 0.5 * 0.9 * 2.0]);
        assert_eq!(q.q(&[2]).unwrap(), &[3.0, 0.0, 0.0]);
    }

    #[test]
    fn greedy_after_decay() {
        let mut spec = PolicySpec::tabular_q();
        spec.epsilon_decay_episodes = 1;
        spec.epsilon_end = 0.0;
        let mut q = TabularQ::new(&spec, 4);
        assert_eq!(q.epsilon(), 1.0);
        let ep = vec![tr(vec![7], 3, 1.0, true)];
        q.update(&[&ep], &mut stream(0, "t", 0)).unwrap();
        assert_eq!(q.epsilon(), 0.0);
        let mut rng = stream(1, "t", 0);
        assert!((0..100).all(|_| q.act(&[7], &mut rng) == 3));
    }
}
