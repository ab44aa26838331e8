use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{discounted_returns, LearnError, Policy, PolicySpec, Transition, UpdateStats};
use crate::rng::{stream, StreamRng};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// One frozen training sample: observation, taken action, advantage and return.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub obs: Vec<u32>,
    pub action: usize,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    w: usize,
    b: usize,
    inp: usize,
    out: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    trunk: Vec<Dense>,
    policy: Dense,
    value: Dense,
    len: usize,
}

impl Layout {
    fn new(obs_dim: usize, hidden: &[usize], n_actions: usize) -> Self {
        let mut off = 0;
        let mut dense = |inp: usize, out: usize| {
            let d = Dense { w: off, b: off + inp * out, inp, out };
            off += inp * out + out;
            d
        };
        let mut trunk = Vec::with_capacity(hidden.len());
        let mut inp = obs_dim;
        for &h in hidden {
            trunk.push(dense(inp, h));
            inp = h;
        }
        let policy = dense(inp, n_actions);
        let value = dense(inp, 1);
        Layout { trunk, policy, value, len: off }
    }
}

struct Forward {
    hidden: Vec<Vec<f64>>,
    probs: Vec<f64>,
    logp: Vec<f64>,
    value: f64,
}

/// Advantage actor-critic: tanh MLP trunk on the sparse binary observation,
/// softmax policy head and scalar value head, Monte-Carlo returns, Adam.
///
/// Loss per minibatch of `N` samples:
/// `mean[-log π(a) Â + c_v ½ (v - G)² - c_e H(π)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AcState", into = "AcState")]
pub struct ActorCritic {
    obs_dim: usize,
    hidden: Vec<usize>,
    n_actions: usize,
    learning_rate: f64,
    entropy_coef: f64,
    value_coef: f64,
    gamma: f64,
    minibatch: usize,
    params: Vec<f64>,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    adam_t: u64,
    layout: Layout,
}

#[derive(Clone, Serialize, Deserialize)]
struct AcState {
    obs_dim: usize,
    hidden: Vec<usize>,
    n_actions: usize,
    learning_rate: f64,
    entropy_coef: f64,
    value_coef: f64,
    gamma: f64,
    minibatch: usize,
    params: Vec<f64>,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    adam_t: u64,
}

impl TryFrom<AcState> for ActorCritic {
    type Error = String;

    fn try_from(s: AcState) -> Result<Self, String> {
        let layout = Layout::new(s.obs_dim, &s.hidden, s.n_actions);
        if s.params.len() != layout.len || s.adam_m.len() != layout.len || s.adam_v.len() != layout.len {
            return Err(format!("expected {} parameters, found {}", layout.len, s.params.len()));
        }
        Ok(ActorCritic {
            obs_dim: s.obs_dim,
            hidden: s.hidden,
            n_actions: s.n_actions,
            learning_rate: s.learning_rate,
            entropy_coef: s.entropy_coef,
            value_coef: s.value_coef,
            gamma: s.gamma,
            minibatch: s.minibatch,
            params: s.params,
            adam_m: s.adam_m,
            adam_v: s.adam_v,
            adam_t: s.adam_t,
            layout,
        })
    }
}

impl From<ActorCritic> for AcState {
    fn from(a: ActorCritic) -> Self {
        AcState {
            obs_dim: a.obs_dim,
            hidden: a.hidden,
            n_actions: a.n_actions,
            learning_rate: a.learning_rate,
            entropy_coef: a.entropy_coef,
            value_coef: a.value_coef,
            gamma: a.gamma,
            minibatch: a.minibatch,
            params: a.params,
            adam_m: a.adam_m,
            adam_v: a.adam_v,
            adam_t: a.adam_t,
        }
    }
}

impl ActorCritic {
    pub fn new(spec: &PolicySpec, obs_dim: usize, n_actions: usize, seed: u64, agent: usize) -> Self {
        let layout = Layout::new(obs_dim, &spec.hidden, n_actions);
        let mut params = vec![0.0; layout.len];
        let mut rng = stream(seed, "ac-init", agent as u64);
        let mut init = |d: &Dense, scale: f64| {
            let bound = scale / (d.inp as f64).sqrt();
            for p in &mut params[d.w..d.b] {
                *p = rng.random_range(-bound..bound);
            }
        };
        for d in &layout.trunk {
            init(d, 1.0);
        }
        init(&layout.policy, 0.01);
        init(&layout.value, 1.0);
        ActorCritic {
            obs_dim,
            hidden: spec.hidden.clone(),
            n_actions,
            learning_rate: spec.learning_rate,
            entropy_coef: spec.entropy_coef,
            value_coef: spec.value_coef,
            gamma: spec.gamma,
            minibatch: spec.minibatch,
            adam_m: vec![0.0; layout.len],
            adam_v: vec![0.0; layout.len],
            adam_t: 0,
            params,
            layout,
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn n_params(&self) -> usize {
        self.layout.len
    }

    /// Action probabilities for one observation.
    pub fn probs(&self, obs: &[u32]) -> Vec<f64> {
        self.forward(&self.params, obs).probs
    }

    pub fn value(&self, obs: &[u32]) -> f64 {
        self.forward(&self.params, obs).value
    }

    fn forward(&self, params: &[f64], obs: &[u32]) -> Forward {
        let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(self.layout.trunk.len());
        for (l, d) in self.layout.trunk.iter().enumerate() {
            let mut pre = params[d.b..d.b + d.out].to_vec();
            if l == 0 {
                for &i in obs {
                    let row = &params[d.w + i as usize * d.out..d.w + (i as usize + 1) * d.out];
                    pre.iter_mut().zip(row).for_each(|(p, w)| *p += w);
                }
            } else {
                for (i, &x) in hidden[l - 1].iter().enumerate() {
                    let row = &params[d.w + i * d.out..d.w + (i + 1) * d.out];
                    pre.iter_mut().zip(row).for_each(|(p, w)| *p += x * w);
                }
            }
            pre.iter_mut().for_each(|p| *p = p.tanh());
            hidden.push(pre);
        }
        let h = hidden.last().expect("trunk is non-empty");
        let dense_out = |d: &Dense| {
            let mut out = params[d.b..d.b + d.out].to_vec();
            for (i, &x) in h.iter().enumerate() {
                let row = &params[d.w + i * d.out..d.w + (i + 1) * d.out];
                out.iter_mut().zip(row).for_each(|(o, w)| *o += x * w);
            }
            out
        };
        let logits = dense_out(&self.layout.policy);
        let value = dense_out(&self.layout.value)[0];
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        let logp: Vec<f64> = logits.iter().map(|z| z - log_z).collect();
        let probs = logp.iter().map(|l| l.exp()).collect();
        Forward { hidden, probs, logp, value }
    }

    /// Minibatch loss at `params`, with its components.
    pub fn loss(&self, params: &[f64], batch: &[Sample]) -> UpdateStats {
        self.loss_and_grad(params, batch, None)
    }

    /// Loss and its analytic gradient with respect to `params`.
    pub fn gradient(&self, params: &[f64], batch: &[Sample]) -> (UpdateStats, Vec<f64>) {
        let mut grad = vec![0.0; self.layout.len];
        let stats = self.loss_and_grad(params, batch, Some(&mut grad));
        (stats, grad)
    }

    fn loss_and_grad(&self, params: &[f64], batch: &[Sample], mut grad: Option<&mut Vec<f64>>) -> UpdateStats {
        let n = batch.len() as f64;
        let mut stats = UpdateStats { samples: batch.len(), ..UpdateStats::default() };
        for s in batch {
            let f = self.forward(params, &s.obs);
            let entropy: f64 = -f.probs.iter().zip(&f.logp).map(|(p, l)| p * l).sum::<f64>();
            let pl = -f.logp[s.action] * s.advantage;
            let vl = 0.5 * (f.value - s.ret).powi(2);
            stats.policy_loss += pl / n;
            stats.value_loss += vl / n;
            stats.entropy += entropy / n;
            stats.loss += (pl + self.value_coef * vl - self.entropy_coef * entropy) / n;
            if let Some(g) = grad.as_deref_mut() {
                let dlogits: Vec<f64> = (0..self.n_actions)
                    .map(|k| {
                        let onehot = if k == s.action { 1.0 } else { 0.0 };
                        (-s.advantage * (onehot - f.probs[k]) + self.entropy_coef * f.probs[k] * (f.logp[k] + entropy)) / n
                    })
                    .collect();
                let dv = self.value_coef * (f.value - s.ret) / n;
                self.backward(params, &s.obs, &f, &dlogits, dv, g);
            }
        }
        stats
    }

    fn backward(&self, params: &[f64], obs: &[u32], f: &Forward, dlogits: &[f64], dv: f64, g: &mut [f64]) {
        let h = f.hidden.last().expect("trunk is non-empty");
        let (p, v) = (&self.layout.policy, &self.layout.value);
        let mut dh = vec![0.0; h.len()];
        for (j, &x) in h.iter().enumerate() {
            let row = p.w + j * p.out;
            for k in 0..p.out {
                g[row + k] += x * dlogits[k];
                dh[j] += params[row + k] * dlogits[k];
            }
            g[v.w + j] += x * dv;
            dh[j] += params[v.w + j] * dv;
        }
        for k in 0..p.out {
            g[p.b + k] += dlogits[k];
        }
        g[v.b] += dv;

        for (l, d) in self.layout.trunk.iter().enumerate().rev() {
            let out = &f.hidden[l];
            let dpre: Vec<f64> = dh.iter().zip(out).map(|(d, y)| d * (1.0 - y * y)).collect();
            for j in 0..d.out {
                g[d.b + j] += dpre[j];
            }
            if l == 0 {
                for &i in obs {
                    let row = d.w + i as usize * d.out;
                    for j in 0..d.out {
                        g[row + j] += dpre[j];
                    }
                }
            } else {
                let prev = &f.hidden[l - 1];
                let mut dprev = vec![0.0; d.inp];
                for (i, &x) in prev.iter().enumerate() {
                    let row = d.w + i * d.out;
                    for j in 0..d.out {
                        g[row + j] += x * dpre[j];
                        dprev[i] += params[row + j] * dpre[j];
                    }
                }
                dh = dprev;
            }
        }
    }

    fn adam_step(&mut self, grad: &[f64]) {
        self.adam_t += 1;
        let t = self.adam_t as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for i in 0..self.params.len() {
            let g = grad[i];
            if g == 0.0 && self.adam_m[i] == 0.0 && self.adam_v[i] == 0.0 {
                continue;
            }
            self.adam_m[i] = ADAM_BETA1 * self.adam_m[i] + (1.0 - ADAM_BETA1) * g;
            self.adam_v[i] = ADAM_BETA2 * self.adam_v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = self.adam_m[i] / c1;
            let v_hat = self.adam_v[i] / c2;
            self.params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }

    /// Turns episodes into samples with normalized advantages under the current critic.
    pub fn samples(&self, episodes: &[&[Transition]]) -> Vec<Sample> {
        let mut out = Vec::with_capacity(episodes.iter().map(|e| e.len()).sum());
        for ep in episodes {
            let rewards: Vec<f64> = ep.iter().map(|t| t.r_tot).collect();
            let dones: Vec<bool> = ep.iter().map(|t| t.done).collect();
            let returns = discounted_returns(&rewards, &dones, self.gamma);
            for (tr, g) in ep.iter().zip(returns) {
                let advantage = g - self.value(&tr.obs);
                out.push(Sample { obs: tr.obs.clone(), action: tr.action as usize, advantage, ret: g });
            }
        }
        if out.len() > 1 {
            let n = out.len() as f64;
            let mean = out.iter().map(|s| s.advantage).sum::<f64>() / n;
            let std = (out.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n).sqrt();
            for s in &mut out {
                s.advantage = (s.advantage - mean) / (std + 1e-8);
            }
        }
        out
    }
}

impl Policy for ActorCritic {
    fn act(&self, obs: &[u32], rng: &mut StreamRng) -> usize {
        let probs = self.probs(obs);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        probs.len() - 1
    }

    fn update(&mut self, episodes: &[&[Transition]], rng: &mut StreamRng) -> Result<UpdateStats, LearnError> {
        let mut samples = self.samples(episodes);
        samples.shuffle(rng);
        let mut total = UpdateStats::default();
        let chunks = samples.len().div_ceil(self.minibatch).max(1) as f64;
        for chunk in samples.chunks(self.minibatch) {
            let (stats, grad) = self.gradient(&self.params, chunk);
            self.adam_step(&grad);
            total.loss += stats.loss / chunks;
            total.policy_loss += stats.policy_loss / chunks;
            total.value_loss += stats.value_loss / chunks;
            total.entropy += stats.entropy / chunks;
            total.samples += stats.samples;
            if !stats.loss.is_finite() {
                return Ok(total);
            }
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            total.loss = f64::NAN;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro_batch(ac: &ActorCritic, rng: &mut StreamRng) -> Vec<Sample> {
        (0..12)
            .map(|_| {
                let mut obs: Vec<u32> = (0..ac.obs_dim as u32).filter(|_| rng.random_bool(0.2)).collect();
                obs.dedup();
                Sample {
                    obs,
                    action: rng.random_range(0..ac.n_actions),
                    advantage: rng.random_range(-2.0..2.0),
                    ret: rng.random_range(-5.0..5.0),
                }
            })
            .collect()
    }

    fn spec(hidden: Vec<usize>) -> PolicySpec {
        PolicySpec { hidden, entropy_coef: 0.05, ..PolicySpec::actor_critic() }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for hidden in [vec![8], vec![6, 5]] {
            let mut ac = ActorCritic::new(&spec(hidden), 20, 5, 3, 0);
            let mut rng = stream(9, "gc", 0);
            // larger policy weights so every term is exercised
            for p in &mut ac.params {
                *p += rng.random_range(-0.3..0.3);
            }
            let batch = micro_batch(&ac, &mut rng);
            let (_, grad) = ac.gradient(&ac.params, &batch);
            let h = 1e-6;
            let mut max_rel = 0.0f64;
            for i in 0..ac.n_params() {
                let mut plus = ac.params.clone();
                plus[i] += h;
                let mut minus = ac.params.clone();
                minus[i] -= h;
                let fd = (ac.loss(&plus, &batch).loss - ac.loss(&minus, &batch).loss) / (2.0 * h);
                let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
                max_rel = max_rel.max(rel);
            }
            assert!(max_rel < 1e-4, "max relative error {max_rel}");
        }
    }

    #[test]
    fn initial_policy_is_near_uniform() {
        let ac = ActorCritic::new(&PolicySpec::actor_critic(), 245, 8, 0, 0);
        let p = ac.probs(&[0, 10, 100]);
        assert!(p.iter().all(|x| (x - 0.125).abs() < 0.02));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let mut s = PolicySpec::actor_critic();
        s.learning_rate = 0.0;
        let mut ac = ActorCritic::new(&s, 30, 4, 1, 2);
        let before = ac.params.clone();
        let ep: Vec<Transition> = (0..50)
            .map(|t| Transition { obs: vec![t % 30], action: (t % 4) as u8, r_tot: 1.0, r_env: 1.0, done: t == 49 })
            .collect();
        ac.update(&[&ep], &mut stream(0, "u", 0)).unwrap();
        assert_eq!(ac.params, before);
    }

    #[test]
    fn learns_a_contextual_bandit() {
        let mut s = PolicySpec::actor_critic();
        s.learning_rate = 0.01;
        s.hidden = vec![16];
        s.minibatch = 64;
        let mut ac = ActorCritic::new(&s, 4, 3, 5, 0);
        let mut rng = stream(2, "bandit", 0);
        for _ in 0..150 {
            let ep: Vec<Transition> = (0..64)
                .map(|_| {
                    let ctx = rng.random_range(0..3u32);
                    let a = ac.act(&[ctx], &mut rng);
                    let r = if a == ctx as usize { 1.0 } else { 0.0 };
                    Transition { obs: vec![ctx], action: a as u8, r_tot: r, r_env: r, done: true }
                })
                .collect();
            ac.update(&[&ep], &mut rng).unwrap();
        }
        for ctx in 0..3u32 {
            assert!(ac.probs(&[ctx])[ctx as usize] > 0.8, "{:?}", ac.probs(&[ctx]));
        }
    }

    #[test]
    fn serde_round_trip() {
        let ac = ActorCritic::new(&spec(vec![4]), 10, 3, 0, 0);
        let json = serde_json::to_string(&ac).unwrap();
        let back: ActorCritic = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ac);
        let broken = json.replace("\"obs_dim\":10", "\"obs_dim\":11");
        assert!(serde_json::from_str::<ActorCritic>(&broken).is_err());
    }
}
