use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LearnError, RolloutContext, ShapingMode, TrainConfig, TrainOutput, Trainer};
use crate::metrics::utilitarian;
use crate::rng::{stream, StreamRng};
use crate::shaping::{resolve_portfolio, IdMapping, PreferenceProfile, Weights};
use crate::topology::Network;

/// Exploit-and-perturb schedule over `(alpha, beta, omega)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbtConfig {
    pub population: usize,
    pub perturb: f64,
    /// Episodes between exploit steps.
    pub interval: u64,
    /// Fraction of the population in each of the top and bottom groups.
    pub quantile: f64,
}

impl Default for PbtConfig {
    fn default() -> Self {
        PbtConfig { population: 4, perturb: 1.2, interval: 50, quantile: 0.25 }
    }
}

impl PbtConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.population < 2 {
            return Err(LearnError::Run(format!("population must be at least 2, got {}", self.population)));
        }
        if !(self.perturb > 0.0 && self.perturb.is_finite()) {
            return Err(LearnError::Run("perturb factor must be positive".into()));
        }
        if self.interval == 0 {
            return Err(LearnError::Run("exploit interval must be positive".into()));
        }
        if !(self.quantile > 0.0 && self.quantile <= 0.5) {
            return Err(LearnError::Run("quantile must lie in (0, 0.5]".into()));
        }
        Ok(())
    }

    /// Size of the top and bottom groups: `ceil(population · quantile)`.
    pub fn group_size(&self) -> usize {
        ((self.population as f64 * self.quantile).ceil() as usize).clamp(1, self.population / 2)
    }
}

/// One exploit/perturb step. Members are ranked by objective (higher is
/// better, ties by index). Each bottom member copies the profile of a
/// uniformly drawn top member only if that member is strictly better, then
/// multiplies each of α, β, ω by `perturb` or `1 / perturb` on a coin flip.
/// One flip per weight is shared by all agents of the member.
pub fn pbt_schedule(
    config: &PbtConfig,
    profiles: &[PreferenceProfile],
    objectives: &[f64],
    rng: &mut StreamRng,
) -> Result<Vec<PreferenceProfile>, LearnError> {
    config.validate()?;
    if profiles.len() != config.population || objectives.len() != config.population {
        return Err(LearnError::Run(format!(
            "population {} but {} profiles and {} objectives",
            config.population,
            profiles.len(),
            objectives.len()
        )));
    }
    let score = |i: usize| if objectives[i].is_nan() { f64::NEG_INFINITY } else { objectives[i] };
    let mut order: Vec<usize> = (0..config.population).collect();
    order.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
    let k = config.group_size();
    let top = &order[..k];
    let bottom = &order[order.len() - k..];
    let mut next = profiles.to_vec();
    for &member in bottom {
        let &donor = top.choose(rng).expect("top group is non-empty");
        if score(donor) > score(member) {
            next[member] = profiles[donor].clone();
        }
        let factors: [f64; 3] =
            std::array::from_fn(|_| if rng.random_bool(0.5) { config.perturb } else { 1.0 / config.perturb });
        let weights = next[member]
            .weights()
            .iter()
            .map(|w| Weights {
                alpha: (w.alpha * factors[0]).max(0.0),
                beta: (w.beta * factors[1]).max(0.0),
                omega: (w.omega * factors[2]).max(0.0),
            })
            .collect();
        next[member] = PreferenceProfile::from_weights(weights)?;
    }
    Ok(next)
}

#[derive(Debug, Clone)]
pub struct PbtMember {
    pub output: TrainOutput,
    /// `(episode, profile)` at the start and after every exploit step.
    pub profiles: Vec<(u64, PreferenceProfile)>,
    /// Mean utilitarian return of each interval.
    pub objectives: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PbtOutput {
    pub members: Vec<PbtMember>,
}

/// A population trained in lockstep; profiles change only at interval
/// boundaries, which always fall between batches.
pub struct PbtRun {
    config: PbtConfig,
    network: Network,
    mapping: IdMapping,
    trainers: Vec<Trainer>,
    profiles: Vec<PreferenceProfile>,
    history: Vec<Vec<(u64, PreferenceProfile)>>,
    objectives: Vec<Vec<f64>>,
    seed: u64,
}

impl PbtRun {
    /// One member per seed in `seeds`, all starting from `initial`. Member
    /// checkpoints go to `seed_<seed>` under the configured directory.
    pub fn new(
        config: PbtConfig,
        template: RolloutContext,
        train: TrainConfig,
        network: Network,
        mapping: IdMapping,
        initial: PreferenceProfile,
        seeds: &[u64],
    ) -> Result<Self, LearnError> {
        config.validate()?;
        if seeds.len() != config.population {
            return Err(LearnError::Run(format!("{} seeds for population {}", seeds.len(), config.population)));
        }
        let portfolios = resolve_portfolio(&network, &initial, &mapping)?;
        let trainers = seeds
            .iter()
            .map(|&seed| {
                let ctx = RolloutContext { seed, shaping: ShapingMode::Shaped(portfolios.clone()), ..template.clone() };
                let config = TrainConfig {
                    checkpoint_dir: train.checkpoint_dir.as_ref().map(|d| d.join(format!("seed_{seed}"))),
                    ..train.clone()
                };
                let mut t = Trainer::new(ctx, config)?;
                t.set_shaping(ShapingMode::Shaped(portfolios.clone()), Some(initial.clone()));
                Ok(t)
            })
            .collect::<Result<Vec<_>, LearnError>>()?;
        let n = seeds.len();
        Ok(PbtRun {
            seed: seeds[0],
            history: vec![vec![(0, initial.clone())]; n],
            profiles: vec![initial; n],
            objectives: vec![Vec::new(); n],
            config,
            network,
            mapping,
            trainers,
        })
    }

    pub fn run(mut self) -> Result<PbtOutput, LearnError> {
        let exec = self.trainers[0].context().exec;
        let interval = self.config.interval;
        let mut step = 0u64;
        while !self.trainers.iter().all(Trainer::is_finished) {
            let mut results: Vec<(&mut Trainer, Option<Result<f64, LearnError>>)> =
                self.trainers.iter_mut().map(|t| (t, None)).collect();
            exec.for_each_mut(&mut results, |_, (t, out)| {
                *out = Some(t.run_episodes(interval).map(|logs| {
                    logs.iter().map(utilitarian).sum::<f64>() / logs.len().max(1) as f64
                }));
            });
            let mut objectives = Vec::with_capacity(results.len());
            for (_, r) in results {
                objectives.push(r.expect("interval ran")?);
            }
            for (h, &o) in self.objectives.iter_mut().zip(&objectives) {
                h.push(o);
            }
            if self.trainers.iter().all(Trainer::is_finished) {
                break;
            }
            let mut rng = stream(self.seed, "pbt", step);
            let next = pbt_schedule(&self.config, &self.profiles, &objectives, &mut rng)?;
            for (i, profile) in next.into_iter().enumerate() {
                let t = &mut self.trainers[i];
                if profile != self.profiles[i] {
                    let portfolios = resolve_portfolio(&self.network, &profile, &self.mapping)?;
                    t.set_shaping(ShapingMode::Shaped(portfolios), Some(profile.clone()));
                }
                self.history[i].push((t.episodes_done(), profile.clone()));
                self.profiles[i] = profile;
            }
            step += 1;
        }
        let members = self
            .trainers
            .into_iter()
            .zip(self.history)
            .zip(self.objectives)
            .map(|((t, profiles), objectives)| PbtMember { output: t.finish(), profiles, objectives })
            .collect();
        Ok(PbtOutput { members })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shaping::Preset;

    fn cfg(population: usize) -> PbtConfig {
        PbtConfig { population, ..PbtConfig::default() }
    }

    #[test]
    fn tie_means_perturb_only() {
        let p = PreferenceProfile::preset(Preset::NearestNeighbor, 5);
        let mut rng = stream(0, "t", 0);
        let next = pbt_schedule(&cfg(2), &[p.clone(), p.clone()], &[1.0, 1.0], &mut rng).unwrap();
        assert_eq!(next[0], p);
        let w = next[1].get(0).unwrap();
        assert!(w.alpha == 1.2 || (w.alpha - 1.0 / 1.2).abs() < 1e-15);
        assert_eq!((w.beta, w.omega), (0.0, 0.0));
        assert!(next[1].weights().iter().all(|x| *x == w));
    }

    #[test]
    fn bottom_copies_strictly_better_top() {
        let good = PreferenceProfile::homogeneous(3, Weights::new(0.0, 0.0, 2.0).unwrap());
        let bad = PreferenceProfile::homogeneous(3, Weights::new(3.0, 0.0, 0.0).unwrap());
        let mut rng = stream(1, "t", 0);
        let next = pbt_schedule(&cfg(4), &[bad.clone(), good.clone(), bad.clone(), bad.clone()], &[0.0, 9.0, 5.0, 5.0], &mut rng).unwrap();
        let w = next[0].get(0).unwrap();
        assert_eq!((w.alpha, w.beta), (0.0, 0.0));
        assert!(w.omega == 2.4 || (w.omega - 2.0 / 1.2).abs() < 1e-12);
        assert_eq!(next[1], good);
        assert_eq!(next[2], bad);
        assert_eq!(next[3], bad);
    }

    #[test]
    fn rejects_small_population() {
        let p = PreferenceProfile::baseline(2);
        let mut rng = stream(0, "t", 0);
        assert!(pbt_schedule(&cfg(1), &[p.clone()], &[0.0], &mut rng).is_err());
        assert!(pbt_schedule(&cfg(3), &[p.clone(), p.clone()], &[0.0, 1.0], &mut rng).is_err());
        assert_eq!(cfg(2).group_size(), 1);
        assert_eq!(cfg(8).group_size(), 2);
        assert_eq!(cfg(5).group_size(), 2);
    }

    #[test]
    fn constant_objectives_random_walk_in_log_space() {
        let mut profiles = vec![PreferenceProfile::homogeneous(2, Weights::new(1.0, 1.0, 1.0).unwrap()); 2];
        let mut rng = stream(3, "t", 0);
        for _ in 0..20 {
            profiles = pbt_schedule(&cfg(2), &profiles, &[4.0, 4.0], &mut rng).unwrap();
        }
        let w = profiles[1].get(0).unwrap();
        for x in w.as_array() {
            let steps = x.ln() / 1.2f64.ln();
            assert!((steps - steps.round()).abs() < 1e-9 && steps.round().abs() <= 20.0);
            assert_eq!(steps.round() as i64 % 2, 0);
        }
        assert_eq!(profiles[0].get(0).unwrap(), Weights::new(1.0, 1.0, 1.0).unwrap());
    }
}
