use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LearnError, Policy, Transition, UpdateStats};
use crate::dilemmas::Action;
use crate::rng::StreamRng;

/// Fixed behaviour used as a control: uniform random actions, or always NOOP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scripted {
    /// `None` means "stand still".
    random_over: Option<usize>,
}

impl Scripted {
    pub fn random(n_actions: usize) -> Self {
        Scripted { random_over: Some(n_actions) }
    }

    pub fn still() -> Self {
        Scripted { random_over: None }
    }
}

impl Policy for Scripted {
    fn act(&self, _obs: &[u32], rng: &mut StreamRng) -> usize {
        match self.random_over {
            Some(n) => rng.random_range(0..n),
            None => Action::Noop.id(),
        }
    }

    fn update(&mut self, _episodes: &[&[Transition]], _rng: &mut StreamRng) -> Result<UpdateStats, LearnError> {
        Ok(UpdateStats::default())
    }
}
