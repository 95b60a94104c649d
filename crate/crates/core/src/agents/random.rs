use rand::Rng;

use crate::error::Result;
use crate::mdp::{Policy, Transition};
use crate::rng::Stream;

/// Uniformly random actions; ignores everything it observes.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    n_actions: usize,
}

impl RandomPolicy {
    pub fn new(n_actions: usize) -> Self {
        assert!(n_actions > 0);
        RandomPolicy { n_actions }
    }
}

impl Policy for RandomPolicy {
    fn search(&mut self, _x: usize, rng: &mut Stream) -> Result<usize> {
        Ok(rng.random_range(0..self.n_actions))
    }

    fn learn(&mut self, _t: &Transition) {}
}
