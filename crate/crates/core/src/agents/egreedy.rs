use rand::Rng;

use super::{MeanValues, OfflineSettings};
use crate::error::Result;
use crate::mdp::{Policy, Transition};
use crate::prior::PosteriorState;
use crate::rng::Stream;

/// Greedy on the posterior mean MDP, uniformly random with probability
/// `epsilon`. A random step does not solve the model.
#[derive(Debug, Clone)]
pub struct EGreedy {
    values: MeanValues,
    epsilon: f64,
}

impl EGreedy {
    pub fn new(posterior: PosteriorState, epsilon: f64, settings: &OfflineSettings) -> Self {
        EGreedy {
            values: MeanValues::new(posterior, 0.0, settings),
            epsilon,
        }
    }

    pub fn posterior(&self) -> &PosteriorState {
        self.values.posterior()
    }

    /// Number of model solves so far.
    pub fn solves(&self) -> u64 {
        self.values.solves()
    }

    pub fn q_row(&mut self, x: usize) -> Vec<f64> {
        self.values.row(x).to_vec()
    }
}

impl Policy for EGreedy {
    fn search(&mut self, x: usize, rng: &mut Stream) -> Result<usize> {
        let r: f64 = rng.random();
        if r < self.epsilon {
            Ok(rng.random_range(0..self.values.posterior().n_actions()))
        } else {
            Ok(self.values.greedy(x))
        }
    }

    fn learn(&mut self, t: &Transition) {
        self.values.observe(t);
    }
}

/// Greedy on the posterior mean MDP with the exploration bonus
/// `beta / c(x, u, y)` added to every reward.
#[derive(Debug, Clone)]
pub struct Beb {
    values: MeanValues,
}

impl Beb {
    pub fn new(posterior: PosteriorState, beta: f64, settings: &OfflineSettings) -> Self {
        Beb {
            values: MeanValues::new(posterior, beta, settings),
        }
    }

    pub fn posterior(&self) -> &PosteriorState {
        self.values.posterior()
    }

    pub fn q_row(&mut self, x: usize) -> Vec<f64> {
        self.values.row(x).to_vec()
    }
}

impl Policy for Beb {
    fn search(&mut self, x: usize, rng: &mut Stream) -> Result<usize> {
        // Same draw as e-Greedy so the two stay in lockstep at beta = 0.
        let _: f64 = rng.random();
        Ok(self.values.greedy(x))
    }

    fn learn(&mut self, t: &Transition) {
        self.values.observe(t);
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::mdp::{simulate_trajectory, value_iteration, Mdp};
    use crate::prior::{make_gc, FdmDistribution};
    use crate::rng::seeded;

    fn settings() -> OfflineSettings {
        OfflineSettings::new(0.9, 30)
    }

    /// One state, two self-loop actions paying `r0` and `r1`.
    fn bandit(r0: f64, r1: f64, theta: [f64; 2]) -> FdmDistribution {
        FdmDistribution::new(
            "bandit",
            "B",
            1,
            2,
            vec![theta[0], theta[1]],
            vec![r0, r1],
            0,
        )
        .unwrap()
    }

    #[test]
    fn zero_epsilon_is_greedy_on_mean_mdp() {
        let prior = Arc::new(make_gc());
        let mut agent = EGreedy::new(PosteriorState::new(prior.clone()), 0.0, &settings());
        let q = value_iteration(&prior.mean_mdp().unwrap(), 0.9, 1e-6).unwrap();
        let mut rng = seeded(0);
        for x in 0..5 {
            assert_eq!(agent.search(x, &mut rng).unwrap(), q.greedy_action(x));
        }
        assert_eq!(agent.solves(), 1);
    }

    #[test]
    fn mixing_probability() {
        let prior = Arc::new(bandit(1.0, 0.0, [1.0, 1.0]));
        let mut agent = EGreedy::new(PosteriorState::new(prior), 0.5, &settings());
        let mut rng = seeded(2);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| agent.search(0, &mut rng).unwrap() == 0)
            .count() as f64;
        let se = (0.75 * 0.25 / n as f64).sqrt();
        assert!((hits / n as f64 - 0.75).abs() < 3.0 * se);
    }

    #[test]
    fn random_steps_skip_the_solver() {
        let prior = Arc::new(make_gc());
        let mut agent = EGreedy::new(PosteriorState::new(prior), 1.0, &settings());
        let mut rng = seeded(3);
        for _ in 0..20 {
            agent.search(0, &mut rng).unwrap();
        }
        assert_eq!(agent.solves(), 0);
    }

    #[test]
    fn cache_is_refreshed_only_after_updates() {
        let prior = Arc::new(make_gc());
        let mut agent = EGreedy::new(PosteriorState::new(prior), 0.0, &settings());
        let mut rng = seeded(3);
        agent.search(0, &mut rng).unwrap();
        agent.search(1, &mut rng).unwrap();
        assert_eq!(agent.solves(), 1);
        agent.learn(&Transition {
            x: 0,
            u: 0,
            y: 1,
            r: 0.0,
        });
        assert_eq!(agent.posterior().count(0, 0, 1), 1);
        agent.search(1, &mut rng).unwrap();
        assert_eq!(agent.solves(), 2);
    }

    #[test]
    fn beb_bonus_flips_choice() {
        // action 0: rho = 0.5 seen 100 times; action 1: rho = 0.4, c = 1
        let prior = Arc::new(bandit(0.5, 0.4, [100.0, 1.0]));
        let gamma = 0.9;
        let s = OfflineSettings::new(gamma, 10);
        let mut rng = seeded(0);
        let mut plain = Beb::new(PosteriorState::new(prior.clone()), 0.0, &s);
        assert_eq!(plain.search(0, &mut rng).unwrap(), 0);
        let mut beb = Beb::new(PosteriorState::new(prior), 0.25, &s);
        assert_eq!(beb.search(0, &mut rng).unwrap(), 1);
        // brute force on the bonus-augmented MDP
        let augmented = Mdp::new(
            1,
            2,
            vec![1.0, 1.0],
            vec![0.5 + 0.25 / 100.0, 0.4 + 0.25],
            0,
        )
        .unwrap();
        let q = value_iteration(&augmented, gamma, 1e-9).unwrap();
        assert_eq!(q.greedy_action(0), 1);
        let row = beb.q_row(0);
        assert!((row[0] - q.get(0, 0)).abs() < 1e-4);
        assert!((row[1] - q.get(0, 1)).abs() < 1e-4);
    }

    #[test]
    fn beb_bonus_shrinks_with_counts() {
        let prior = Arc::new(bandit(0.0, 0.0, [1.0, 1.0]));
        let s = OfflineSettings::new(0.5, 10);
        let mut beb = Beb::new(PosteriorState::new(prior), 2.5, &s);
        // reward 0 + 2.5 / 1, forever
        assert!((beb.q_row(0)[0] - 5.0).abs() < 1e-5);
        beb.learn(&Transition {
            x: 0,
            u: 0,
            y: 0,
            r: 0.0,
        });
        // action 0 now pays 2.5 / 2 once, then follows action 1 (value 5)
        assert!((beb.q_row(0)[0] - 3.75).abs() < 1e-5);
    }

    #[test]
    fn beb_zero_matches_greedy_trajectories() {
        let prior = Arc::new(make_gc());
        let s = settings();
        for seed in 0..5 {
            let mdp = prior.sample_mdp(&mut seeded(100 + seed));
            let mut a = EGreedy::new(PosteriorState::new(prior.clone()), 0.0, &s);
            let mut b = Beb::new(PosteriorState::new(prior.clone()), 0.0, &s);
            let ra = simulate_trajectory(&mdp, &mut a, 30, 0.9, &mut seeded(seed)).unwrap();
            let rb = simulate_trajectory(&mdp, &mut b, 30, 0.9, &mut seeded(seed)).unwrap();
            assert_eq!(ra.transitions, rb.transitions);
        }
    }
}
