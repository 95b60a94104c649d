use super::{MeanValues, OfflineSettings};
use crate::error::Result;
use crate::mdp::{Policy, Transition};
use crate::prior::PosteriorState;
use crate::rng::Stream;

/// Boltzmann probabilities `exp(q / tau)` normalised, computed after
/// subtracting the largest value.
pub fn boltzmann(q: &[f64], tau: f64) -> Vec<f64> {
    let m = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = q.iter().map(|&v| ((v - m) / tau).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Samples actions from a Boltzmann distribution over the posterior mean
/// MDP's optimal action values.
#[derive(Debug, Clone)]
pub struct SoftMax {
    values: MeanValues,
    tau: f64,
}

impl SoftMax {
    pub fn new(posterior: PosteriorState, tau: f64, settings: &OfflineSettings) -> Self {
        SoftMax {
            values: MeanValues::new(posterior, 0.0, settings),
            tau,
        }
    }

    pub fn probabilities(&mut self, x: usize) -> Vec<f64> {
        boltzmann(self.values.row(x), self.tau)
    }
}

impl Policy for SoftMax {
    fn search(&mut self, x: usize, rng: &mut Stream) -> Result<usize> {
        let p = self.probabilities(x);
        Ok(crate::mdp::sample_index(&p, rng))
    }

    fn learn(&mut self, t: &Transition) {
        self.values.observe(t);
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::prior::FdmDistribution;
    use crate::rng::seeded;

    #[test]
    fn equal_values_are_uniform() {
        let p = boltzmann(&[3.0, 3.0, 3.0], 0.7);
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_action_formula() {
        let p = boltzmann(&[1.0, 0.0], 1.0);
        let e = std::f64::consts::E;
        assert!((p[0] - e / (1.0 + e)).abs() < 1e-12);
        assert!((p[0] - 0.7311).abs() < 1e-4);
        assert!((p[1] - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn cold_temperature_is_greedy() {
        let p = boltzmann(&[0.0, 1.0, -2.0], 0.05);
        assert!(p[1] > 0.999);
        let p = boltzmann(&[0.3, 0.3001, 0.1], 1e-6);
        assert_eq!(p[1], 1.0);
        // huge values do not overflow
        let p = boltzmann(&[1e6, 1e6 - 1.0], 0.05);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn sampled_frequencies() {
        let prior = Arc::new(
            FdmDistribution::new("b", "b", 1, 2, vec![1.0, 1.0], vec![1.0, 0.0], 0).unwrap(),
        );
        // gamma small so Q is close to the immediate reward
        let s = OfflineSettings::new(0.01, 1);
        let mut agent = SoftMax::new(PosteriorState::new(prior), 1.0, &s);
        let p = agent.probabilities(0)[0];
        let mut rng = seeded(4);
        let n = 50_000;
        let hits = (0..n)
            .filter(|_| agent.search(0, &mut rng).unwrap() == 0)
            .count();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - p).abs() < 3.0 * se);
    }
}
