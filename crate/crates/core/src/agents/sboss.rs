//! Smarter best of sampled set: plans in a merged MDP whose actions are
//! several posterior samples of every transition row, and re-plans only
//! when the posterior mean has moved by more than `delta` standard
//! deviations somewhere.

use super::OfflineSettings;
use crate::error::Result;
use crate::mdp::{Policy, Transition};
use crate::prior::PosteriorState;
use crate::rng::Stream;
use crate::solver::{argmax, SparseModel};

/// Maps a merged-model meta-action back to a base action.
pub fn fit_action_space(meta_action: usize, n_actions: usize) -> usize {
    meta_action % n_actions
}

/// Number of samples of row `(x, u)`: `max(1, max_y ceil(var(x, u, y) / epsilon))`.
pub fn sample_count(posterior: &PosteriorState, x: usize, u: usize, epsilon: f64) -> usize {
    let k = (0..posterior.n_states())
        .map(|y| (posterior.marginal_variance(x, u, y) / epsilon).ceil())
        .fold(0.0, f64::max);
    (k as usize).max(1)
}

/// Merged model: state `x` gets `|U| * K_x` meta-actions, `K_x` being the
/// largest sample count among its actions. Meta-action `j * |U| + u` uses
/// sample `j mod K(x, u)` of row `(x, u)`, so pairs with fewer samples
/// repeat theirs.
#[derive(Debug, Clone)]
pub struct MergedModel {
    pub n_actions: usize,
    /// `counts[x * |U| + u]` = `K(x, u)`.
    pub counts: Vec<usize>,
    /// `rows[x * |U| + u][j]` = sample `j` of row `(x, u)`.
    pub rows: Vec<Vec<Vec<f64>>>,
}

impl MergedModel {
    pub fn sample(posterior: &PosteriorState, epsilon: f64, rng: &mut Stream) -> Self {
        let (n, a) = (posterior.n_states(), posterior.n_actions());
        let mut counts = Vec::with_capacity(n * a);
        let mut rows = Vec::with_capacity(n * a);
        for x in 0..n {
            for u in 0..a {
                let k = sample_count(posterior, x, u, epsilon);
                let samples = (0..k)
                    .map(|_| {
                        let mut row = vec![0.0; n];
                        posterior.sample_row(x, u, rng, &mut row);
                        row
                    })
                    .collect();
                counts.push(k);
                rows.push(samples);
            }
        }
        MergedModel {
            n_actions: a,
            counts,
            rows,
        }
    }

    pub fn meta_actions(&self, x: usize) -> usize {
        let a = self.n_actions;
        self.n_actions
            * self.counts[x * a..(x + 1) * a]
                .iter()
                .max()
                .copied()
                .unwrap_or(1)
    }

    /// Transition row behind meta-action `m` of state `x`.
    pub fn row(&self, x: usize, m: usize) -> &[f64] {
        let a = self.n_actions;
        let u = fit_action_space(m, a);
        let j = m / a;
        let samples = &self.rows[x * a + u];
        &samples[j % samples.len()]
    }

    fn solver_model(&self, posterior: &PosteriorState) -> SparseModel {
        let n = posterior.n_states();
        let base = posterior.base();
        let mut b = SparseModel::builder(n);
        for x in 0..n {
            for m in 0..self.meta_actions(x) {
                let u = fit_action_space(m, self.n_actions);
                let row = self.row(x, m);
                b.action((0..n).map(|y| (y, row[y], base.reward(x, u, y))));
            }
            b.end_state();
        }
        b.build()
    }
}

#[derive(Debug, Clone)]
pub struct Sboss {
    posterior: PosteriorState,
    epsilon: f64,
    delta: f64,
    gamma: f64,
    tolerance: f64,
    /// Posterior mean transition probabilities at the last re-plan.
    last_means: Option<Vec<f64>>,
    policy: Vec<usize>,
    replans: u64,
}

impl Sboss {
    pub fn new(
        posterior: PosteriorState,
        epsilon: f64,
        delta: f64,
        settings: &OfflineSettings,
    ) -> Self {
        Sboss {
            posterior,
            epsilon,
            delta,
            gamma: settings.gamma,
            tolerance: settings.vi_tolerance,
            last_means: None,
            policy: Vec::new(),
            replans: 0,
        }
    }

    pub fn posterior(&self) -> &PosteriorState {
        &self.posterior
    }

    pub fn replans(&self) -> u64 {
        self.replans
    }

    fn means(&self) -> Vec<f64> {
        let n = self.posterior.n_states();
        let mut out = Vec::with_capacity(self.posterior.concentrations().len());
        for row in self.posterior.concentrations().chunks(n) {
            let total: f64 = row.iter().sum();
            out.extend(row.iter().map(|a| a / total));
        }
        out
    }

    /// `sum_y |P(y) - P_last(y)| / sigma(y)` for `(x, u)`, skipping
    /// coordinates with zero posterior spread.
    pub fn shift(&self, x: usize, u: usize) -> f64 {
        let Some(last) = &self.last_means else {
            return f64::INFINITY;
        };
        let n = self.posterior.n_states();
        let start = (x * self.posterior.n_actions() + u) * n;
        (0..n)
            .map(|y| {
                let sigma = self.posterior.marginal_variance(x, u, y).sqrt();
                if sigma > 0.0 {
                    (self.posterior.mean_probability(x, u, y) - last[start + y]).abs() / sigma
                } else {
                    0.0
                }
            })
            .sum()
    }

    fn needs_replan(&self) -> bool {
        if self.last_means.is_none() {
            return true;
        }
        let (n, a) = (self.posterior.n_states(), self.posterior.n_actions());
        (0..n).any(|x| (0..a).any(|u| self.shift(x, u) > self.delta))
    }

    fn replan(&mut self, rng: &mut Stream) {
        let merged = MergedModel::sample(&self.posterior, self.epsilon, rng);
        let model = merged.solver_model(&self.posterior);
        let q = model.solve(self.gamma, self.tolerance, None);
        let a = self.posterior.n_actions();
        self.policy = (0..self.posterior.n_states())
            .map(|x| {
                let start = model.action_base(x);
                let meta = argmax(&q[start..start + model.n_actions(x)]);
                fit_action_space(meta, a)
            })
            .collect();
        self.last_means = Some(self.means());
        self.replans += 1;
    }
}

impl Policy for Sboss {
    fn search(&mut self, x: usize, rng: &mut Stream) -> Result<usize> {
        if self.needs_replan() {
            self.replan(rng);
        }
        Ok(self.policy[x])
    }

    fn learn(&mut self, t: &Transition) {
        self.posterior.update(t);
    }
}
