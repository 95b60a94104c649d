use std::sync::Arc;

use rand::Rng;

use super::OfflineSettings;
use crate::error::Result;
use crate::formulas::Formula;
use crate::mdp::{Policy, Transition};
use crate::prior::PosteriorState;
use crate::rng::Stream;
use crate::solver::{argmax, SparseModel};

/// The three action-value features read by a formula:
///
/// * `Q0`: posterior mean MDP;
/// * `Q1`: optimistic model, the posterior mean with one extra pseudo-count
///   on the best-looking successor (under `Q0`) of every pair;
/// * `Q2`: prior mean MDP, fixed.
///
/// Only the features a formula reads are computed.
#[derive(Debug, Clone)]
pub struct FeatureModels {
    posterior: PosteriorState,
    gamma: f64,
    tolerance: f64,
    needs: [bool; 3],
    q0: Vec<f64>,
    q1: Vec<f64>,
    q2: Arc<Vec<f64>>,
    stale: bool,
}

impl FeatureModels {
    pub fn new(
        posterior: PosteriorState,
        prior_q: Arc<Vec<f64>>,
        uses: [bool; 3],
        settings: &OfflineSettings,
    ) -> Self {
        FeatureModels {
            posterior,
            gamma: settings.gamma,
            tolerance: settings.vi_tolerance,
            // Q1 is built on top of Q0
            needs: [uses[0] || uses[1], uses[1], uses[2]],
            q0: Vec::new(),
            q1: Vec::new(),
            q2: prior_q,
            stale: true,
        }
    }

    pub fn posterior(&self) -> &PosteriorState {
        &self.posterior
    }

    pub fn observe(&mut self, t: &Transition) {
        self.posterior.update(t);
        self.stale = true;
    }

    fn refresh(&mut self) {
        if !self.stale {
            return;
        }
        if self.needs[0] {
            let init = (!self.q0.is_empty()).then_some(&self.q0[..]);
            self.q0 = self
                .posterior
                .mean_model()
                .solve(self.gamma, self.tolerance, init);
        }
        if self.needs[1] {
            let model = self.optimistic_model();
            let init = (!self.q1.is_empty()).then_some(&self.q1[..]);
            self.q1 = model.solve(self.gamma, self.tolerance, init);
        }
        self.stale = false;
    }

    fn optimistic_model(&self) -> SparseModel {
        let base = self.posterior.base();
        let (n, a) = (base.n_states(), base.n_actions());
        let v0: Vec<f64> = (0..n)
            .map(|x| {
                self.q0[x * a..(x + 1) * a]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let mut b = SparseModel::builder(n);
        for x in 0..n {
            for u in 0..a {
                let row = self.posterior.concentration_row(x, u);
                let mut best = None;
                let mut best_value = f64::NEG_INFINITY;
                for (y, &alpha) in row.iter().enumerate() {
                    if alpha > 0.0 {
                        let v = base.reward(x, u, y) + self.gamma * v0[y];
                        if v > best_value {
                            best_value = v;
                            best = Some(y);
                        }
                    }
                }
                let best = best.expect("rows have positive mass");
                let total: f64 = row.iter().sum::<f64>() + 1.0;
                b.action(row.iter().enumerate().map(|(y, &alpha)| {
                    let alpha = if y == best { alpha + 1.0 } else { alpha };
                    (y, alpha / total, base.reward(x, u, y))
                }));
            }
            b.end_state();
        }
        b.build()
    }

    /// `(Q0, Q1, Q2)` rows at `x`; unread features are all zero.
    pub fn rows(&mut self, x: usize) -> [Vec<f64>; 3] {
        self.refresh();
        let a = self.posterior.n_actions();
        let pick = |q: &[f64], need: bool| {
            if need {
                q[x * a..(x + 1) * a].to_vec()
            } else {
                vec![0.0; a]
            }
        };
        [
            pick(&self.q0, self.needs[0]),
            pick(&self.q1, self.needs[1]),
            pick(&self.q2, self.needs[2]),
        ]
    }
}

/// Index-based policy: `argmax_u f(Q0(x, u), Q1(x, u), Q2(x, u))`.
#[derive(Debug, Clone)]
pub struct OppsPolicy {
    formula: Formula,
    features: FeatureModels,
}

impl OppsPolicy {
    pub fn new(
        formula: Formula,
        posterior: PosteriorState,
        prior_q: Arc<Vec<f64>>,
        settings: &OfflineSettings,
    ) -> Self {
        let uses = formula.uses();
        OppsPolicy {
            formula,
            features: FeatureModels::new(posterior, prior_q, uses, settings),
        }
    }

    pub fn formula(&self) -> &Formula {
        &self.formula
    }

    pub fn features(&mut self) -> &mut FeatureModels {
        &mut self.features
    }
}

impl Policy for OppsPolicy {
    fn search(&mut self, x: usize, rng: &mut Stream) -> Result<usize> {
        // keep the stream aligned with the other model-based agents
        let _: f64 = rng.random();
        let [q0, q1, q2] = self.features.rows(x);
        let scores: Vec<f64> = (0..q0.len())
            .map(|u| self.formula.evaluate([q0[u], q1[u], q2[u]]))
            .collect();
        Ok(argmax(&scores))
    }

    fn learn(&mut self, t: &Transition) {
        self.features.observe(t);
    }
}
