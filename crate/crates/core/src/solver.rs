//! Sparse finite-MDP representation shared by every dynamic-programming
//! caller: dense MDPs, bonus-augmented mean models (BEB) and merged models
//! with a different number of meta-actions per state (SBOSS).

use log::warn;

const MAX_SWEEPS: usize = 1_000_000;

/// A finite MDP stored as ragged, zero-free outcome lists.
///
/// Actions of state `x` occupy `state_offsets[x]..state_offsets[x + 1]`;
/// outcomes of action `a` occupy `action_offsets[a]..action_offsets[a + 1]`.
#[derive(Debug, Clone, Default)]
pub(crate) struct SparseModel {
    state_offsets: Vec<usize>,
    action_offsets: Vec<usize>,
    expected_reward: Vec<f64>,
    next: Vec<usize>,
    prob: Vec<f64>,
}

impl SparseModel {
    pub fn builder(n_states: usize) -> SparseModelBuilder {
        SparseModelBuilder {
            model: SparseModel {
                state_offsets: vec![0],
                action_offsets: vec![0],
                ..Default::default()
            },
            n_states,
        }
    }

    pub fn n_states(&self) -> usize {
        self.state_offsets.len() - 1
    }

    pub fn n_actions(&self, x: usize) -> usize {
        self.state_offsets[x + 1] - self.state_offsets[x]
    }

    /// Offset of state `x`'s first action in a flat action-value vector.
    pub fn action_base(&self, x: usize) -> usize {
        self.state_offsets[x]
    }

    pub fn total_actions(&self) -> usize {
        self.expected_reward.len()
    }

    #[cfg(test)]
    pub fn outcomes(&self, x: usize, a: usize) -> Vec<(usize, f64)> {
        let g = self.state_offsets[x] + a;
        (self.action_offsets[g]..self.action_offsets[g + 1])
            .map(|k| (self.next[k], self.prob[k]))
            .collect()
    }

    /// Synchronous value iteration on action values.
    ///
    /// Stops once two consecutive sweeps differ by at most `tolerance` in
    /// sup-norm, so the returned values have a Bellman residual of at most
    /// `gamma * tolerance`. `init` warm-starts the iteration when its length
    /// matches.
    pub fn solve(&self, gamma: f64, tolerance: f64, init: Option<&[f64]>) -> Vec<f64> {
        let n_states = self.n_states();
        let mut q = match init {
            Some(v) if v.len() == self.total_actions() => v.to_vec(),
            _ => vec![0.0; self.total_actions()],
        };
        let mut next_q = vec![0.0; q.len()];
        let mut v = vec![0.0; n_states];
        for sweep in 0.. {
            self.state_values(&q, &mut v);
            let mut delta = 0.0f64;
            for (g, slot) in next_q.iter_mut().enumerate() {
                let mut acc = 0.0;
                for k in self.action_offsets[g]..self.action_offsets[g + 1] {
                    acc += self.prob[k] * v[self.next[k]];
                }
                let value = self.expected_reward[g] + gamma * acc;
                delta = delta.max((value - q[g]).abs());
                *slot = value;
            }
            std::mem::swap(&mut q, &mut next_q);
            if delta <= tolerance {
                break;
            }
            if sweep >= MAX_SWEEPS {
                warn!("value iteration stopped after {MAX_SWEEPS} sweeps (residual {delta:e})");
                break;
            }
        }
        q
    }

    /// `v[x] = max_a q[x, a]`; states without actions get 0.
    pub fn state_values(&self, q: &[f64], v: &mut [f64]) {
        for (x, slot) in v.iter_mut().enumerate() {
            let row = &q[self.state_offsets[x]..self.state_offsets[x + 1]];
            *slot = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if row.is_empty() {
                *slot = 0.0;
            }
        }
    }

    /// Sup-norm of `B(q) - q`.
    pub fn bellman_residual(&self, gamma: f64, q: &[f64]) -> f64 {
        let mut v = vec![0.0; self.n_states()];
        self.state_values(q, &mut v);
        let mut worst = 0.0f64;
        for (g, &current) in q.iter().enumerate() {
            let mut acc = 0.0;
            for k in self.action_offsets[g]..self.action_offsets[g + 1] {
                acc += self.prob[k] * v[self.next[k]];
            }
            worst = worst.max((self.expected_reward[g] + gamma * acc - current).abs());
        }
        worst
    }
}

pub(crate) struct SparseModelBuilder {
    model: SparseModel,
    n_states: usize,
}

impl SparseModelBuilder {
    /// Adds an action to the state currently being built. Zero-probability
    /// outcomes are dropped.
    pub fn action<I>(&mut self, outcomes: I)
    where
        I: IntoIterator<Item = (usize, f64, f64)>,
    {
        let m = &mut self.model;
        let mut expected = 0.0;
        for (y, p, r) in outcomes {
            if p > 0.0 {
                debug_assert!(y < self.n_states);
                m.next.push(y);
                m.prob.push(p);
                expected += p * r;
            }
        }
        m.expected_reward.push(expected);
        m.action_offsets.push(m.next.len());
    }

    /// Closes the current state.
    pub fn end_state(&mut self) {
        let total = self.model.expected_reward.len();
        self.model.state_offsets.push(total);
    }

    pub fn build(self) -> SparseModel {
        assert_eq!(
            self.model.state_offsets.len() - 1,
            self.n_states,
            "every state must be closed"
        );
        self.model
    }
}

/// Index of the largest value, lowest index on ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
