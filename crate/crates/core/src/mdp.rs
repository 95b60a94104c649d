//! Finite MDPs, trajectories and exact dynamic programming.
//!
//! States and actions are 0-based indices. Transition and reward tables are
//! dense and laid out as `[x][u][y]`.

use std::time::{Duration, Instant};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::solver::{argmax, SparseModel};

/// Row sums must be within this distance of 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Default sup-norm tolerance of [`value_iteration`] callers.
pub const DEFAULT_VI_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    initial_state: usize,
}

impl Mdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        initial_state: usize,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::model(
                "an MDP needs at least one state and one action",
            ));
        }
        let len = n_states * n_actions * n_states;
        if transition.len() != len || reward.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "expected {len} transition and reward entries, got {} and {}",
                transition.len(),
                reward.len()
            )));
        }
        if initial_state >= n_states {
            return Err(Error::model(format!(
                "initial state {initial_state} out of range for {n_states} states"
            )));
        }
        if let Some(r) = reward.iter().find(|r| !r.is_finite()) {
            return Err(Error::model(format!("non-finite reward {r}")));
        }
        for (row_idx, row) in transition.chunks(n_states).enumerate() {
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::model(format!(
                    "row (x={}, u={}) has a negative or non-finite probability",
                    row_idx / n_actions,
                    row_idx % n_actions
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::model(format!(
                    "row (x={}, u={}) sums to {sum}",
                    row_idx / n_actions,
                    row_idx % n_actions
                )));
            }
        }
        Ok(Mdp {
            n_states,
            n_actions,
            transition,
            reward,
            initial_state,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    #[inline]
    fn row_start(&self, x: usize, u: usize) -> usize {
        (x * self.n_actions + u) * self.n_states
    }

    pub fn transition_row(&self, x: usize, u: usize) -> &[f64] {
        let s = self.row_start(x, u);
        &self.transition[s..s + self.n_states]
    }

    pub fn reward_row(&self, x: usize, u: usize) -> &[f64] {
        let s = self.row_start(x, u);
        &self.reward[s..s + self.n_states]
    }

    pub fn probability(&self, x: usize, u: usize, y: usize) -> f64 {
        self.transition[self.row_start(x, u) + y]
    }

    pub fn reward(&self, x: usize, u: usize, y: usize) -> f64 {
        self.reward[self.row_start(x, u) + y]
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transition
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    /// Smallest and largest entry of the reward table.
    pub fn reward_bounds(&self) -> (f64, f64) {
        reward_bounds(&self.reward)
    }

    pub(crate) fn sparse_model(&self) -> SparseModel {
        let mut b = SparseModel::builder(self.n_states);
        for x in 0..self.n_states {
            for u in 0..self.n_actions {
                let p = self.transition_row(x, u);
                let r = self.reward_row(x, u);
                b.action((0..self.n_states).map(|y| (y, p[y], r[y])));
            }
            b.end_state();
        }
        b.build()
    }
}

pub(crate) fn reward_bounds(reward: &[f64]) -> (f64, f64) {
    reward
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
            (lo.min(r), hi.max(r))
        })
}

/// One observed step `(x, u, y, r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub x: usize,
    pub u: usize,
    pub y: usize,
    pub r: f64,
}

/// Smallest horizon `T` such that truncating after step `T` loses at most
/// `epsilon` of discounted return: `floor(log(eps (1 - gamma) / r_max) / log gamma)`.
pub fn truncation_horizon(epsilon: f64, gamma: f64, r_max: f64) -> Result<usize> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::param(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::param(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )));
    }
    if !(r_max.is_finite() && r_max > 0.0) {
        return Err(Error::param(format!("r_max must be positive, got {r_max}")));
    }
    let ratio = epsilon * (1.0 - gamma) / r_max;
    if ratio >= 1.0 {
        return Ok(0);
    }
    let mut horizon = (ratio.ln() / gamma.ln()).floor().max(0.0) as usize;
    // Guard against the floor landing one short through rounding.
    while gamma.powi(horizon as i32 + 1) * r_max / (1.0 - gamma) > epsilon {
        horizon += 1;
    }
    Ok(horizon)
}

/// `sum_t gamma^t r_t`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut discount = 1.0;
    let mut total = 0.0;
    for &r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    total
}

/// Index drawn from a probability row with a single uniform draw.
pub(crate) fn sample_index<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let draw: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if draw < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Draws the successor of `(x, u)`; consumes exactly one uniform draw.
pub fn sample_transition(mdp: &Mdp, x: usize, u: usize, rng: &mut Stream) -> Transition {
    let y = sample_index(mdp.transition_row(x, u), rng);
    Transition {
        x,
        u,
        y,
        r: mdp.reward(x, u, y),
    }
}

/// The online half of an agent: picks actions and learns from transitions.
pub trait Policy: Send {
    fn search(&mut self, x: usize, rng: &mut Stream) -> Result<usize>;

    fn learn(&mut self, transition: &Transition);
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub transitions: Vec<Transition>,
    pub discounted_return: f64,
    /// Wall-clock time of each decision (search plus online learning).
    pub step_times: Vec<Duration>,
}

impl TrajectoryResult {
    pub fn total_time(&self) -> Duration {
        self.step_times.iter().sum()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.r).collect()
    }
}

/// Runs `policy` on `mdp` from its initial state for `horizon + 1` steps.
pub fn simulate_trajectory(
    mdp: &Mdp,
    policy: &mut dyn Policy,
    horizon: usize,
    gamma: f64,
    rng: &mut Stream,
) -> Result<TrajectoryResult> {
    let steps = horizon + 1;
    let mut transitions = Vec::with_capacity(steps);
    let mut step_times = Vec::with_capacity(steps);
    let mut x = mdp.initial_state();
    for step in 0..steps {
        let start = Instant::now();
        let u = policy.search(x, rng).map_err(|e| Error::AgentStep {
            step,
            source: Box::new(e),
        })?;
        if u >= mdp.n_actions() {
            return Err(Error::AgentStep {
                step,
                source: Box::new(Error::model(format!("action {u} out of range"))),
            });
        }
        let t = sample_transition(mdp, x, u, rng);
        policy.learn(&t);
        step_times.push(start.elapsed());
        transitions.push(t);
        x = t.y;
    }
    let rewards: Vec<f64> = transitions.iter().map(|t| t.r).collect();
    Ok(TrajectoryResult {
        discounted_return: discounted_return(&rewards, gamma),
        transitions,
        step_times,
    })
}

/// Action values of an MDP under discount `discount`, laid out `[x][u]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QFunction {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
    discount: f64,
}

impl QFunction {
    pub(crate) fn from_values(
        n_states: usize,
        n_actions: usize,
        values: Vec<f64>,
        discount: f64,
    ) -> Self {
        debug_assert_eq!(values.len(), n_states * n_actions);
        QFunction {
            n_states,
            n_actions,
            values,
            discount,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, u: usize) -> f64 {
        self.values[x * self.n_actions + u]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.values[x * self.n_actions..(x + 1) * self.n_actions]
    }

    pub fn value(&self, x: usize) -> f64 {
        self.row(x)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action at `x`, lowest index on ties.
    pub fn greedy_action(&self, x: usize) -> usize {
        argmax(self.row(x))
    }

    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.n_states).map(|x| self.greedy_action(x)).collect()
    }

    /// Sup-norm Bellman optimality residual of these values on `mdp`.
    pub fn bellman_residual(&self, mdp: &Mdp) -> f64 {
        mdp.sparse_model()
            .bellman_residual(self.discount, &self.values)
    }
}

/// Optimal action values of `mdp` to sup-norm Bellman residual `tolerance`.
pub fn value_iteration(mdp: &Mdp, gamma: f64, tolerance: f64) -> Result<QFunction> {
    value_iteration_from(mdp, gamma, tolerance, None)
}

/// [`value_iteration`] warm-started from `init` (same shape required).
pub fn value_iteration_from(
    mdp: &Mdp,
    gamma: f64,
    tolerance: f64,
    init: Option<&QFunction>,
) -> Result<QFunction> {
    check_discount(gamma)?;
    if !(tolerance > 0.0) {
        return Err(Error::param(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }
    let values = mdp
        .sparse_model()
        .solve(gamma, tolerance, init.map(|q| q.values()));
    Ok(QFunction::from_values(
        mdp.n_states(),
        mdp.n_actions(),
        values,
        gamma,
    ))
}

pub(crate) fn check_discount(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )))
    }
}
