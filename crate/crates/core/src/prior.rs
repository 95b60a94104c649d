//! Flat Dirichlet-multinomial (FDM) distributions over MDPs.
//!
//! An FDM puts an independent Dirichlet on every transition row `P(x, u, .)`
//! and shares one deterministic reward table across all MDPs it generates.
//! The same type serves as test distribution and as prior; the accurate and
//! inaccurate cases differ only in which distribution is handed to the agent.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::mdp::{reward_bounds, Mdp, Transition};
use crate::rng::Stream;
use crate::solver::SparseModel;

#[derive(Debug, Clone, PartialEq)]
pub struct FdmDistribution {
    name: String,
    short_name: String,
    n_states: usize,
    n_actions: usize,
    theta: Vec<f64>,
    reward: Vec<f64>,
    initial_state: usize,
    r_min: f64,
    r_max: f64,
}

impl FdmDistribution {
    pub fn new(
        name: impl Into<String>,
        short_name: impl Into<String>,
        n_states: usize,
        n_actions: usize,
        theta: Vec<f64>,
        reward: Vec<f64>,
        initial_state: usize,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::model(
                "a distribution needs at least one state and one action",
            ));
        }
        let len = n_states * n_actions * n_states;
        if theta.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "expected n_states * n_actions * n_states = {len} concentration parameters, got {}",
                theta.len()
            )));
        }
        if reward.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "expected n_states * n_actions * n_states = {len} rewards, got {}",
                reward.len()
            )));
        }
        if initial_state >= n_states {
            return Err(Error::model(format!(
                "initial state {initial_state} out of range for {n_states} states"
            )));
        }
        if theta.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
            return Err(Error::model(
                "concentration parameters must be finite and non-negative",
            ));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::model("rewards must be finite"));
        }
        for (row_idx, row) in theta.chunks(n_states).enumerate() {
            if row.iter().sum::<f64>() <= 0.0 {
                return Err(Error::model(format!(
                    "row (x={}, u={}) has zero total concentration",
                    row_idx / n_actions,
                    row_idx % n_actions
                )));
            }
        }
        let (r_min, r_max) = reward_bounds(&reward);
        Ok(FdmDistribution {
            name: name.into(),
            short_name: short_name.into(),
            n_states,
            n_actions,
            theta,
            reward,
            initial_state,
            r_min,
            r_max,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn short_name(&self) -> &str {
        &self.short_name
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

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    fn row_start(&self, x: usize, u: usize) -> usize {
        (x * self.n_actions + u) * self.n_states
    }

    pub fn theta_row(&self, x: usize, u: usize) -> &[f64] {
        let s = self.row_start(x, u);
        &self.theta[s..s + self.n_states]
    }

    pub fn reward_row(&self, x: usize, u: usize) -> &[f64] {
        let s = self.row_start(x, u);
        &self.reward[s..s + self.n_states]
    }

    pub fn reward(&self, x: usize, u: usize, y: usize) -> f64 {
        self.reward[self.row_start(x, u) + y]
    }

    /// Same shape, states and rewards; different label.
    pub fn same_shape(&self, other: &FdmDistribution) -> bool {
        self.n_states == other.n_states && self.n_actions == other.n_actions
    }

    /// Draws one MDP.
    pub fn sample_mdp(&self, rng: &mut Stream) -> Mdp {
        sample_from_concentrations(self, &self.theta, rng)
    }

    /// The expected MDP: each row is `theta / sum(theta)`.
    pub fn mean_mdp(&self) -> Result<Mdp> {
        mean_from_concentrations(self, &self.theta)
    }
}

/// The "nothing known" prior: every transition observed once.
pub fn uniform_fdm(
    n_states: usize,
    n_actions: usize,
    reward: Vec<f64>,
    initial_state: usize,
) -> Result<FdmDistribution> {
    FdmDistribution::new(
        "Uniform",
        "U",
        n_states,
        n_actions,
        vec![1.0; n_states * n_actions * n_states],
        reward,
        initial_state,
    )
}

/// [`uniform_fdm`] with the shape, rewards and initial state of `like`.
pub fn uniform_like(like: &FdmDistribution) -> FdmDistribution {
    let mut fdm = uniform_fdm(
        like.n_states,
        like.n_actions,
        like.reward.clone(),
        like.initial_state,
    )
    .expect("shape of a valid distribution");
    fdm.name = format!("{} (uniform prior)", like.name);
    fdm.short_name = format!("U-{}", like.short_name);
    fdm
}

/// Generalised chain: 5 states, 3 actions. Every action either advances
/// along the chain or falls back to the first state.
pub fn make_gc() -> FdmDistribution {
    const N: usize = 5;
    const A: usize = 3;
    // 1-based listing; row i is theta(state i, any u)
    let rows: [[f64; N]; N] = [
        [1.0, 1.0, 0.0, 0.0, 0.0],
        [1.0, 0.0, 1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 1.0, 0.0],
        [1.0, 0.0, 0.0, 0.0, 1.0],
        [1.0, 1.0, 0.0, 0.0, 1.0],
    ];
    let mut theta = Vec::with_capacity(N * A * N);
    let mut reward = Vec::with_capacity(N * A * N);
    for row in &rows {
        for _ in 0..A {
            theta.extend_from_slice(row);
            for y in 0..N {
                reward.push(match y {
                    0 => 2.0,
                    4 => 10.0,
                    _ => 0.0,
                });
            }
        }
    }
    FdmDistribution::new("Generalised Chain", "GC", N, A, theta, reward, 0)
        .expect("GC is well formed")
}

/// Generalised double loop: 9 states, 2 actions. States 2-5 form the safe
/// loop (reward 1 when closing it), states 6-9 the risky one (reward 2).
pub fn make_gdl() -> FdmDistribution {
    const N: usize = 9;
    const A: usize = 2;
    // 1-based: (state, successors with unit concentration)
    let successors: [&[usize]; N] = [
        &[2, 6],
        &[3],
        &[4],
        &[5],
        &[1],
        &[1, 7],
        &[1, 8],
        &[1, 9],
        &[1],
    ];
    let mut theta = vec![0.0; N * A * N];
    let mut reward = vec![0.0; N * A * N];
    for (x, succ) in successors.iter().enumerate() {
        for u in 0..A {
            let base = (x * A + u) * N;
            for &y in succ.iter() {
                theta[base + y - 1] = 1.0;
            }
        }
    }
    for u in 0..A {
        reward[(4 * A + u) * N] = 1.0;
        reward[(8 * A + u) * N] = 2.0;
    }
    FdmDistribution::new("Generalised Double-Loop", "GDL", N, A, theta, reward, 0)
        .expect("GDL is well formed")
}

/// Grid actions, in index order.
pub const GRID_ACTIONS: [&str; 4] = ["up", "down", "left", "right"];

/// 0-based state of the 1-based grid cell `(i, j)` of the 5x5 maze.
pub fn grid_state(i: usize, j: usize) -> usize {
    debug_assert!((1..=5).contains(&i) && (1..=5).contains(&j));
    5 * (i - 1) + j - 1
}

/// 5x5 maze with 4 actions. Each move keeps a unit self-loop concentration
/// (the action may fail); entering the goal corner teleports back to the
/// start cell with reward 10.
pub fn make_grid() -> FdmDistribution {
    const N: usize = 25;
    const A: usize = 4;
    let mut theta = vec![0.0; N * A * N];
    let mut reward = vec![0.0; N * A * N];
    let start = grid_state(1, 1);
    for i in 1..=5usize {
        for j in 1..=5usize {
            let x = grid_state(i, j);
            for u in 0..A {
                let base = (x * A + u) * N;
                theta[base + x] = 1.0;
                let target = match u {
                    0 if i > 1 => Some(grid_state(i - 1, j)),
                    1 if (i, j) == (4, 5) => Some(start),
                    1 if i < 5 => Some(grid_state(i + 1, j)),
                    2 if j > 1 => Some(grid_state(i, j - 1)),
                    3 if (i, j) == (5, 4) => Some(start),
                    3 if j < 5 => Some(grid_state(i, j + 1)),
                    _ => None,
                };
                if let Some(y) = target {
                    theta[base + y] = 1.0;
                }
            }
        }
    }
    reward[(grid_state(4, 5) * A + 1) * N + start] = 10.0;
    reward[(grid_state(5, 4) * A + 3) * N + start] = 10.0;
    FdmDistribution::new("Grid", "Grid", N, A, theta, reward, start).expect("Grid is well formed")
}

/// Preset by short name (case-insensitive): `gc`, `gdl`, `grid`.
pub fn preset(name: &str) -> Option<FdmDistribution> {
    match name.to_ascii_lowercase().as_str() {
        "gc" => Some(make_gc()),
        "gdl" => Some(make_gdl()),
        "grid" => Some(make_grid()),
        _ => None,
    }
}

/// Dirichlet draw by normalised Gamma variates. Zero concentrations get
/// exactly zero mass.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R, out: &mut [f64]) {
    debug_assert_eq!(alpha.len(), out.len());
    let mut total = 0.0;
    for (o, &a) in out.iter_mut().zip(alpha) {
        *o = if a > 0.0 {
            Gamma::new(a, 1.0).expect("positive shape").sample(rng)
        } else {
            0.0
        };
        total += *o;
    }
    if total > 0.0 {
        out.iter_mut().for_each(|o| *o /= total);
    } else {
        // Every Gamma draw underflowed (tiny shapes): put the mass on the
        // largest concentration.
        let best = crate::solver::argmax(alpha);
        out.iter_mut().for_each(|o| *o = 0.0);
        out[best] = 1.0;
    }
}

fn sample_from_concentrations(fdm: &FdmDistribution, alpha: &[f64], rng: &mut Stream) -> Mdp {
    let n = fdm.n_states;
    let mut transition = vec![0.0; alpha.len()];
    for (row, a) in transition.chunks_mut(n).zip(alpha.chunks(n)) {
        sample_dirichlet(a, rng, row);
    }
    Mdp::new(
        n,
        fdm.n_actions,
        transition,
        fdm.reward.clone(),
        fdm.initial_state,
    )
    .expect("Dirichlet rows are stochastic")
}

fn mean_from_concentrations(fdm: &FdmDistribution, alpha: &[f64]) -> Result<Mdp> {
    let n = fdm.n_states;
    let mut transition = Vec::with_capacity(alpha.len());
    for (row_idx, a) in alpha.chunks(n).enumerate() {
        let total: f64 = a.iter().sum();
        if !(total > 0.0) {
            return Err(Error::model(format!(
                "row (x={}, u={}) has zero total concentration",
                row_idx / fdm.n_actions,
                row_idx % fdm.n_actions
            )));
        }
        transition.extend(a.iter().map(|v| v / total));
    }
    Mdp::new(
        n,
        fdm.n_actions,
        transition,
        fdm.reward.clone(),
        fdm.initial_state,
    )
}

/// A prior plus the transition counts observed so far.
#[derive(Debug, Clone)]
pub struct PosteriorState {
    base: Arc<FdmDistribution>,
    counts: Vec<u32>,
    /// `theta + counts`, kept in sync on every update.
    alpha: Vec<f64>,
    observations: u64,
}

impl PartialEq for PosteriorState {
    fn eq(&self, other: &Self) -> bool {
        self.base == other.base && self.counts == other.counts
    }
}

impl PosteriorState {
    pub fn new(base: Arc<FdmDistribution>) -> Self {
        let alpha = base.theta.clone();
        PosteriorState {
            counts: vec![0; alpha.len()],
            alpha,
            base,
            observations: 0,
        }
    }

    pub fn base(&self) -> &FdmDistribution {
        &self.base
    }

    pub fn n_states(&self) -> usize {
        self.base.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.base.n_actions
    }

    pub fn observations(&self) -> u64 {
        self.observations
    }

    fn index(&self, x: usize, u: usize, y: usize) -> usize {
        self.base.row_start(x, u) + y
    }

    /// Records one observed transition.
    pub fn update(&mut self, t: &Transition) {
        let i = self.index(t.x, t.u, t.y);
        self.counts[i] += 1;
        self.alpha[i] += 1.0;
        self.observations += 1;
    }

    pub fn count(&self, x: usize, u: usize, y: usize) -> u32 {
        self.counts[self.index(x, u, y)]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Effective concentration row `theta + counts` of `(x, u)`.
    pub fn concentration_row(&self, x: usize, u: usize) -> &[f64] {
        let s = self.base.row_start(x, u);
        &self.alpha[s..s + self.base.n_states]
    }

    pub fn concentrations(&self) -> &[f64] {
        &self.alpha
    }

    /// Posterior mean probability `alpha_y / alpha_0`.
    pub fn mean_probability(&self, x: usize, u: usize, y: usize) -> f64 {
        let row = self.concentration_row(x, u);
        row[y] / row.iter().sum::<f64>()
    }

    /// Variance of the Beta marginal of coordinate `y`:
    /// `alpha_y (alpha_0 - alpha_y) / (alpha_0^2 (alpha_0 + 1))`.
    pub fn marginal_variance(&self, x: usize, u: usize, y: usize) -> f64 {
        let row = self.concentration_row(x, u);
        let a0: f64 = row.iter().sum();
        let ay = row[y];
        ay * (a0 - ay) / (a0 * a0 * (a0 + 1.0))
    }

    pub fn mean_mdp(&self) -> Result<Mdp> {
        mean_from_concentrations(&self.base, &self.alpha)
    }

    pub fn sample_mdp(&self, rng: &mut Stream) -> Mdp {
        sample_from_concentrations(&self.base, &self.alpha, rng)
    }

    /// Draws one transition row of `(x, u)` into `out`.
    pub fn sample_row<R: Rng + ?Sized>(&self, x: usize, u: usize, rng: &mut R, out: &mut [f64]) {
        sample_dirichlet(self.concentration_row(x, u), rng, out);
    }

    /// Mean MDP as a solver model, with rewards passed through `reward_of`
    /// (called with `(x, u, y)` for every positive-probability outcome).
    pub(crate) fn mean_model_with<F>(&self, mut reward_of: F) -> SparseModel
    where
        F: FnMut(usize, usize, usize) -> f64,
    {
        let n = self.base.n_states;
        let mut b = SparseModel::builder(n);
        for x in 0..n {
            for u in 0..self.base.n_actions {
                let row = self.concentration_row(x, u);
                let total: f64 = row.iter().sum();
                b.action(
                    row.iter()
                        .enumerate()
                        .filter(|(_, &a)| a > 0.0)
                        .map(|(y, &a)| (y, a / total, reward_of(x, u, y))),
                );
            }
            b.end_state();
        }
        b.build()
    }

    pub(crate) fn mean_model(&self) -> SparseModel {
        let base = &self.base;
        self.mean_model_with(|x, u, y| base.reward(x, u, y))
    }
}
