//! Bayes-adaptive Monte-Carlo planning with root sampling.
//!
//! Every simulation draws one MDP from the posterior and follows it all the
//! way down, through the tree and the rollout. Rows of that MDP are only
//! sampled when the simulation first touches them.

use std::collections::HashMap;

use rand::Rng;

use super::OfflineSettings;
use crate::error::Result;
use crate::mdp::{sample_index, Policy, Transition};
use crate::prior::PosteriorState;
use crate::rng::Stream;
use crate::solver::argmax;

#[derive(Debug, Clone)]
struct Node {
    visits: u32,
    action_visits: Vec<u32>,
    q: Vec<f64>,
}

impl Node {
    fn new(n_actions: usize) -> Self {
        Node {
            visits: 0,
            action_visits: vec![0; n_actions],
            q: vec![0.0; n_actions],
        }
    }
}

/// UCT score `q + c sqrt(2 ln N / n)`; unvisited actions score `+inf`.
pub fn uct_score(q: f64, node_visits: u32, action_visits: u32, c: f64) -> f64 {
    if action_visits == 0 {
        f64::INFINITY
    } else {
        q + c * (2.0 * (node_visits as f64).ln() / action_visits as f64).sqrt()
    }
}

/// UCT action, lowest index on ties.
pub fn uct_select(q: &[f64], node_visits: u32, action_visits: &[u32], c: f64) -> usize {
    let scores: Vec<f64> = q
        .iter()
        .zip(action_visits)
        .map(|(&q, &n)| uct_score(q, node_visits, n, c))
        .collect();
    argmax(&scores)
}

/// One sampled MDP, materialised row by row.
#[derive(Debug, Clone)]
struct LazyModel {
    rows: Vec<f64>,
    generation: Vec<u32>,
    current: u32,
}

#[derive(Debug, Clone)]
pub struct Bamcp {
    posterior: PosteriorState,
    simulations: usize,
    depth: usize,
    exploration: f64,
    gamma: f64,
    rollout_epsilon: f64,
    r_max: f64,
    nodes: Vec<Node>,
    children: HashMap<(usize, usize, usize), usize>,
    model: LazyModel,
}

impl Bamcp {
    pub fn new(
        posterior: PosteriorState,
        simulations: usize,
        depth: usize,
        exploration: f64,
        settings: &OfflineSettings,
    ) -> Self {
        let (n, a) = (posterior.n_states(), posterior.n_actions());
        let r_max = posterior
            .base()
            .r_max()
            .abs()
            .max(posterior.base().r_min().abs());
        Bamcp {
            posterior,
            simulations,
            depth,
            exploration,
            gamma: settings.gamma,
            rollout_epsilon: settings.rollout_epsilon,
            r_max,
            nodes: Vec::new(),
            children: HashMap::new(),
            model: LazyModel {
                rows: vec![0.0; n * a * n],
                generation: vec![0; n * a],
                current: 0,
            },
        }
    }

    pub fn posterior(&self) -> &PosteriorState {
        &self.posterior
    }

    /// UCT constant: the exploration scale times `R_max / (1 - gamma)`.
    pub fn uct_constant(&self) -> f64 {
        self.exploration * self.r_max / (1.0 - self.gamma)
    }

    fn truncated(&self, d: usize) -> bool {
        self.gamma.powi(d as i32) * self.r_max < self.rollout_epsilon
    }

    fn step(&mut self, x: usize, u: usize, rng: &mut Stream) -> (usize, f64) {
        let (n, a) = (self.posterior.n_states(), self.posterior.n_actions());
        let pair = x * a + u;
        let row = &mut self.model.rows[pair * n..(pair + 1) * n];
        if self.model.generation[pair] != self.model.current {
            self.posterior.sample_row(x, u, rng, row);
            self.model.generation[pair] = self.model.current;
        }
        let y = sample_index(row, rng);
        (y, self.posterior.base().reward(x, u, y))
    }

    fn rollout(&mut self, mut x: usize, mut d: usize, rng: &mut Stream) -> f64 {
        let a = self.posterior.n_actions();
        let mut total = 0.0;
        let mut discount = 1.0;
        while !self.truncated(d) {
            let u = rng.random_range(0..a);
            let (y, r) = self.step(x, u, rng);
            total += discount * r;
            discount *= self.gamma;
            x = y;
            d += 1;
        }
        total
    }

    fn simulate(&mut self, node: usize, x: usize, d: usize, rng: &mut Stream) -> f64 {
        if self.truncated(d) {
            return 0.0;
        }
        if d >= self.depth {
            return self.rollout(x, d, rng);
        }
        let c = self.uct_constant();
        let n = &self.nodes[node];
        let u = uct_select(&n.q, n.visits, &n.action_visits, c);
        let (y, r) = self.step(x, u, rng);
        let future = match self.children.get(&(node, u, y)) {
            Some(&child) => self.simulate(child, y, d + 1, rng),
            None => {
                let child = self.nodes.len();
                self.nodes.push(Node::new(self.posterior.n_actions()));
                self.children.insert((node, u, y), child);
                self.nodes[child].visits += 1;
                self.rollout(y, d + 1, rng)
            }
        };
        let ret = r + self.gamma * future;
        let n = &mut self.nodes[node];
        n.visits += 1;
        n.action_visits[u] += 1;
        n.q[u] += (ret - n.q[u]) / n.action_visits[u] as f64;
        ret
    }

    /// Runs all simulations from `x`; returns the root action values and
    /// visit counts.
    pub fn plan(&mut self, x: usize, rng: &mut Stream) -> (Vec<f64>, Vec<u32>) {
        self.nodes.clear();
        self.children.clear();
        self.nodes.push(Node::new(self.posterior.n_actions()));
        for _ in 0..self.simulations {
            self.model.current = self.model.current.wrapping_add(1);
            if self.model.current == 0 {
                self.model.generation.iter_mut().for_each(|g| *g = u32::MAX);
                self.model.current = 1;
            }
            self.simulate(0, x, 0, rng);
        }
        let root = &self.nodes[0];
        (root.q.clone(), root.action_visits.clone())
    }
}

impl Policy for Bamcp {
    fn search(&mut self, x: usize, rng: &mut Stream) -> Result<usize> {
        let (q, _) = self.plan(x, rng);
        Ok(argmax(&q))
    }

    fn learn(&mut self, t: &Transition) {
        self.posterior.update(t);
    }
}
