//! Bayesian RL agents. Every agent has an offline phase run once against
//! the prior ([`offline_learn`]) and an online phase ([`TrainedAgent::start_episode`])
//! that yields a fresh [`Policy`] per trajectory.

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::warn;

use crate::error::{Error, Result};
use crate::formulas::{enumerate_space, run_ucb1, Formula, MAX_SPACE, MIN_SPACE};
use crate::mdp::{check_discount, simulate_trajectory, Policy, DEFAULT_VI_TOLERANCE};
use crate::prior::{FdmDistribution, PosteriorState};
use crate::rng::Stream;
use crate::solver::{argmax, SparseModel};

pub mod bamcp;
pub mod bfs3;
pub mod egreedy;
pub mod opps;
pub mod random;
pub mod sboss;
pub mod softmax;

pub use bamcp::Bamcp;
pub use bfs3::{Bfs3, Fsss};
pub use egreedy::{Beb, EGreedy};
pub use opps::{FeatureModels, OppsPolicy};
pub use random::RandomPolicy;
pub use sboss::Sboss;
pub use softmax::SoftMax;

/// Default truncation threshold of tree-search rollouts.
pub const DEFAULT_ROLLOUT_EPSILON: f64 = 0.01;

pub const EGREEDY_GRID: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
pub const SOFTMAX_GRID: [f64; 10] = [0.05, 0.10, 0.20, 0.33, 0.50, 1.0, 2.0, 3.0, 5.0, 25.0];
pub const OPPS_BUDGET_GRID: [u64; 8] = [50, 500, 1250, 2500, 5000, 10000, 100000, 1000000];
pub const BAMCP_K_GRID: [usize; 7] = [1, 500, 1250, 2500, 5000, 10000, 25000];
pub const TREE_DEPTH_GRID: [usize; 3] = [15, 25, 50];
pub const BFS3_K_GRID: [usize; 6] = [1, 500, 1250, 2500, 5000, 10000];
pub const BFS3_C_GRID: [usize; 4] = [2, 5, 10, 15];
pub const SBOSS_EPSILON_GRID: [f64; 7] = [1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
pub const SBOSS_DELTA_GRID: [f64; 11] =
    [9.0, 7.0, 5.0, 3.0, 1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
pub const BEB_GRID: [f64; 10] = [0.25, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 8.0, 16.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Random,
    EGreedy,
    SoftMax,
    OppsDs,
    Bamcp,
    Bfs3,
    Sboss,
    Beb,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::Random,
        Algorithm::EGreedy,
        Algorithm::SoftMax,
        Algorithm::OppsDs,
        Algorithm::Bamcp,
        Algorithm::Bfs3,
        Algorithm::Sboss,
        Algorithm::Beb,
    ];

    /// Machine tag used in files and on the command line.
    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Random => "random",
            Algorithm::EGreedy => "egreedy",
            Algorithm::SoftMax => "softmax",
            Algorithm::OppsDs => "opps-ds",
            Algorithm::Bamcp => "bamcp",
            Algorithm::Bfs3 => "bfs3",
            Algorithm::Sboss => "sboss",
            Algorithm::Beb => "beb",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Algorithm::Random => "Random",
            Algorithm::EGreedy => "e-Greedy",
            Algorithm::SoftMax => "Soft-max",
            Algorithm::OppsDs => "OPPS-DS",
            Algorithm::Bamcp => "BAMCP",
            Algorithm::Bfs3 => "BFS3",
            Algorithm::Sboss => "SBOSS",
            Algorithm::Beb => "BEB",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Algorithm> {
        let tag = tag.to_ascii_lowercase();
        Algorithm::ALL.into_iter().find(|a| a.tag() == tag)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// Algorithm plus its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentConfig {
    Random,
    EGreedy {
        epsilon: f64,
    },
    SoftMax {
        tau: f64,
    },
    /// `space` is the token bound `n` of `F_n`, `budget` the UCB1 pull count.
    OppsDs {
        space: usize,
        budget: u64,
    },
    /// `exploration` scales the UCT constant `R_max / (1 - gamma)`.
    Bamcp {
        k: usize,
        depth: usize,
        exploration: f64,
    },
    Bfs3 {
        k: usize,
        c: usize,
        depth: usize,
    },
    Sboss {
        epsilon: f64,
        delta: f64,
    },
    Beb {
        beta: f64,
    },
}

fn in_grid(v: f64, grid: &[f64]) -> bool {
    grid.iter()
        .any(|g| (g - v).abs() <= 1e-12 * g.abs().max(1.0))
}

impl AgentConfig {
    pub fn bamcp(k: usize, depth: usize) -> AgentConfig {
        AgentConfig::Bamcp {
            k,
            depth,
            exploration: 1.0,
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            AgentConfig::Random => Algorithm::Random,
            AgentConfig::EGreedy { .. } => Algorithm::EGreedy,
            AgentConfig::SoftMax { .. } => Algorithm::SoftMax,
            AgentConfig::OppsDs { .. } => Algorithm::OppsDs,
            AgentConfig::Bamcp { .. } => Algorithm::Bamcp,
            AgentConfig::Bfs3 { .. } => Algorithm::Bfs3,
            AgentConfig::Sboss { .. } => Algorithm::Sboss,
            AgentConfig::Beb { .. } => Algorithm::Beb,
        }
    }

    /// Parameters as `(name, value)` pairs, in a fixed order.
    pub fn parameters(&self) -> Vec<(&'static str, String)> {
        match *self {
            AgentConfig::Random => vec![],
            AgentConfig::EGreedy { epsilon } => vec![("epsilon", epsilon.to_string())],
            AgentConfig::SoftMax { tau } => vec![("tau", tau.to_string())],
            AgentConfig::OppsDs { space, budget } => {
                vec![("space", format!("F{space}")), ("beta", budget.to_string())]
            }
            AgentConfig::Bamcp {
                k,
                depth,
                exploration,
            } => vec![
                ("K", k.to_string()),
                ("depth", depth.to_string()),
                ("exploration", exploration.to_string()),
            ],
            AgentConfig::Bfs3 { k, c, depth } => vec![
                ("K", k.to_string()),
                ("C", c.to_string()),
                ("depth", depth.to_string()),
            ],
            AgentConfig::Sboss { epsilon, delta } => {
                vec![
                    ("epsilon", epsilon.to_string()),
                    ("delta", delta.to_string()),
                ]
            }
            AgentConfig::Beb { beta } => vec![("beta", beta.to_string())],
        }
    }

    /// Human-readable label, e.g. `e-Greedy (epsilon = 0)`.
    pub fn label(&self) -> String {
        let params: Vec<String> = self
            .parameters()
            .into_iter()
            .filter(|(name, value)| !(*name == "exploration" && value == "1"))
            .map(|(name, value)| {
                if name == "space" {
                    value
                } else {
                    format!("{name} = {value}")
                }
            })
            .collect();
        if params.is_empty() {
            self.algorithm().display_name().to_string()
        } else {
            format!(
                "{} ({})",
                self.algorithm().display_name(),
                params.join(", ")
            )
        }
    }

    /// Rejects invalid parameters; logs a warning for values outside the
    /// usual tuning grids.
    pub fn validate(&self) -> Result<()> {
        let label = self.label();
        let outside = |ok: bool| {
            if !ok {
                warn!("{label}: parameters outside the usual tuning grid");
            }
        };
        match *self {
            AgentConfig::Random => {}
            AgentConfig::EGreedy { epsilon } => {
                if !(0.0..=1.0).contains(&epsilon) {
                    return Err(Error::param(format!(
                        "epsilon must lie in [0, 1], got {epsilon}"
                    )));
                }
                outside(in_grid(epsilon, &EGREEDY_GRID));
            }
            AgentConfig::SoftMax { tau } => {
                if !(tau > 0.0 && tau.is_finite()) {
                    return Err(Error::param(format!("tau must be positive, got {tau}")));
                }
                outside(in_grid(tau, &SOFTMAX_GRID));
            }
            AgentConfig::OppsDs { space, budget } => {
                if !(MIN_SPACE..=MAX_SPACE).contains(&space) {
                    return Err(Error::param(format!(
                        "formula space must be F{MIN_SPACE}..F{MAX_SPACE}, got F{space}"
                    )));
                }
                if budget == 0 {
                    return Err(Error::param("the UCB1 budget must be positive"));
                }
                outside(OPPS_BUDGET_GRID.contains(&budget));
            }
            AgentConfig::Bamcp {
                k,
                depth,
                exploration,
            } => {
                if k == 0 || depth == 0 {
                    return Err(Error::param("BAMCP needs K >= 1 and depth >= 1"));
                }
                if !(exploration >= 0.0 && exploration.is_finite()) {
                    return Err(Error::param(format!(
                        "exploration must be non-negative, got {exploration}"
                    )));
                }
                outside(BAMCP_K_GRID.contains(&k) && TREE_DEPTH_GRID.contains(&depth));
            }
            AgentConfig::Bfs3 { k, c, depth } => {
                if k == 0 || c == 0 || depth == 0 {
                    return Err(Error::param("BFS3 needs K, C and depth >= 1"));
                }
                outside(
                    BFS3_K_GRID.contains(&k)
                        && BFS3_C_GRID.contains(&c)
                        && TREE_DEPTH_GRID.contains(&depth),
                );
            }
            AgentConfig::Sboss { epsilon, delta } => {
                if !(epsilon > 0.0 && epsilon.is_finite() && delta > 0.0 && delta.is_finite()) {
                    return Err(Error::param(format!(
                        "SBOSS needs positive epsilon and delta, got {epsilon} and {delta}"
                    )));
                }
                outside(in_grid(epsilon, &SBOSS_EPSILON_GRID) && in_grid(delta, &SBOSS_DELTA_GRID));
            }
            AgentConfig::Beb { beta } => {
                if !(beta >= 0.0 && beta.is_finite()) {
                    return Err(Error::param(format!(
                        "beta must be non-negative, got {beta}"
                    )));
                }
                outside(in_grid(beta, &BEB_GRID));
            }
        }
        Ok(())
    }

    /// Every configuration of the standard tuning grids for `algorithm`.
    pub fn grid(algorithm: Algorithm) -> Vec<AgentConfig> {
        match algorithm {
            Algorithm::Random => vec![AgentConfig::Random],
            Algorithm::EGreedy => EGREEDY_GRID
                .iter()
                .map(|&epsilon| AgentConfig::EGreedy { epsilon })
                .collect(),
            Algorithm::SoftMax => SOFTMAX_GRID
                .iter()
                .map(|&tau| AgentConfig::SoftMax { tau })
                .collect(),
            Algorithm::OppsDs => (MIN_SPACE..=MAX_SPACE)
                .flat_map(|space| {
                    OPPS_BUDGET_GRID
                        .iter()
                        .map(move |&budget| AgentConfig::OppsDs { space, budget })
                })
                .collect(),
            Algorithm::Bamcp => BAMCP_K_GRID
                .iter()
                .flat_map(|&k| {
                    TREE_DEPTH_GRID
                        .iter()
                        .map(move |&depth| AgentConfig::bamcp(k, depth))
                })
                .collect(),
            Algorithm::Bfs3 => {
                let mut out = Vec::new();
                for &k in &BFS3_K_GRID {
                    for &c in &BFS3_C_GRID {
                        for &depth in &TREE_DEPTH_GRID {
                            out.push(AgentConfig::Bfs3 { k, c, depth });
                        }
                    }
                }
                out
            }
            Algorithm::Sboss => SBOSS_EPSILON_GRID
                .iter()
                .flat_map(|&epsilon| {
                    SBOSS_DELTA_GRID
                        .iter()
                        .map(move |&delta| AgentConfig::Sboss { epsilon, delta })
                })
                .collect(),
            Algorithm::Beb => BEB_GRID
                .iter()
                .map(|&beta| AgentConfig::Beb { beta })
                .collect(),
        }
    }
}

impl fmt::Display for AgentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Problem-level constants every agent is trained for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfflineSettings {
    pub gamma: f64,
    /// Truncation horizon `T` of the trajectories (`T + 1` decisions).
    pub horizon: usize,
    pub rollout_epsilon: f64,
    pub vi_tolerance: f64,
}

impl OfflineSettings {
    pub fn new(gamma: f64, horizon: usize) -> Self {
        OfflineSettings {
            gamma,
            horizon,
            rollout_epsilon: DEFAULT_ROLLOUT_EPSILON,
            vi_tolerance: DEFAULT_VI_TOLERANCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_discount(self.gamma)?;
        if !(self.rollout_epsilon > 0.0) || !(self.vi_tolerance > 0.0) {
            return Err(Error::param(
                "rollout epsilon and solver tolerance must be positive",
            ));
        }
        Ok(())
    }
}

/// An agent after its offline phase.
#[derive(Debug, Clone)]
pub struct TrainedAgent {
    config: AgentConfig,
    prior: Arc<FdmDistribution>,
    settings: OfflineSettings,
    formula: Option<Formula>,
    prior_q: Option<Arc<Vec<f64>>>,
    offline_time: Duration,
}

/// Runs the offline phase of `config` against `prior`.
///
/// Only OPPS-DS does real work here (UCB1 over its formula space); the
/// others just capture the prior. The elapsed wall-clock time is recorded
/// as the offline time.
pub fn offline_learn(
    config: &AgentConfig,
    prior: Arc<FdmDistribution>,
    settings: OfflineSettings,
    rng: &mut Stream,
) -> Result<TrainedAgent> {
    let start = Instant::now();
    config.validate()?;
    settings.validate()?;
    let mut formula = None;
    let mut prior_q = None;
    if let AgentConfig::OppsDs { space, budget } = *config {
        let q2 = Arc::new(prior_mean_q(&prior, &settings));
        let space = enumerate_space(space)?;
        let bandit = run_ucb1(space.len(), budget, |arm| {
            let mdp = prior.sample_mdp(rng);
            let mut policy = OppsPolicy::new(
                space.formulas[arm].clone(),
                PosteriorState::new(prior.clone()),
                q2.clone(),
                &settings,
            );
            Ok(
                simulate_trajectory(&mdp, &mut policy, settings.horizon, settings.gamma, rng)?
                    .discounted_return,
            )
        })?;
        formula = Some(space.formulas[bandit.most_drawn()].clone());
        prior_q = Some(q2);
    }
    Ok(TrainedAgent {
        config: config.clone(),
        prior,
        settings,
        formula,
        prior_q,
        offline_time: start.elapsed(),
    })
}

fn prior_mean_q(prior: &Arc<FdmDistribution>, settings: &OfflineSettings) -> Vec<f64> {
    PosteriorState::new(prior.clone()).mean_model().solve(
        settings.gamma,
        settings.vi_tolerance,
        None,
    )
}

impl TrainedAgent {
    /// Rebuilds a trained agent from stored parts (e.g. a loaded file).
    pub fn from_parts(
        config: AgentConfig,
        prior: Arc<FdmDistribution>,
        settings: OfflineSettings,
        formula: Option<Formula>,
        offline_time: Duration,
    ) -> Result<TrainedAgent> {
        config.validate()?;
        settings.validate()?;
        let prior_q = match (&config, &formula) {
            (AgentConfig::OppsDs { .. }, Some(_)) => {
                Some(Arc::new(prior_mean_q(&prior, &settings)))
            }
            (AgentConfig::OppsDs { .. }, None) => {
                return Err(Error::param("an OPPS-DS agent needs its selected formula"))
            }
            (_, Some(_)) => return Err(Error::param("only OPPS-DS agents carry a formula")),
            _ => None,
        };
        Ok(TrainedAgent {
            config,
            prior,
            settings,
            formula,
            prior_q,
            offline_time,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn prior(&self) -> &Arc<FdmDistribution> {
        &self.prior
    }

    pub fn settings(&self) -> &OfflineSettings {
        &self.settings
    }

    /// Formula selected offline (OPPS-DS only).
    pub fn formula(&self) -> Option<&Formula> {
        self.formula.as_ref()
    }

    pub fn offline_time(&self) -> Duration {
        self.offline_time
    }

    pub fn label(&self) -> String {
        match &self.formula {
            Some(f) => format!("{} [{f}]", self.config.label()),
            None => self.config.label(),
        }
    }

    /// A fresh policy with the posterior reset to the prior.
    pub fn start_episode(&self) -> Box<dyn Policy> {
        let posterior = PosteriorState::new(self.prior.clone());
        let s = &self.settings;
        match self.config {
            AgentConfig::Random => Box::new(RandomPolicy::new(self.prior.n_actions())),
            AgentConfig::EGreedy { epsilon } => Box::new(EGreedy::new(posterior, epsilon, s)),
            AgentConfig::SoftMax { tau } => Box::new(SoftMax::new(posterior, tau, s)),
            AgentConfig::Beb { beta } => Box::new(Beb::new(posterior, beta, s)),
            AgentConfig::OppsDs { .. } => Box::new(OppsPolicy::new(
                self.formula
                    .clone()
                    .expect("trained OPPS-DS agent has a formula"),
                posterior,
                self.prior_q
                    .clone()
                    .expect("trained OPPS-DS agent has prior values"),
                s,
            )),
            AgentConfig::Bamcp {
                k,
                depth,
                exploration,
            } => Box::new(Bamcp::new(posterior, k, depth, exploration, s)),
            AgentConfig::Bfs3 { k, c, depth } => Box::new(Bfs3::new(posterior, k, c, depth, s)),
            AgentConfig::Sboss { epsilon, delta } => {
                Box::new(Sboss::new(posterior, epsilon, delta, s))
            }
        }
    }
}

/// Optimal action values of the posterior mean MDP, re-solved lazily after
/// each observation and warm-started from the previous solution.
///
/// `bonus > 0` adds `bonus / max(c, 1)` to every reward, `c` being the
/// effective count `theta + observations` of the transition.
#[derive(Debug, Clone)]
pub(crate) struct MeanValues {
    posterior: PosteriorState,
    bonus: f64,
    gamma: f64,
    tolerance: f64,
    q: Vec<f64>,
    stale: bool,
    solves: u64,
}

impl MeanValues {
    pub fn new(posterior: PosteriorState, bonus: f64, settings: &OfflineSettings) -> Self {
        MeanValues {
            posterior,
            bonus,
            gamma: settings.gamma,
            tolerance: settings.vi_tolerance,
            q: Vec::new(),
            stale: true,
            solves: 0,
        }
    }

    pub fn posterior(&self) -> &PosteriorState {
        &self.posterior
    }

    pub fn observe(&mut self, t: &crate::mdp::Transition) {
        self.posterior.update(t);
        self.stale = true;
    }

    pub fn solves(&self) -> u64 {
        self.solves
    }

    pub fn model(&self) -> SparseModel {
        let base = self.posterior.base();
        let alpha = self.posterior.concentrations();
        let (n, a) = (base.n_states(), base.n_actions());
        let bonus = self.bonus;
        self.posterior.mean_model_with(|x, u, y| {
            let c = alpha[(x * a + u) * n + y].max(1.0);
            base.reward(x, u, y) + bonus / c
        })
    }

    /// Action values at `x`, solving first if the posterior changed.
    pub fn row(&mut self, x: usize) -> &[f64] {
        if self.stale {
            let init = if self.q.is_empty() {
                None
            } else {
                Some(&self.q[..])
            };
            self.q = self.model().solve(self.gamma, self.tolerance, init);
            self.stale = false;
            self.solves += 1;
        }
        let a = self.posterior.n_actions();
        &self.q[x * a..(x + 1) * a]
    }

    pub fn greedy(&mut self, x: usize) -> usize {
        argmax(self.row(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::make_gc;
    use crate::rng::seeded;

    #[test]
    fn labels() {
        assert_eq!(
            AgentConfig::EGreedy { epsilon: 0.0 }.label(),
            "e-Greedy (epsilon = 0)"
        );
        assert_eq!(AgentConfig::Beb { beta: 2.5 }.label(), "BEB (beta = 2.5)");
        assert_eq!(AgentConfig::Random.label(), "Random");
        assert_eq!(
            AgentConfig::OppsDs {
                space: 2,
                budget: 50
            }
            .label(),
            "OPPS-DS (F2, beta = 50)"
        );
        assert_eq!(
            AgentConfig::bamcp(500, 15).label(),
            "BAMCP (K = 500, depth = 15)"
        );
    }

    #[test]
    fn validation() {
        assert!(AgentConfig::EGreedy { epsilon: 1.5 }.validate().is_err());
        assert!(AgentConfig::SoftMax { tau: 0.0 }.validate().is_err());
        assert!(AgentConfig::OppsDs {
            space: 7,
            budget: 50
        }
        .validate()
        .is_err());
        assert!(AgentConfig::Bfs3 {
            k: 1,
            c: 0,
            depth: 3
        }
        .validate()
        .is_err());
        assert!(AgentConfig::Sboss {
            epsilon: 0.1,
            delta: -1.0
        }
        .validate()
        .is_err());
        assert!(AgentConfig::Beb { beta: -0.1 }.validate().is_err());
        // outside the grid: accepted with a warning
        assert!(AgentConfig::Beb { beta: 0.7 }.validate().is_ok());
    }

    #[test]
    fn grids_validate() {
        for alg in Algorithm::ALL {
            let grid = AgentConfig::grid(alg);
            assert!(!grid.is_empty());
            for c in grid {
                assert_eq!(c.algorithm(), alg);
                c.validate().unwrap();
            }
        }
        assert_eq!(AgentConfig::grid(Algorithm::Sboss).len(), 77);
    }

    #[test]
    fn tags_round_trip() {
        for alg in Algorithm::ALL {
            assert_eq!(Algorithm::from_tag(alg.tag()), Some(alg));
        }
        assert_eq!(Algorithm::from_tag("nope"), None);
    }

    #[test]
    fn offline_initial_model_is_the_prior() {
        let prior = Arc::new(make_gc());
        let agent = offline_learn(
            &AgentConfig::EGreedy { epsilon: 0.1 },
            prior.clone(),
            OfflineSettings::new(0.95, 10),
            &mut seeded(0),
        )
        .unwrap();
        assert!(agent.formula().is_none());
        assert_eq!(**agent.prior(), *prior);
    }

    #[test]
    fn opps_offline_spends_the_whole_budget() {
        let prior = Arc::new(make_gc());
        let settings = OfflineSettings::new(0.9, 20);
        let space = enumerate_space(2).unwrap();
        let q2 = Arc::new(prior_mean_q(&prior, &settings));
        let mut rng = seeded(5);
        let mut pulls = 0;
        let bandit = run_ucb1(space.len(), 50, |arm| {
            pulls += 1;
            let mdp = prior.sample_mdp(&mut rng);
            let mut policy = OppsPolicy::new(
                space.formulas[arm].clone(),
                PosteriorState::new(prior.clone()),
                q2.clone(),
                &settings,
            );
            Ok(simulate_trajectory(&mdp, &mut policy, 20, 0.9, &mut rng)?.discounted_return)
        })
        .unwrap();
        assert_eq!(pulls, 50);
        assert_eq!(bandit.total_pulls(), 50);
        assert!(bandit.counts().iter().all(|&c| c >= 1));

        let agent = offline_learn(
            &AgentConfig::OppsDs {
                space: 2,
                budget: 50,
            },
            prior,
            settings,
            &mut seeded(5),
        )
        .unwrap();
        assert_eq!(agent.formula(), Some(&space.formulas[bandit.most_drawn()]));
    }

    #[test]
    fn opps_budget_below_arm_count_fails() {
        let err = offline_learn(
            &AgentConfig::OppsDs {
                space: 2,
                budget: 5,
            },
            Arc::new(make_gc()),
            OfflineSettings::new(0.9, 5),
            &mut seeded(0),
        );
        assert!(matches!(err, Err(Error::Budget { budget: 5, .. })));
    }
}
