//! Experiment pipeline: train offline once, draw `N` test MDPs, play one
//! truncated trajectory in each, and summarise returns and computation
//! times. Also the paired Z-test and best-agent selection under offline and
//! online time bounds.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use log::warn;
use rayon::prelude::*;

use crate::agents::{offline_learn, AgentConfig, OfflineSettings, TrainedAgent};
use crate::error::{Error, Result};
use crate::mdp::{check_discount, simulate_trajectory, truncation_horizon, Mdp, Transition};
use crate::prior::FdmDistribution;
use crate::rng::{derive, Purpose};

/// Default truncation error of the horizon formula.
pub const DEFAULT_TRUNCATION_EPSILON: f64 = 0.01;

/// One-sided 95% threshold of the paired Z-test.
pub const Z_ALPHA_95: f64 = 1.645;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Distribution the agents are trained on.
    pub prior: Arc<FdmDistribution>,
    /// Distribution the test MDPs are drawn from.
    pub test: Arc<FdmDistribution>,
    pub n_mdps: usize,
    pub gamma: f64,
    pub epsilon: f64,
    /// Overrides the horizon computed from `epsilon`, `gamma` and `R_max`.
    pub horizon: Option<usize>,
    pub master_seed: u64,
}

impl ExperimentSpec {
    pub fn new(
        prior: Arc<FdmDistribution>,
        test: Arc<FdmDistribution>,
        n_mdps: usize,
        gamma: f64,
        master_seed: u64,
    ) -> Self {
        ExperimentSpec {
            prior,
            test,
            n_mdps,
            gamma,
            epsilon: DEFAULT_TRUNCATION_EPSILON,
            horizon: None,
            master_seed,
        }
    }

    /// Prior and test distribution are the same.
    pub fn accurate(dist: Arc<FdmDistribution>, n_mdps: usize, gamma: f64, seed: u64) -> Self {
        Self::new(dist.clone(), dist, n_mdps, gamma, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_mdps == 0 {
            return Err(Error::param("an experiment needs at least one test MDP"));
        }
        check_discount(self.gamma)?;
        if !self.prior.same_shape(&self.test) {
            return Err(Error::DimensionMismatch(format!(
                "prior has {} states and {} actions, test distribution {} and {}",
                self.prior.n_states(),
                self.prior.n_actions(),
                self.test.n_states(),
                self.test.n_actions()
            )));
        }
        if self.horizon.is_none() {
            self.computed_horizon()?;
        }
        Ok(())
    }

    fn computed_horizon(&self) -> Result<usize> {
        let r_max = self.test.r_max().abs().max(self.test.r_min().abs());
        truncation_horizon(self.epsilon, self.gamma, r_max)
    }

    /// Truncation horizon `T`; trajectories make `T + 1` decisions.
    pub fn horizon(&self) -> Result<usize> {
        match self.horizon {
            Some(t) => Ok(t),
            None => self.computed_horizon(),
        }
    }

    pub fn offline_settings(&self) -> Result<OfflineSettings> {
        Ok(OfflineSettings::new(self.gamma, self.horizon()?))
    }

    /// The `N` test MDPs, each drawn from its own derived stream.
    pub fn test_mdps(&self) -> Vec<Mdp> {
        (0..self.n_mdps)
            .map(|i| {
                let mut rng = derive(self.master_seed, Purpose::TestMdp, i as u64);
                self.test.sample_mdp(&mut rng)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub discounted_return: f64,
    /// Sum of per-decision times.
    pub total_time: Duration,
    pub max_step_time: Duration,
    pub steps: usize,
    pub transitions: Vec<Transition>,
}

impl TrajectoryRecord {
    /// Everything except wall-clock fields.
    pub fn same_outcome(&self, other: &TrajectoryRecord) -> bool {
        self.discounted_return.to_bits() == other.discounted_return.to_bits()
            && self.steps == other.steps
            && self.transitions == other.transitions
    }
}

/// Results of one agent on one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultSet {
    pub label: String,
    pub config: AgentConfig,
    pub offline_time: Duration,
    pub records: Vec<TrajectoryRecord>,
}

/// Confidence-interval half-width rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CiRule {
    /// `2 sigma / sqrt(N)`.
    #[default]
    Standard,
    /// `2 sigma / N`.
    Literal,
}

impl CiRule {
    pub fn name(self) -> &'static str {
        match self {
            CiRule::Standard => "2*sd/sqrt(N)",
            CiRule::Literal => "2*sd/N",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreEstimate {
    pub mean: f64,
    /// Sample standard deviation (`N - 1` denominator; 0 when `N = 1`).
    pub std: f64,
    pub n: usize,
    pub rule: CiRule,
    pub half_width: f64,
}

impl ScoreEstimate {
    pub fn from_scores(scores: &[f64], rule: CiRule) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::param("no scores to summarise"));
        }
        let n = scores.len();
        let mean = scores.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let half_width = match rule {
            CiRule::Standard => 2.0 * std / (n as f64).sqrt(),
            CiRule::Literal => 2.0 * std / n as f64,
        };
        Ok(ScoreEstimate {
            mean,
            std,
            n,
            rule,
            half_width,
        })
    }

    pub fn low(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn high(&self) -> f64 {
        self.mean + self.half_width
    }

    /// Whether `[low, high]` intersects `center ± half_width`.
    pub fn overlaps(&self, center: f64, half_width: f64) -> bool {
        self.low() <= center + half_width && center - half_width <= self.high()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeFeature {
    Offline,
    MeanOnline,
    MaxOnline,
}

impl ResultSet {
    pub fn scores(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.discounted_return).collect()
    }

    pub fn score(&self, rule: CiRule) -> Result<ScoreEstimate> {
        ScoreEstimate::from_scores(&self.scores(), rule)
    }

    pub fn mean_score(&self) -> f64 {
        let s = self.scores();
        s.iter().sum::<f64>() / s.len().max(1) as f64
    }

    pub fn time(&self, feature: TimeFeature) -> Duration {
        match feature {
            TimeFeature::Offline => self.offline_time,
            TimeFeature::MeanOnline => {
                let steps: usize = self.records.iter().map(|r| r.steps).sum();
                if steps == 0 {
                    return Duration::ZERO;
                }
                let total: Duration = self.records.iter().map(|r| r.total_time).sum();
                total.div_f64(steps as f64)
            }
            TimeFeature::MaxOnline => self
                .records
                .iter()
                .map(|r| r.max_step_time)
                .fold(self.offline_time, Duration::max),
        }
    }

    /// Records agree on everything but wall-clock times.
    pub fn same_outcome(&self, other: &ResultSet) -> bool {
        self.config == other.config
            && self.records.len() == other.records.len()
            && self
                .records
                .iter()
                .zip(&other.records)
                .all(|(a, b)| a.same_outcome(b))
    }
}

/// Trains `config` on the prior, then evaluates it.
pub fn run_experiment(
    spec: &ExperimentSpec,
    config: &AgentConfig,
    workers: usize,
) -> Result<ResultSet> {
    spec.validate()?;
    let mut rng = derive(spec.master_seed, Purpose::Offline, 0);
    let agent = offline_learn(
        config,
        spec.prior.clone(),
        spec.offline_settings()?,
        &mut rng,
    )?;
    run_trained(spec, &agent, workers, |_| {})
}

/// Evaluates an already trained agent on the experiment's test MDPs.
/// `progress` is called with the number of finished trajectories.
pub fn run_trained<F>(
    spec: &ExperimentSpec,
    agent: &TrainedAgent,
    workers: usize,
    progress: F,
) -> Result<ResultSet>
where
    F: Fn(usize) + Sync,
{
    spec.validate()?;
    if !agent.prior().same_shape(&spec.test) {
        return Err(Error::DimensionMismatch(format!(
            "agent trained on {} states and {} actions, test distribution has {} and {}",
            agent.prior().n_states(),
            agent.prior().n_actions(),
            spec.test.n_states(),
            spec.test.n_actions()
        )));
    }
    if agent.settings().gamma != spec.gamma {
        return Err(Error::param(format!(
            "agent trained with gamma = {}, experiment uses {}",
            agent.settings().gamma,
            spec.gamma
        )));
    }
    let horizon = spec.horizon()?;
    let mdps = spec.test_mdps();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let run_one = |i: usize| -> Result<TrajectoryRecord> {
        let mut policy = agent.start_episode();
        let mut rng = derive(spec.master_seed, Purpose::Trajectory, i as u64);
        let res = simulate_trajectory(&mdps[i], policy.as_mut(), horizon, spec.gamma, &mut rng)
            .map_err(|e| Error::Trajectory {
                index: i,
                source: Box::new(e),
            })?;
        let finished = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
        progress(finished);
        Ok(TrajectoryRecord {
            discounted_return: res.discounted_return,
            total_time: res.total_time(),
            max_step_time: res.step_times.iter().copied().max().unwrap_or_default(),
            steps: res.transitions.len(),
            transitions: res.transitions,
        })
    };
    let records: Result<Vec<TrajectoryRecord>> = if workers <= 1 {
        (0..mdps.len()).map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::param(format!("cannot start {workers} workers: {e}")))?;
        pool.install(|| (0..mdps.len()).into_par_iter().map(run_one).collect())
    };
    Ok(ResultSet {
        label: agent.label(),
        config: agent.config().clone(),
        offline_time: agent.offline_time(),
        records: records?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZTest {
    pub z: f64,
    pub mean_difference: f64,
    /// Standard deviation of the paired differences (population form).
    pub sd_difference: f64,
}

impl ZTest {
    /// `A` is significantly better than `B` at threshold `z_alpha`.
    pub fn a_better(&self, z_alpha: f64) -> bool {
        self.z >= z_alpha
    }
}

/// Paired Z-test of `a` against `b` (same MDPs, same order):
/// `Z = mean(d) / (sd(d) / sqrt(N))` with `d = a - b`.
///
/// A zero spread gives `Z = ±inf` following the sign of the mean
/// difference, or 0 if that is zero too.
pub fn paired_z_test(a: &[f64], b: &[f64]) -> Result<ZTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "paired test needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::param("paired test needs at least one pair"));
    }
    let n = a.len();
    if n < 30 {
        warn!("paired Z-test on {n} pairs; the normal approximation wants at least 30");
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let z = if sd > 0.0 {
        mean / (sd / (n as f64).sqrt())
    } else if mean > 0.0 {
        f64::INFINITY
    } else if mean < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    };
    Ok(ZTest {
        z,
        mean_difference: mean,
        sd_difference: sd,
    })
}

/// Indices of the statistically best agents among those with
/// `offline <= offline_bound` and `mean online <= online_bound`.
///
/// Keeps the best configuration of each algorithm, then returns every one
/// of those that the overall best does not beat significantly. Sorted by
/// decreasing mean.
pub fn select_best_agents(
    results: &[ResultSet],
    offline_bound: Duration,
    online_bound: Duration,
    z_alpha: f64,
) -> Result<Vec<usize>> {
    let mut per_algorithm: BTreeMap<_, usize> = BTreeMap::new();
    for (i, r) in results.iter().enumerate() {
        if r.time(TimeFeature::Offline) > offline_bound
            || r.time(TimeFeature::MeanOnline) > online_bound
        {
            continue;
        }
        let entry = per_algorithm.entry(r.config.algorithm()).or_insert(i);
        if r.mean_score() > results[*entry].mean_score() {
            *entry = i;
        }
    }
    let mut candidates: Vec<usize> = per_algorithm.into_values().collect();
    if candidates.is_empty() {
        return Ok(candidates);
    }
    candidates.sort_by(|&a, &b| {
        results[b]
            .mean_score()
            .total_cmp(&results[a].mean_score())
            .then(a.cmp(&b))
    });
    let best = candidates[0];
    let best_scores = results[best].scores();
    let mut out = vec![best];
    for &i in &candidates[1..] {
        let z = paired_z_test(&best_scores, &results[i].scores())?;
        if !z.a_better(z_alpha) {
            out.push(i);
        }
    }
    Ok(out)
}

/// Distinct observed offline and mean-online times, ascending: the natural
/// bound grid of [`frontier_grid`].
pub fn observed_bounds(results: &[ResultSet]) -> (Vec<Duration>, Vec<Duration>) {
    let mut off: Vec<Duration> = results
        .iter()
        .map(|r| r.time(TimeFeature::Offline))
        .collect();
    let mut on: Vec<Duration> = results
        .iter()
        .map(|r| r.time(TimeFeature::MeanOnline))
        .collect();
    off.sort();
    off.dedup();
    on.sort();
    on.dedup();
    (off, on)
}

/// `cells[i][j]` = [`select_best_agents`] at
/// `(offline_bounds[i], online_bounds[j])`.
pub fn frontier_grid(
    results: &[ResultSet],
    offline_bounds: &[Duration],
    online_bounds: &[Duration],
    z_alpha: f64,
) -> Result<Vec<Vec<Vec<usize>>>> {
    offline_bounds
        .iter()
        .map(|&k1| {
            online_bounds
                .iter()
                .map(|&k2| select_best_agents(results, k1, k2, z_alpha))
                .collect()
        })
        .collect()
}
