use std::collections::HashSet;
use std::sync::Arc;

use bbrl_core::agents::softmax::boltzmann;
use bbrl_core::agents::AgentConfig;
use bbrl_core::formulas::{enumerate_all, enumerate_space, probe_points, run_ucb1, PENALTY};
use bbrl_core::mdp::{truncation_horizon, value_iteration, Mdp};
use bbrl_core::prior::{
    make_gc, make_gdl, make_grid, sample_dirichlet, uniform_like, PosteriorState,
};
use bbrl_core::protocol::{paired_z_test, run_experiment, ExperimentSpec};
use bbrl_core::rng::seeded;
use proptest::prelude::*;

/// Tiny MDP: `n` states, `a` actions, rows from positive weights.
fn tiny_mdp() -> impl Strategy<Value = Mdp> {
    (1usize..=3, 1usize..=2).prop_flat_map(|(n, a)| {
        let len = n * a * n;
        (
            prop::collection::vec(0.0f64..1.0, len),
            prop::collection::vec(-1.0f64..1.0, len),
        )
            .prop_map(move |(w, r)| {
                let mut p = w;
                for row in p.chunks_mut(n) {
                    for v in row.iter_mut() {
                        *v += 0.05;
                    }
                    let s: f64 = row.iter().sum();
                    row.iter_mut().for_each(|v| *v /= s);
                }
                Mdp::new(n, a, p, r, 0).unwrap()
            })
    })
}

/// Solves `(I - gamma P) v = r` by Gaussian elimination with pivoting.
fn solve_linear(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))
            .unwrap();
        m.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut v = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * v[k]).sum();
        v[r] = (b[r] - s) / m[r][r];
    }
    v
}

/// Optimal values by evaluating every deterministic policy exactly.
fn enumerated_optimum(mdp: &Mdp, gamma: f64) -> Vec<f64> {
    let (n, a) = (mdp.n_states(), mdp.n_actions());
    let mut best = vec![f64::NEG_INFINITY; n];
    for code in 0..a.pow(n as u32) {
        let policy: Vec<usize> = (0..n).map(|x| (code / a.pow(x as u32)) % a).collect();
        let mut m = vec![vec![0.0; n]; n];
        let mut r = vec![0.0; n];
        for x in 0..n {
            m[x][x] += 1.0;
            for y in 0..n {
                let p = mdp.probability(x, policy[x], y);
                m[x][y] -= gamma * p;
                r[x] += p * mdp.reward(x, policy[x], y);
            }
        }
        for (b, v) in best.iter_mut().zip(solve_linear(m, r)) {
            *b = b.max(v);
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn value_iteration_matches_policy_enumeration(mdp in tiny_mdp(), gamma in 0.5f64..0.95) {
        let q = value_iteration(&mdp, gamma, 1e-10).unwrap();
        let exact = enumerated_optimum(&mdp, gamma);
        for (x, v) in exact.iter().enumerate() {
            prop_assert!((q.value(x) - v).abs() < 1e-5, "state {x}: {} vs {v}", q.value(x));
        }
    }

    #[test]
    fn affine_reward_change_keeps_greedy_policy(
        mdp in tiny_mdp(),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let gamma = 0.9;
        let moved = Mdp::new(
            mdp.n_states(),
            mdp.n_actions(),
            mdp.transitions().to_vec(),
            mdp.rewards().iter().map(|r| scale * r + shift).collect(),
            0,
        ).unwrap();
        let q = value_iteration(&mdp, gamma, 1e-12).unwrap();
        let q2 = value_iteration(&moved, gamma, 1e-12).unwrap();
        for x in 0..mdp.n_states() {
            // compare only when the best action is clearly separated
            let row = q.row(x);
            let best = q.greedy_action(x);
            let gap = row.iter().enumerate()
                .filter(|&(u, _)| u != best)
                .map(|(_, v)| row[best] - v)
                .fold(f64::INFINITY, f64::min);
            if gap > 1e-6 {
                prop_assert_eq!(q2.greedy_action(x), best);
            }
        }
    }

    #[test]
    fn ucb1_spends_exactly_its_budget(
        arms in 1usize..8,
        extra in 0u64..200,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = seeded(seed);
        let budget = arms as u64 + extra;
        let bandit = run_ucb1(arms, budget, |_| Ok(rng.random::<f64>())).unwrap();
        prop_assert_eq!(bandit.total_pulls(), budget);
        prop_assert_eq!(bandit.counts().iter().sum::<u64>(), budget);
        prop_assert!(bandit.counts().iter().all(|&c| c >= 1));
        let winner = bandit.most_drawn();
        prop_assert!(bandit.counts().iter().all(|&c| c <= bandit.counts()[winner]));
    }

    #[test]
    fn z_statistic_is_antisymmetric(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..40),
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let ab = paired_z_test(&a, &b).unwrap();
        let ba = paired_z_test(&b, &a).unwrap();
        prop_assert_eq!(ab.z, -ba.z);
        prop_assert_eq!(ab.mean_difference, -ba.mean_difference);
    }

    #[test]
    fn boltzmann_is_a_distribution(
        q in prop::collection::vec(-1e3f64..1e3, 1..6),
        tau in 1e-4f64..100.0,
    ) {
        let p = boltzmann(&q, tau);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
        let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (v, pv) in q.iter().zip(&p) {
            if *v == best {
                prop_assert!(p.iter().all(|other| other <= pv));
            }
        }
    }

    #[test]
    fn sampled_rows_are_stochastic(seed in any::<u64>(), which in 0usize..4, observations in 0usize..20) {
        let prior = Arc::new(match which {
            0 => make_gc(),
            1 => make_gdl(),
            2 => make_grid(),
            _ => uniform_like(&make_gc()),
        });
        let mut rng = seeded(seed);
        let mdp = prior.sample_mdp(&mut rng);
        let mut post = PosteriorState::new(prior.clone());
        for _ in 0..observations {
            let t = bbrl_core::mdp::sample_transition(&mdp, 0, 0, &mut rng);
            post.update(&t);
        }
        let sampled = post.sample_mdp(&mut rng);
        let n = prior.n_states();
        for m in [&mdp, &sampled] {
            for (i, row) in m.transitions().chunks(n).enumerate() {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                for (y, &p) in row.iter().enumerate() {
                    prop_assert!(p >= 0.0);
                    if prior.theta()[i * n + y] == 0.0 {
                        prop_assert_eq!(p, 0.0);
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn horizon_bounds_the_tail(
        epsilon in 1e-6f64..1.0,
        gamma in 0.01f64..0.999,
        r_max in 1e-3f64..1e3,
    ) {
        let t = truncation_horizon(epsilon, gamma, r_max).unwrap();
        let tail = |k: usize| gamma.powi(k as i32) * r_max / (1.0 - gamma);
        prop_assert!(tail(t + 1) <= epsilon * (1.0 + 1e-12));
        if t > 0 {
            prop_assert!(tail(t) > epsilon * (1.0 - 1e-12));
        }
    }
}

#[test]
fn dirichlet_moments() {
    let alpha = [0.5, 2.0, 0.0, 7.5];
    let a0: f64 = alpha.iter().sum();
    let n = 100_000;
    let mut rng = seeded(42);
    let mut out = [0.0; 4];
    let mut sum = [0.0; 4];
    let mut sum_sq = [0.0; 4];
    for _ in 0..n {
        sample_dirichlet(&alpha, &mut rng, &mut out);
        for i in 0..4 {
            sum[i] += out[i];
            sum_sq[i] += out[i] * out[i];
        }
    }
    for i in 0..4 {
        let mean = alpha[i] / a0;
        let var = alpha[i] * (a0 - alpha[i]) / (a0 * a0 * (a0 + 1.0));
        let est = sum[i] / n as f64;
        assert!(
            (est - mean).abs() <= 4.0 * (var / n as f64).sqrt() + 1e-15,
            "component {i}: {est} vs {mean}"
        );
        let est_var = sum_sq[i] / n as f64 - est * est;
        assert!(
            (est_var - var).abs() <= 0.05 * var + 1e-15,
            "component {i}: var {est_var} vs {var}"
        );
    }
}

fn probe_values(f: &bbrl_core::formulas::Formula, probes: &[[f64; 3]]) -> Vec<f64> {
    probes.iter().map(|&p| f.evaluate(p)).collect()
}

fn same_values(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(&x, &y)| {
        if x == PENALTY || y == PENALTY {
            x == y
        } else {
            (x - y).abs() <= 1e-9 * 1f64.max(x.abs()).max(y.abs())
        }
    })
}

#[test]
fn reduced_spaces_are_nested() {
    for n in 1..5 {
        let small: HashSet<String> = enumerate_space(n)
            .unwrap()
            .formulas
            .iter()
            .map(|f| f.to_string())
            .collect();
        let large: HashSet<String> = enumerate_space(n + 1)
            .unwrap()
            .formulas
            .iter()
            .map(|f| f.to_string())
            .collect();
        assert!(small.is_subset(&large), "F{n} not inside F{}", n + 1);
        assert!(small.len() < large.len());
    }
}

#[test]
fn reduced_space_covers_every_formula() {
    let probes = probe_points();
    for n in 1..=4 {
        let space = enumerate_space(n).unwrap();
        let reps: Vec<Vec<f64>> = space
            .formulas
            .iter()
            .map(|f| probe_values(f, &probes))
            .collect();
        for f in &space.formulas {
            assert!(f.tokens() <= n);
        }
        for (i, a) in reps.iter().enumerate() {
            for b in &reps[i + 1..] {
                assert!(!same_values(a, b), "F{n} keeps two equivalent formulas");
            }
        }
        for f in enumerate_all(n) {
            let v = probe_values(&f, &probes);
            assert!(
                reps.iter().any(|r| same_values(r, &v)),
                "{f} has no representative in F{n}"
            );
        }
    }
}

#[test]
fn serial_and_parallel_runs_agree() {
    let prior = Arc::new(make_gdl());
    let spec = ExperimentSpec::accurate(prior, 24, 0.95, 5);
    for config in [
        AgentConfig::Random,
        AgentConfig::EGreedy { epsilon: 0.3 },
        AgentConfig::SoftMax { tau: 0.5 },
        AgentConfig::Beb { beta: 1.0 },
        AgentConfig::Sboss {
            epsilon: 0.1,
            delta: 3.0,
        },
    ] {
        let serial = run_experiment(&spec, &config, 1).unwrap();
        let parallel = run_experiment(&spec, &config, 8).unwrap();
        assert!(serial.same_outcome(&parallel), "{}", config.label());
    }
}
