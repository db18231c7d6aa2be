//! PPO on the two-state benchmark MDP.

use rsma_core::env::Environment;
use rsma_core::ppo::{PpoAgent, PpoConfig};
use rsma_core::rng::{streams, SimRng};
use rsma_core::toy::TwoStateToy;

const DISCOUNT: f64 = 0.9;

/// Value iteration over the two deterministic extreme actions "all weight on
/// logit 0" and "all weight on logit 1". Any Softmax weighting earns a convex
/// combination of their rewards, so these bracket the continuous problem.
/// Returns the optimal action per state and the optimal values.
fn value_iteration() -> ([usize; 2], [f64; 2]) {
    let mut v = [0.0f64; 2];
    let mut policy = [0usize; 2];
    for _ in 0..2000 {
        let mut next = [0.0; 2];
        for s in 0..2 {
            let mut best = f64::NEG_INFINITY;
            for a in 0..2 {
                let mut weights = [0.0; 2];
                weights[a] = 1.0;
                // Next state is uniform whatever the action.
                let q = TwoStateToy::reward(s, &weights) + DISCOUNT * 0.5 * (v[0] + v[1]);
                if q > best {
                    best = q;
                    policy[s] = a;
                }
            }
            next[s] = best;
        }
        v = next;
    }
    (policy, v)
}

fn standard_normal_cdf(x: f64) -> f64 {
    // Abramowitz-Stegun 7.1.26 on erf, absolute error below 1.5e-7.
    let z = x.abs() / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.327_591_1 * z);
    let poly = t * (0.254_829_592 + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    let erf = 1.0 - poly * (-z * z).exp();
    if x >= 0.0 {
        0.5 * (1.0 + erf)
    } else {
        0.5 * (1.0 - erf)
    }
}

fn toy_config() -> PpoConfig {
    PpoConfig {
        discount: DISCOUNT,
        rollout_steps: 64,
        minibatch: 32,
        epochs: 4,
        learning_rate: 3e-3,
        hidden: vec![16, 16],
        ..PpoConfig::default()
    }
}

/// Trains for `updates` iterations; returns the agent and the mean reward of
/// every update's rollout.
fn train_toy(seed: u64, updates: usize) -> (PpoAgent, Vec<f64>) {
    let mut env = TwoStateToy::new(16, SimRng::with_stream(seed, streams::CHANNEL));
    let mut init = SimRng::with_stream(seed, streams::POLICY_INIT);
    let mut agent = PpoAgent::new(toy_config(), env.observation_dim(), env.action_layout(), &mut init).unwrap();
    let mut rng = SimRng::with_stream(seed, streams::SAMPLING);
    let mut history = Vec::with_capacity(updates);
    for _ in 0..updates {
        let (buffer, _) = agent.train_iteration(&mut env, &mut rng).unwrap();
        history.push(buffer.transitions.iter().map(|t| t.reward).sum::<f64>() / buffer.len() as f64);
    }
    (agent, history)
}

/// Probability that the sampled logits rank the `target` logit first.
fn prob_of_action(agent: &PpoAgent, observation: &[f64], target: usize) -> f64 {
    let out = agent.params.forward(&rsma_core::ppo::observation_features(observation)).unwrap();
    let sd = agent.params.log_std().iter().map(|l| l.exp()).collect::<Vec<_>>();
    let other = 1 - target;
    let gap = out.mean[target] - out.mean[other];
    standard_normal_cdf(gap / (sd[0] * sd[0] + sd[1] * sd[1]).sqrt())
}

#[test]
fn value_iteration_oracle() {
    let (policy, v) = value_iteration();
    assert_eq!(policy, [0, 1]);
    let expected = 1.0 / (1.0 - DISCOUNT);
    assert!((v[0] - expected).abs() < 1e-9 && (v[1] - expected).abs() < 1e-9);
}

#[test]
fn optimal_action_dominates_after_200_updates() {
    let (policy, _) = value_iteration();
    for seed in 0..3 {
        let (agent, _) = train_toy(seed, 200);
        for state in 0..2 {
            let mut obs = vec![0.0; 2];
            obs[state] = 1.0;
            let p = prob_of_action(&agent, &obs, policy[state]);
            assert!(p > 0.9, "seed {seed} state {state}: probability {p:.3}");
        }
    }
}

#[test]
fn average_return_improves_over_moving_windows() {
    let mut passing = 0;
    for seed in 10..15 {
        let (_, history) = train_toy(seed, 200);
        let windows: Vec<f64> = history.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
        if windows.last().unwrap() >= windows.first().unwrap() {
            passing += 1;
        }
    }
    assert!(passing >= 4, "{passing}/5 seeds improved");
}

#[test]
fn untrained_policy_is_near_uniform() {
    let env = TwoStateToy::new(16, SimRng::seed_from_u64(0));
    let agent = PpoAgent::new(
        toy_config(),
        env.observation_dim(),
        env.action_layout(),
        &mut SimRng::seed_from_u64(1),
    )
    .unwrap();
    let p = prob_of_action(&agent, &[1.0, 0.0], 0);
    assert!((p - 0.5).abs() < 0.05, "{p}");
}

#[test]
fn normal_cdf_reference_values() {
    assert!((standard_normal_cdf(0.0) - 0.5).abs() < 1e-7);
    assert!((standard_normal_cdf(1.281_551_565_5) - 0.9).abs() < 1e-6);
    assert!((standard_normal_cdf(-1.959_963_985) - 0.025).abs() < 1e-6);
}
