//! Rollout storage and generalized advantage estimation.

use alloc::vec;
use alloc::vec::Vec;

use crate::cfm::McSample;
use crate::tensor::Tensor;

/// Per-env, per-step rollout record. Transitions are stored time-major:
/// flat index `t·num_envs + e`.
///
/// Observations are stored as the policy saw them (already normalized),
/// so losses recomputed during the update use exactly the inputs from
/// collection time. For flow policies, `mc_samples` and `l_old` cache
/// the Monte Carlo draws and their losses under θ_old; both stay fixed
/// across every epoch of the update.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub num_envs: usize,
    pub steps: usize,
    pub n_mc: usize,
    pub obs: Tensor,
    pub actions: Tensor,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub truncateds: Vec<bool>,
    pub values: Vec<f64>,
    /// Critic value of the pre-reset next observation; read only where
    /// `truncateds` is set.
    pub boot_values: Vec<f64>,
    /// Behavior log-likelihoods (Gaussian policies only).
    pub logliks_old: Vec<f64>,
    /// Cached Monte Carlo draws, `n_mc` per transition (flow policies).
    pub mc_samples: Vec<McSample>,
    /// Cached per-sample CFM losses under θ_old.
    pub l_old: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.num_envs * self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, env: usize, step: usize) -> usize {
        step * self.num_envs + env
    }
}

/// Fill `advantages` and `returns` by the backward GAE recursion.
///
/// `last_values` holds the critic value of each env's observation after
/// the final stored step, used to bootstrap rollout ends that are
/// neither terminated nor truncated. True termination (`dones`) blocks
/// bootstrapping entirely; time-limit truncation bootstraps with the
/// cached value of the pre-reset observation.
pub fn compute_gae(buffer: &mut RolloutBuffer, gamma: f64, lambda: f64, last_values: &[f64]) {
    assert_eq!(last_values.len(), buffer.num_envs, "one bootstrap value per env");
    let n = buffer.len();
    assert_eq!(buffer.values.len(), n, "values missing");
    buffer.advantages = vec![0.0; n];
    buffer.returns = vec![0.0; n];

    for e in 0..buffer.num_envs {
        let mut adv_next = 0.0;
        for t in (0..buffer.steps).rev() {
            let i = buffer.index(e, t);
            let next_value = if buffer.dones[i] {
                0.0
            } else if buffer.truncateds[i] {
                buffer.boot_values[i]
            } else if t + 1 == buffer.steps {
                last_values[e]
            } else {
                buffer.values[buffer.index(e, t + 1)]
            };
            let delta = buffer.rewards[i] + gamma * next_value - buffer.values[i];
            let episode_continues = !(buffer.dones[i] || buffer.truncateds[i]);
            let adv =
                delta + if episode_continues { gamma * lambda * adv_next } else { 0.0 };
            buffer.advantages[i] = adv;
            buffer.returns[i] = adv + buffer.values[i];
            adv_next = adv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn empty_buffer(num_envs: usize, steps: usize) -> RolloutBuffer {
        let n = num_envs * steps;
        RolloutBuffer {
            num_envs,
            steps,
            n_mc: 0,
            obs: Tensor::zeros(vec![n, 1]),
            actions: Tensor::zeros(vec![n, 1]),
            rewards: vec![0.0; n],
            dones: vec![false; n],
            truncateds: vec![false; n],
            values: vec![0.0; n],
            boot_values: vec![0.0; n],
            logliks_old: Vec::new(),
            mc_samples: Vec::new(),
            l_old: Vec::new(),
            advantages: Vec::new(),
            returns: Vec::new(),
        }
    }

    #[test]
    fn one_step_terminal_episode() {
        // done: Â₀ = r₀ − V₀ = 1 − 0.5 = 0.5
        let mut b = empty_buffer(1, 1);
        b.rewards[0] = 1.0;
        b.values[0] = 0.5;
        b.dones[0] = true;
        compute_gae(&mut b, 0.99, 0.95, &[123.0]);
        assert!((b.advantages[0] - 0.5).abs() < 1e-15);
        assert!((b.returns[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn one_step_bootstrapped() {
        // non-terminal: δ = 1 + 0.99·1 − 0.5 = 1.49
        let mut b = empty_buffer(1, 1);
        b.rewards[0] = 1.0;
        b.values[0] = 0.5;
        compute_gae(&mut b, 0.99, 0.95, &[1.0]);
        assert!((b.advantages[0] - 1.49).abs() < 1e-15);
    }

    #[test]
    fn truncation_bootstraps_with_cached_value() {
        let mut b = empty_buffer(1, 2);
        b.rewards = vec![0.0, 1.0];
        b.values = vec![0.2, 0.5];
        b.truncateds[1] = true;
        b.boot_values[1] = 2.0;
        compute_gae(&mut b, 0.9, 0.8, &[777.0]);
        // t=1: δ = 1 + 0.9·2 − 0.5 = 2.3, recursion stops there.
        assert!((b.advantages[1] - 2.3).abs() < 1e-12);
        // t=0: δ = 0 + 0.9·0.5 − 0.2 = 0.25; Â = 0.25 + 0.72·2.3
        assert!((b.advantages[0] - (0.25 + 0.9 * 0.8 * 2.3)).abs() < 1e-12);
    }

    #[test]
    fn reward_to_go_limit() {
        // λ = 1, γ = 1, V ≡ 0 → Â_t = Σ_{k≥t} r_k within the episode.
        let mut b = empty_buffer(1, 4);
        b.rewards = vec![1.0, 2.0, 3.0, 4.0];
        b.dones[3] = true;
        compute_gae(&mut b, 1.0, 1.0, &[0.0]);
        assert_eq!(b.advantages, vec![10.0, 9.0, 7.0, 4.0]);
    }

    #[test]
    fn lambda_zero_is_one_step_td() {
        let mut b = empty_buffer(1, 3);
        b.rewards = vec![1.0, -1.0, 0.5];
        b.values = vec![0.3, 0.6, -0.2];
        compute_gae(&mut b, 0.97, 0.0, &[0.4]);
        let d0 = 1.0 + 0.97 * 0.6 - 0.3;
        let d1 = -1.0 + 0.97 * (-0.2) - 0.6;
        let d2 = 0.5 + 0.97 * 0.4 + 0.2;
        assert!((b.advantages[0] - d0).abs() < 1e-12);
        assert!((b.advantages[1] - d1).abs() < 1e-12);
        assert!((b.advantages[2] - d2).abs() < 1e-12);
    }

    /// Brute-force oracle: Â_t = Σ_k (γλ)^k δ_{t+k}, stopping at the
    /// first episode boundary, with δ defined exactly as in the spec.
    fn brute_force_gae(b: &RolloutBuffer, gamma: f64, lambda: f64, last: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; b.len()];
        for e in 0..b.num_envs {
            for t in 0..b.steps {
                let mut acc = 0.0;
                let mut w = 1.0;
                for k in t..b.steps {
                    let i = b.index(e, k);
                    let next_value = if b.dones[i] {
                        0.0
                    } else if b.truncateds[i] {
                        b.boot_values[i]
                    } else if k + 1 == b.steps {
                        last[e]
                    } else {
                        b.values[b.index(e, k + 1)]
                    };
                    let delta = b.rewards[i] + gamma * next_value - b.values[i];
                    acc += w * delta;
                    if b.dones[i] || b.truncateds[i] {
                        break;
                    }
                    w *= gamma * lambda;
                }
                out[b.index(e, t)] = acc;
            }
        }
        out
    }

    #[test]
    fn recursive_matches_brute_force_on_random_episodes() {
        let mut rng = crate::rngstream::rng_from_seed(99);
        for _ in 0..1000 {
            let steps = 1 + rng.random_range(0..20usize);
            let envs = 1 + rng.random_range(0..3usize);
            let mut b = empty_buffer(envs, steps);
            for i in 0..b.len() {
                b.rewards[i] = rng.random::<f64>() * 4.0 - 2.0;
                b.values[i] = rng.random::<f64>() * 2.0 - 1.0;
                b.boot_values[i] = rng.random::<f64>() * 2.0 - 1.0;
                let u: f64 = rng.random();
                if u < 0.15 {
                    b.dones[i] = true;
                } else if u < 0.3 {
                    b.truncateds[i] = true;
                }
            }
            let gamma = rng.random::<f64>();
            let lambda = rng.random::<f64>();
            let last: Vec<f64> = (0..envs).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let want = brute_force_gae(&b, gamma, lambda, &last);
            compute_gae(&mut b, gamma, lambda, &last);
            for (got, want) in b.advantages.iter().zip(&want) {
                assert!((got - want).abs() < 1e-10, "{got} vs {want}");
            }
            // Returns are advantages plus values.
            for i in 0..b.len() {
                assert!((b.returns[i] - (b.advantages[i] + b.values[i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn envs_are_independent_under_permutation() {
        let mut rng = crate::rngstream::rng_from_seed(7);
        let envs = 4;
        let steps = 8;
        let mut b = empty_buffer(envs, steps);
        for i in 0..b.len() {
            b.rewards[i] = rng.random::<f64>();
            b.values[i] = rng.random::<f64>();
            if rng.random::<f64>() < 0.2 {
                b.truncateds[i] = true;
                b.boot_values[i] = rng.random::<f64>();
            }
        }
        let last: Vec<f64> = (0..envs).map(|_| rng.random::<f64>()).collect();
        let mut orig = b.clone();
        compute_gae(&mut orig, 0.99, 0.95, &last);

        // Swap envs 1 and 3 everywhere; outputs must swap identically.
        let perm = [0usize, 3, 2, 1];
        let mut permuted = b.clone();
        for t in 0..steps {
            for e in 0..envs {
                let src = b.index(perm[e], t);
                let dst = b.index(e, t);
                permuted.rewards[dst] = b.rewards[src];
                permuted.values[dst] = b.values[src];
                permuted.dones[dst] = b.dones[src];
                permuted.truncateds[dst] = b.truncateds[src];
                permuted.boot_values[dst] = b.boot_values[src];
            }
        }
        let last_p: Vec<f64> = perm.iter().map(|&e| last[e]).collect();
        compute_gae(&mut permuted, 0.99, 0.95, &last_p);
        for t in 0..steps {
            for e in 0..envs {
                assert_eq!(
                    permuted.advantages[permuted.index(e, t)],
                    orig.advantages[orig.index(perm[e], t)]
                );
            }
        }
    }
}
