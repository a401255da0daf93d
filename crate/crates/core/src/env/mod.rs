//! Vectorized toy continuous-control environments.
//!
//! Three environments, each built to surface one training phenomenon:
//! velocity tracking (`pointmass`), action-dimension coupling
//! (`correlated`), and bimodal goal seeking (`multigoal`). Envs carry
//! independent per-env RNG streams; stepping a batch is bit-equal to
//! stepping each env alone with the matching stream. There are no
//! failure terminations, only time-limit truncation with auto-reset.

pub mod expert;

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Simulation timestep in seconds.
pub const DT: f64 = 0.05;
/// Velocity damping rate (per second).
pub const DAMPING: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvId {
    PointMass,
    Correlated,
    MultiGoal,
}

impl EnvId {
    pub fn parse(name: &str) -> Option<EnvId> {
        match name {
            "pointmass" => Some(EnvId::PointMass),
            "correlated" => Some(EnvId::Correlated),
            "multigoal" => Some(EnvId::MultiGoal),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvId::PointMass => "pointmass",
            EnvId::Correlated => "correlated",
            EnvId::MultiGoal => "multigoal",
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            // (v, v_cmd, previous action)
            EnvId::PointMass => 6,
            // noise context
            EnvId::Correlated => 4,
            // (p, v, previous action)
            EnvId::MultiGoal => 6,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            EnvId::PointMass | EnvId::MultiGoal => 2,
            EnvId::Correlated => 4,
        }
    }

    pub fn episode_limit(&self) -> usize {
        match self {
            EnvId::PointMass => 200,
            EnvId::Correlated => 32,
            EnvId::MultiGoal => 100,
        }
    }
}

/// External-push perturbations: a random velocity kick applied every
/// 2–3 seconds of sim time when enabled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PushConfig {
    pub enabled: bool,
    /// Interval bounds in env steps (40–60 steps = 2–3 s at 50 ms).
    pub min_interval: usize,
    pub max_interval: usize,
    /// Kick components are uniform on `[−max_kick, max_kick]`.
    pub max_kick: f64,
}

impl Default for PushConfig {
    fn default() -> Self {
        PushConfig { enabled: false, min_interval: 40, max_interval: 60, max_kick: 0.5 }
    }
}

impl PushConfig {
    pub fn enabled() -> Self {
        PushConfig { enabled: true, ..Default::default() }
    }
}

/// Result of stepping a batch. `obs` holds the observations to act on
/// next (post auto-reset); `final_obs` carries the pre-reset
/// observation of any env that ended this step, for value
/// bootstrapping.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub obs: Tensor,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub truncateds: Vec<bool>,
    pub final_obs: Vec<Option<Vec<f64>>>,
}

/// Batch of `E` independent environment instances.
#[derive(Debug, Clone)]
pub struct EnvBatch {
    pub id: EnvId,
    num_envs: usize,
    push: PushConfig,
    pos: Vec<[f64; 2]>,
    vel: Vec<[f64; 2]>,
    cmd: Vec<[f64; 2]>,
    prev_action: Vec<Vec<f64>>,
    ctx: Vec<Vec<f64>>,
    step_count: Vec<usize>,
    next_push: Vec<usize>,
    rngs: Vec<ChaCha8Rng>,
}

impl EnvBatch {
    pub fn new(id: EnvId, num_envs: usize, push: PushConfig) -> Self {
        assert!(num_envs >= 1, "need at least one env");
        let ad = id.action_dim();
        EnvBatch {
            id,
            num_envs,
            push,
            pos: vec![[0.0; 2]; num_envs],
            vel: vec![[0.0; 2]; num_envs],
            cmd: vec![[0.0; 2]; num_envs],
            prev_action: vec![vec![0.0; ad]; num_envs],
            ctx: vec![vec![0.0; id.obs_dim()]; num_envs],
            step_count: vec![0; num_envs],
            next_push: vec![usize::MAX; num_envs],
            rngs: (0..num_envs).map(|_| ChaCha8Rng::seed_from_u64(0)).collect(),
        }
    }

    pub fn num_envs(&self) -> usize {
        self.num_envs
    }

    pub fn obs_dim(&self) -> usize {
        self.id.obs_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.id.action_dim()
    }

    /// Seed env `e` with `seed ⊕ e` and return initial observations.
    pub fn reset(&mut self, seed: u64) -> Tensor {
        for e in 0..self.num_envs {
            self.rngs[e] = ChaCha8Rng::seed_from_u64(seed ^ e as u64);
            self.reset_env(e);
        }
        self.observe_all()
    }

    fn reset_env(&mut self, e: usize) {
        self.step_count[e] = 0;
        self.pos[e] = [0.0; 2];
        self.vel[e] = [0.0; 2];
        for v in self.prev_action[e].iter_mut() {
            *v = 0.0;
        }
        match self.id {
            EnvId::PointMass => {
                self.cmd[e] = [
                    self.rngs[e].random::<f64>() * 2.0 - 1.0,
                    self.rngs[e].random::<f64>() * 2.0 - 1.0,
                ];
            }
            EnvId::Correlated => self.resample_ctx(e),
            EnvId::MultiGoal => {}
        }
        self.schedule_push(e);
    }

    fn schedule_push(&mut self, e: usize) {
        if self.push.enabled && matches!(self.id, EnvId::PointMass | EnvId::MultiGoal) {
            let span = self.push.max_interval - self.push.min_interval + 1;
            self.next_push[e] =
                self.step_count[e] + self.push.min_interval + self.rngs[e].random_range(0..span);
        } else {
            self.next_push[e] = usize::MAX;
        }
    }

    fn resample_ctx(&mut self, e: usize) {
        for v in self.ctx[e].iter_mut() {
            let z: f64 = self.rngs[e].sample(StandardNormal);
            *v = 0.1 * z;
        }
    }

    fn observe(&self, e: usize) -> Vec<f64> {
        match self.id {
            EnvId::PointMass => {
                let mut o = Vec::with_capacity(6);
                o.extend_from_slice(&self.vel[e]);
                o.extend_from_slice(&self.cmd[e]);
                o.extend_from_slice(&self.prev_action[e]);
                o
            }
            EnvId::Correlated => self.ctx[e].clone(),
            EnvId::MultiGoal => {
                let mut o = Vec::with_capacity(6);
                o.extend_from_slice(&self.pos[e]);
                o.extend_from_slice(&self.vel[e]);
                o.extend_from_slice(&self.prev_action[e]);
                o
            }
        }
    }

    fn observe_all(&self) -> Tensor {
        let d = self.obs_dim();
        let mut data = Vec::with_capacity(self.num_envs * d);
        for e in 0..self.num_envs {
            data.extend(self.observe(e));
        }
        Tensor::matrix(self.num_envs, d, data)
    }

    /// One dynamics step per env. Actions outside `[-1, 1]` are clipped
    /// before use (point-mass accelerations); rewards use the applied
    /// action.
    pub fn step(&mut self, actions: &Tensor) -> Result<StepOutput> {
        assert_eq!(actions.rows(), self.num_envs, "one action row per env");
        assert_eq!(actions.cols(), self.action_dim(), "action dim mismatch");
        if !actions.is_finite() {
            return Err(Error::Contract(alloc::format!(
                "non-finite action passed to env `{}`",
                self.id.name()
            )));
        }

        let mut rewards = vec![0.0; self.num_envs];
        let mut truncateds = vec![false; self.num_envs];
        let dones = vec![false; self.num_envs];
        let mut final_obs: Vec<Option<Vec<f64>>> = vec![None; self.num_envs];

        for e in 0..self.num_envs {
            let action = actions.row(e);
            rewards[e] = match self.id {
                EnvId::PointMass => self.step_point_mass(e, action, true),
                EnvId::MultiGoal => self.step_point_mass(e, action, false),
                EnvId::Correlated => self.step_correlated(e, action),
            };
            self.step_count[e] += 1;
            if self.step_count[e] >= self.id.episode_limit() {
                truncateds[e] = true;
                final_obs[e] = Some(self.observe(e));
                self.reset_env(e);
            }
        }
        Ok(StepOutput { obs: self.observe_all(), rewards, dones, truncateds, final_obs })
    }

    fn step_point_mass(&mut self, e: usize, action: &[f64], velocity_task: bool) -> f64 {
        let a = [action[0].max(-1.0).min(1.0), action[1].max(-1.0).min(1.0)];

        if self.step_count[e] == self.next_push[e] {
            for v in self.vel[e].iter_mut() {
                *v += self.push.max_kick * (self.rngs[e].random::<f64>() * 2.0 - 1.0);
            }
            self.schedule_push(e);
        }

        for i in 0..2 {
            self.vel[e][i] = self.vel[e][i] * (1.0 - DAMPING * DT) + a[i] * DT;
            self.pos[e][i] += self.vel[e][i] * DT;
        }

        let rate: f64 = a
            .iter()
            .zip(&self.prev_action[e])
            .map(|(x, p)| (x - p) * (x - p))
            .sum();

        let reward = if velocity_task {
            let err: f64 = self.vel[e]
                .iter()
                .zip(&self.cmd[e])
                .map(|(v, c)| (v - c) * (v - c))
                .sum();
            libm::exp(-err / 0.25) - 0.05 * rate
        } else {
            let d = |g: [f64; 2]| {
                let dx = self.pos[e][0] - g[0];
                let dy = self.pos[e][1] - g[1];
                dx * dx + dy * dy
            };
            libm::exp(-d([1.0, 1.0]) / 0.1) + libm::exp(-d([1.0, -1.0]) / 0.1)
        };
        self.prev_action[e].copy_from_slice(&a);
        reward
    }

    fn step_correlated(&mut self, e: usize, a: &[f64]) -> f64 {
        let coupling = (a[0] - a[1]) * (a[0] - a[1]) + (a[2] + a[3]) * (a[2] + a[3]);
        let norm_sq: f64 = a.iter().map(|x| x * x).sum();
        let reward = libm::exp(-coupling / 0.1) - 0.01 * norm_sq;
        self.resample_ctx(e);
        reward
    }

    // Direct state access for tests and analysis tools.
    pub fn state(&self, e: usize) -> ([f64; 2], [f64; 2], [f64; 2]) {
        (self.pos[e], self.vel[e], self.cmd[e])
    }

    pub fn set_state(&mut self, e: usize, pos: [f64; 2], vel: [f64; 2], prev_action: &[f64]) {
        self.pos[e] = pos;
        self.vel[e] = vel;
        self.prev_action[e].copy_from_slice(prev_action);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_deterministic_and_in_bounds() {
        let mut a = EnvBatch::new(EnvId::PointMass, 8, PushConfig::default());
        let mut b = EnvBatch::new(EnvId::PointMass, 8, PushConfig::default());
        let oa = a.reset(42);
        let ob = b.reset(42);
        assert_eq!(oa.data(), ob.data());
        assert_eq!(oa.rows(), 8);
        for e in 0..8 {
            let (p, v, cmd) = a.state(e);
            assert_eq!(p, [0.0; 2]);
            assert_eq!(v, [0.0; 2]);
            assert!(cmd.iter().all(|c| (-1.0..=1.0).contains(c)));
        }
    }

    #[test]
    fn trajectories_replay_exactly_under_equal_seeds() {
        let run = |seed| {
            let mut env = EnvBatch::new(EnvId::MultiGoal, 4, PushConfig::enabled());
            let mut obs = env.reset(seed);
            let mut log = Vec::new();
            for t in 0..250 {
                let actions = Tensor::matrix(
                    4,
                    2,
                    (0..8).map(|i| ((t * 13 + i * 7) as f64 * 0.37).sin()).collect(),
                );
                let out = env.step(&actions).unwrap();
                log.extend(out.rewards.iter().copied());
                log.extend(out.obs.data().iter().copied());
                obs = out.obs;
            }
            let _ = obs;
            log
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn batch_equals_singletons() {
        let seed = 31u64;
        let e_count = 3;
        let mut batch = EnvBatch::new(EnvId::PointMass, e_count, PushConfig::enabled());
        batch.reset(seed);
        let mut singles: Vec<EnvBatch> = (0..e_count)
            .map(|e| {
                let mut s = EnvBatch::new(EnvId::PointMass, 1, PushConfig::enabled());
                s.reset(seed ^ e as u64);
                s
            })
            .collect();

        for t in 0..450 {
            let actions = Tensor::matrix(
                e_count,
                2,
                (0..e_count * 2).map(|i| ((t + i * 31) as f64 * 0.11).cos()).collect(),
            );
            let out = batch.step(&actions).unwrap();
            for (e, s) in singles.iter_mut().enumerate() {
                let single_out =
                    s.step(&Tensor::matrix(1, 2, actions.row(e).to_vec())).unwrap();
                assert_eq!(single_out.rewards[0], out.rewards[e], "t={t} e={e}");
                assert_eq!(single_out.obs.data(), out.obs.row(e));
                assert_eq!(single_out.truncateds[0], out.truncateds[e]);
            }
        }
    }

    #[test]
    fn exact_tracking_with_steady_action_gives_reward_one() {
        // v = v_cmd is sustained exactly by a = β·v_cmd; with
        // a_t = a_{t−1} the action-rate penalty vanishes.
        let mut env = EnvBatch::new(EnvId::PointMass, 1, PushConfig::default());
        env.reset(3);
        let (_, _, cmd) = env.state(0);
        let steady = [DAMPING * cmd[0], DAMPING * cmd[1]];
        env.set_state(0, [0.0; 2], cmd, &steady);
        let out = env.step(&Tensor::matrix(1, 2, steady.to_vec())).unwrap();
        assert!((out.rewards[0] - 1.0).abs() < 1e-12, "reward {}", out.rewards[0]);
    }

    #[test]
    fn quarter_error_gives_reward_exp_minus_one() {
        // Post-step ‖v − v_cmd‖² = 0.25 with zero action rate.
        let mut env = EnvBatch::new(EnvId::PointMass, 1, PushConfig::default());
        env.reset(3);
        let k = 1.0 - DAMPING * DT;
        // zero command: pick v so that v·k = (0.5, 0).
        env.cmd[0] = [0.0, 0.0];
        env.set_state(0, [0.0; 2], [0.5 / k, 0.0], &[0.0, 0.0]);
        let out = env.step(&Tensor::matrix(1, 2, vec![0.0, 0.0])).unwrap();
        assert!((out.rewards[0] - libm::exp(-1.0)).abs() < 1e-9, "reward {}", out.rewards[0]);
    }

    #[test]
    fn pointmass_reward_upper_bound_holds() {
        let mut env = EnvBatch::new(EnvId::PointMass, 4, PushConfig::enabled());
        env.reset(5);
        let mut rng = crate::rngstream::rng_from_seed(6);
        for _ in 0..500 {
            let actions = Tensor::matrix(
                4,
                2,
                (0..8).map(|_| rng.random::<f64>() * 6.0 - 3.0).collect(),
            );
            let out = env.step(&actions).unwrap();
            for r in out.rewards {
                assert!(r <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn correlated_on_subspace_reward_near_one() {
        let mut env = EnvBatch::new(EnvId::Correlated, 1, PushConfig::default());
        env.reset(1);
        let a = vec![0.01, 0.01, -0.02, 0.02];
        let out = env.step(&Tensor::matrix(1, 4, a.clone())).unwrap();
        let norm_sq: f64 = a.iter().map(|x| x * x).sum();
        assert!((out.rewards[0] - (1.0 - 0.01 * norm_sq)).abs() < 1e-12);
        assert!(out.rewards[0] <= 1.0);
    }

    #[test]
    fn correlated_episode_truncates_at_limit() {
        let mut env = EnvBatch::new(EnvId::Correlated, 1, PushConfig::default());
        env.reset(1);
        for t in 0..32 {
            let out = env.step(&Tensor::matrix(1, 4, vec![0.0; 4])).unwrap();
            assert_eq!(out.truncateds[0], t == 31);
            assert!(out.dones.iter().all(|d| !d));
            if t == 31 {
                assert!(out.final_obs[0].is_some());
            }
        }
    }

    #[test]
    fn multigoal_reward_field_bounded_on_grid() {
        // Reward depends on position only; sweep p over [−2, 2]².
        let mut env = EnvBatch::new(EnvId::MultiGoal, 1, PushConfig::default());
        env.reset(1);
        let mut max_r: f64 = 0.0;
        for i in 0..=200 {
            for j in 0..=200 {
                let p = [-2.0 + 0.02 * i as f64, -2.0 + 0.02 * j as f64];
                env.set_state(0, p, [0.0; 2], &[0.0, 0.0]);
                env.step_count[0] = 0;
                let out = env.step(&Tensor::matrix(1, 2, vec![0.0, 0.0])).unwrap();
                max_r = max_r.max(out.rewards[0]);
            }
        }
        assert!(max_r <= 1.1, "grid max {max_r}");
        assert!(max_r > 0.9, "grid max {max_r} suspiciously low");
    }

    #[test]
    fn multigoal_symmetric_under_y_mirror() {
        let mut a = EnvBatch::new(EnvId::MultiGoal, 1, PushConfig::default());
        let mut b = EnvBatch::new(EnvId::MultiGoal, 1, PushConfig::default());
        a.reset(2);
        b.reset(2);
        a.set_state(0, [0.3, 0.4], [0.1, -0.2], &[0.05, 0.3]);
        b.set_state(0, [0.3, -0.4], [0.1, 0.2], &[0.05, -0.3]);
        let oa = a.step(&Tensor::matrix(1, 2, vec![0.7, 0.2])).unwrap();
        let ob = b.step(&Tensor::matrix(1, 2, vec![0.7, -0.2])).unwrap();
        assert!((oa.rewards[0] - ob.rewards[0]).abs() < 1e-14);
        let (pa, va, _) = a.state(0);
        let (pb, vb, _) = b.state(0);
        assert_eq!(pa[0], pb[0]);
        assert_eq!(pa[1], -pb[1]);
        assert_eq!(va[0], vb[0]);
        assert_eq!(va[1], -vb[1]);
    }

    #[test]
    fn non_finite_action_is_a_contract_violation() {
        let mut env = EnvBatch::new(EnvId::PointMass, 1, PushConfig::default());
        env.reset(0);
        let err = env.step(&Tensor::matrix(1, 2, vec![f64::NAN, 0.0])).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }
}
