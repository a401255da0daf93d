//! Actors and critic: the flow-matching velocity network with its Euler
//! sampler, and the diagonal-Gaussian baseline.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math;
use crate::mlp::{Mlp, MlpVars};
use crate::tape::{Tape, Var};
use crate::tensor::{self, Tensor};

/// What the network head predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputParam {
    /// The interpolation velocity `a − ε` directly.
    Velocity,
    /// The clean action; velocity is recovered as `(x̂₀ − aᵗ) / (1 − τ)`.
    CleanAction,
}

/// How flow integration is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleInit {
    /// `a⁰ ~ N(0, I)`: stochastic rollouts for exploration.
    Random,
    /// `a⁰ = 0`: deterministic sampling for evaluation and deployment.
    Zero,
}

/// Velocity-field actor. Input is `concat(obs, aᵗ, τ)` with τ fed as a
/// raw scalar; output has action dimensionality.
#[derive(Debug, Clone)]
pub struct FlowActor {
    pub mlp: Mlp,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub output: OutputParam,
}

impl FlowActor {
    pub fn new(
        obs_dim: usize,
        action_dim: usize,
        hidden: usize,
        output: OutputParam,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let dims = [obs_dim + action_dim + 1, hidden, hidden, action_dim];
        FlowActor { mlp: Mlp::new(&dims, 0.01, rng), obs_dim, action_dim, output }
    }

    /// Assemble the network input `[obs | aᵗ | τ]` row-wise.
    fn assemble_input(&self, obs: &Tensor, a_tau: &Tensor, tau: &[f64]) -> Tensor {
        let rows = obs.rows();
        assert_eq!(a_tau.rows(), rows, "obs/a_tau row mismatch");
        assert_eq!(tau.len(), rows, "obs/tau row mismatch");
        assert_eq!(obs.cols(), self.obs_dim, "obs dim mismatch");
        assert_eq!(a_tau.cols(), self.action_dim, "action dim mismatch");
        let cols = self.obs_dim + self.action_dim + 1;
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            data.extend_from_slice(obs.row(r));
            data.extend_from_slice(a_tau.row(r));
            data.push(tau[r]);
        }
        Tensor::matrix(rows, cols, data)
    }

    /// Per-row factors 1/(1 − τ) expanded over action dims, for the
    /// clean-action parameterization. τ must stay below 1.
    fn recovery_factors(&self, tau: &[f64]) -> Tensor {
        let mut data = Vec::with_capacity(tau.len() * self.action_dim);
        for &t in tau {
            assert!(t < 1.0, "clean-action recovery needs τ < 1, got {t}");
            let f = 1.0 / (1.0 - t);
            for _ in 0..self.action_dim {
                data.push(f);
            }
        }
        Tensor::matrix(tau.len(), self.action_dim, data)
    }

    /// Velocity prediction without gradients: (rows, action_dim).
    pub fn velocity_eval(&self, obs: &Tensor, a_tau: &Tensor, tau: &[f64]) -> Result<Tensor> {
        let input = self.assemble_input(obs, a_tau, tau);
        let head = self.mlp.forward_eval(&input);
        let v = match self.output {
            OutputParam::Velocity => head,
            OutputParam::CleanAction => {
                tensor::mul(&tensor::sub(&head, a_tau), &self.recovery_factors(tau))
            }
        };
        if !v.is_finite() {
            return Err(Error::NumericFault { op: "velocity_eval" });
        }
        Ok(v)
    }

    /// Velocity prediction on a tape, for registered parameters.
    pub fn velocity_tape(
        &self,
        tape: &mut Tape,
        vars: &MlpVars,
        obs: &Tensor,
        a_tau: &Tensor,
        tau: &[f64],
    ) -> Result<Var> {
        let input = tape.constant(self.assemble_input(obs, a_tau, tau));
        let head = self.mlp.forward(tape, vars, input)?;
        match self.output {
            OutputParam::Velocity => Ok(head),
            OutputParam::CleanAction => {
                let atc = tape.constant(a_tau.clone());
                let diff = tape.sub(head, atc)?;
                let inv = tape.constant(self.recovery_factors(tau));
                tape.mul(diff, inv)
            }
        }
    }

    /// Euler-integrate the flow field over `steps` uniform steps.
    ///
    /// `a⁰` is standard normal (`Random`, needs `rng`) or the zero
    /// vector (`Zero`, a pure function of parameters, obs, and step
    /// count). No gradient tape is involved.
    pub fn sample(
        &self,
        obs: &Tensor,
        init: SampleInit,
        steps: usize,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Tensor> {
        assert!(steps >= 1, "flow sampling needs at least one step");
        let rows = obs.rows();
        let mut action = match init {
            SampleInit::Zero => Tensor::zeros(vec![rows, self.action_dim]),
            SampleInit::Random => {
                let rng = rng.as_deref_mut().expect("random init requires an rng");
                let data =
                    (0..rows * self.action_dim).map(|_| rng.sample(StandardNormal)).collect();
                Tensor::matrix(rows, self.action_dim, data)
            }
        };
        let dt = 1.0 / steps as f64;
        for k in 0..steps {
            let tau = vec![k as f64 * dt; rows];
            let v = self.velocity_eval(obs, &action, &tau)?;
            action = tensor::add(&action, &tensor::scale(&v, dt));
            if !action.is_finite() {
                return Err(Error::NumericFault { op: "flow_sample" });
            }
        }
        Ok(action)
    }
}

/// Diagonal-Gaussian actor: MLP mean head plus a state-independent
/// learnable log-std per action dimension.
#[derive(Debug, Clone)]
pub struct GaussianActor {
    pub mean: Mlp,
    pub log_std: Tensor,
    pub obs_dim: usize,
    pub action_dim: usize,
}

impl GaussianActor {
    pub fn new(obs_dim: usize, action_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let dims = [obs_dim, hidden, hidden, action_dim];
        GaussianActor {
            mean: Mlp::new(&dims, 0.01, rng),
            log_std: Tensor::zeros(vec![action_dim]),
            obs_dim,
            action_dim,
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = self.mean.params();
        p.push(&self.log_std);
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.mean.params_mut();
        p.push(&mut self.log_std);
        p
    }

    /// Draw actions and return their log-likelihoods.
    pub fn sample(&self, obs: &Tensor, rng: &mut ChaCha8Rng) -> Result<(Tensor, Vec<f64>)> {
        let mu = self.mean.forward_eval(obs);
        let rows = obs.rows();
        let d = self.action_dim;
        let mut actions = Tensor::zeros(vec![rows, d]);
        for r in 0..rows {
            for c in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                let std = math::exp(self.log_std.data()[c]);
                actions.data_mut()[r * d + c] = mu.data()[r * d + c] + std * z;
            }
        }
        if !actions.is_finite() {
            return Err(Error::NumericFault { op: "gaussian_sample" });
        }
        let ll = self.log_likelihood_given_mean(&mu, &actions);
        Ok((actions, ll))
    }

    /// Diagonal-Gaussian log density of `actions` under the current
    /// parameters, one value per row.
    pub fn log_likelihood(&self, obs: &Tensor, actions: &Tensor) -> Vec<f64> {
        let mu = self.mean.forward_eval(obs);
        self.log_likelihood_given_mean(&mu, actions)
    }

    fn log_likelihood_given_mean(&self, mu: &Tensor, actions: &Tensor) -> Vec<f64> {
        let rows = actions.rows();
        let d = self.action_dim;
        let mut out = Vec::with_capacity(rows);
        for r in 0..rows {
            let mut ll = 0.0;
            for c in 0..d {
                let ls = self.log_std.data()[c];
                let std = math::exp(ls);
                let z = (actions.data()[r * d + c] - mu.data()[r * d + c]) / std;
                ll += -0.5 * math::LN_2PI - ls - 0.5 * z * z;
            }
            out.push(ll);
        }
        out
    }

    /// Taped log-likelihood of fixed actions: (rows,) plus the log-std
    /// var (for entropy bonuses).
    pub fn log_likelihood_tape(
        &self,
        tape: &mut Tape,
        mean_vars: &MlpVars,
        log_std_var: Var,
        obs: &Tensor,
        actions: &Tensor,
    ) -> Result<Var> {
        let rows = obs.rows();
        let d = self.action_dim;
        let obs_c = tape.constant(obs.clone());
        let mu = self.mean.forward(tape, mean_vars, obs_c)?;
        let act_c = tape.constant(actions.clone());
        let diff = tape.sub(act_c, mu)?;
        let sq = tape.square(diff)?;
        // inv_var = exp(−2 log_std), broadcast across rows.
        let neg2 = tape.scale(log_std_var, -2.0)?;
        let inv_var = tape.exp(neg2)?;
        let weighted = tape.mul_row(sq, inv_var)?;
        let quad = tape.sum_last(weighted)?;
        let quad = tape.scale(quad, -0.5)?;
        // − Σ log_std − d/2 · ln 2π, identical for every row.
        let ls_sum = tape.sum_all(log_std_var)?;
        let neg_ls_sum = tape.scale(ls_sum, -1.0)?;
        let shifted = tape.add_broadcast(quad, neg_ls_sum)?;
        let out = tape.add_scalar(shifted, -0.5 * math::LN_2PI * d as f64)?;
        debug_assert_eq!(tape.value(out).numel(), rows);
        Ok(out)
    }
}

/// Value network: observation in, scalar out.
#[derive(Debug, Clone)]
pub struct Critic {
    pub mlp: Mlp,
}

impl Critic {
    pub fn new(obs_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Critic { mlp: Mlp::new(&[obs_dim, hidden, hidden, 1], 1.0, rng) }
    }

    /// Values for a batch of observations, order-preserving.
    pub fn value(&self, obs: &Tensor) -> Result<Vec<f64>> {
        let out = self.mlp.forward_eval(obs);
        if !out.is_finite() {
            return Err(Error::NumericFault { op: "critic_value" });
        }
        Ok(out.into_data())
    }

    /// Taped values: (rows,).
    pub fn value_tape(&self, tape: &mut Tape, vars: &MlpVars, obs: &Tensor) -> Result<Var> {
        let obs_c = tape.constant(obs.clone());
        let v = self.mlp.forward(tape, vars, obs_c)?;
        let rows = obs.rows();
        tape.reshape(v, vec![rows])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngstream::rng_from_seed;

    fn const_field_actor(obs_dim: usize, action_dim: usize, c: f64) -> FlowActor {
        // Zero all weights, set the final bias to c: v̂ ≡ c everywhere.
        let mut rng = rng_from_seed(0);
        let mut actor = FlowActor::new(obs_dim, action_dim, 8, OutputParam::Velocity, &mut rng);
        for l in actor.mlp.layers.iter_mut() {
            for v in l.weight.data_mut() {
                *v = 0.0;
            }
            for v in l.bias.data_mut() {
                *v = 0.0;
            }
        }
        for v in actor.mlp.layers.last_mut().unwrap().bias.data_mut() {
            *v = c;
        }
        actor
    }

    #[test]
    fn zero_field_preserves_init() {
        let actor = const_field_actor(3, 2, 0.0);
        let obs = Tensor::matrix(2, 3, alloc::vec![0.1; 6]);
        for steps in [1, 5, 64] {
            let a = actor.sample(&obs, SampleInit::Zero, steps, None).unwrap();
            assert_eq!(a.data(), &[0.0; 4]);
        }
        let mut rng = rng_from_seed(3);
        let a1 = actor.sample(&obs, SampleInit::Random, 7, Some(&mut rng)).unwrap();
        let mut rng = rng_from_seed(3);
        let noise: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
        assert_eq!(a1.data(), &noise[..]);
    }

    #[test]
    fn constant_field_is_integrated_exactly() {
        // Euler is exact for constant fields over the unit interval.
        let actor = const_field_actor(3, 2, 1.7);
        let obs = Tensor::matrix(1, 3, alloc::vec![0.0; 3]);
        for steps in [1, 3, 64] {
            let a = actor.sample(&obs, SampleInit::Zero, steps, None).unwrap();
            for v in a.data() {
                assert!((v - 1.7).abs() < 1e-12, "steps={steps}: {v}");
            }
        }
    }

    #[test]
    fn zero_sampling_is_deterministic() {
        let mut rng = rng_from_seed(17);
        let actor = FlowActor::new(4, 2, 16, OutputParam::Velocity, &mut rng);
        let obs = Tensor::matrix(2, 4, (0..8).map(|i| i as f64 * 0.1).collect());
        let a = actor.sample(&obs, SampleInit::Zero, 8, None).unwrap();
        let b = actor.sample(&obs, SampleInit::Zero, 8, None).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn clean_action_parameterization_recovers_velocity() {
        let mut rng = rng_from_seed(23);
        let mut actor = FlowActor::new(2, 2, 16, OutputParam::CleanAction, &mut rng);
        // Give the head a visible output.
        for v in actor.mlp.layers.last_mut().unwrap().bias.data_mut() {
            *v = 0.5;
        }
        let obs = Tensor::matrix(1, 2, alloc::vec![0.2, -0.1]);
        let a_tau = Tensor::matrix(1, 2, alloc::vec![0.3, 0.4]);
        let tau = [0.75];
        let v = actor.velocity_eval(&obs, &a_tau, &tau).unwrap();

        let mut head_actor = actor.clone();
        head_actor.output = OutputParam::Velocity;
        let head = head_actor.velocity_eval(&obs, &a_tau, &tau).unwrap();
        for c in 0..2 {
            let want = (head.data()[c] - a_tau.data()[c]) / (1.0 - tau[0]);
            assert!((v.data()[c] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn gaussian_log_likelihood_hand_values() {
        let mut rng = rng_from_seed(1);
        let mut actor = GaussianActor::new(2, 1, 8, &mut rng);
        // Zero mean head, log_std = 0 → standard normal.
        for l in actor.mean.layers.iter_mut() {
            for v in l.weight.data_mut() {
                *v = 0.0;
            }
            for v in l.bias.data_mut() {
                *v = 0.0;
            }
        }
        let obs = Tensor::matrix(1, 2, alloc::vec![0.0, 0.0]);
        let ll = actor.log_likelihood(&obs, &Tensor::matrix(1, 1, alloc::vec![0.0]));
        assert!((ll[0] - (-0.5 * math::LN_2PI)).abs() < 1e-12);

        // Independent dims add.
        let mut actor2 = GaussianActor::new(2, 2, 8, &mut rng);
        for l in actor2.mean.layers.iter_mut() {
            for v in l.weight.data_mut() {
                *v = 0.0;
            }
            for v in l.bias.data_mut() {
                *v = 0.0;
            }
        }
        let ll2 = actor2.log_likelihood(&obs, &Tensor::matrix(1, 2, alloc::vec![0.3, -0.7]));
        let per_dim = |x: f64| -0.5 * math::LN_2PI - 0.5 * x * x;
        assert!((ll2[0] - (per_dim(0.3) + per_dim(-0.7))).abs() < 1e-12);
    }

    #[test]
    fn gaussian_brute_force_density_matches() {
        // Explicit density formula evaluated independently.
        let mut rng = rng_from_seed(77);
        let actor = GaussianActor::new(3, 2, 8, &mut rng);
        let obs = Tensor::matrix(1, 3, alloc::vec![0.4, -0.2, 0.9]);
        let (a, ll) = {
            let mut srng = rng_from_seed(5);
            actor.sample(&obs, &mut srng).unwrap()
        };
        let mu = actor.mean.forward_eval(&obs);
        let mut want = 0.0;
        for c in 0..2 {
            let std = math::exp(actor.log_std.data()[c]);
            let z = (a.data()[c] - mu.data()[c]) / std;
            want += math::ln(1.0 / (math::sqrt(2.0 * core::f64::consts::PI) * std))
                - 0.5 * z * z;
        }
        assert!((ll[0] - want).abs() < 1e-12);
    }

    #[test]
    fn taped_log_likelihood_matches_eager() {
        let mut rng = rng_from_seed(31);
        let mut actor = GaussianActor::new(3, 2, 8, &mut rng);
        actor.log_std.data_mut()[0] = 0.3;
        actor.log_std.data_mut()[1] = -0.2;
        let obs = Tensor::matrix(4, 3, (0..12).map(|i| (i as f64).sin()).collect());
        let actions = Tensor::matrix(4, 2, (0..8).map(|i| (i as f64).cos()).collect());
        let eager = actor.log_likelihood(&obs, &actions);

        let mut tape = Tape::new();
        let mean_vars = actor.mean.register(&mut tape);
        let ls = tape.param(&actor.log_std);
        let ll = actor
            .log_likelihood_tape(&mut tape, &mean_vars, ls, &obs, &actions)
            .unwrap();
        for (e, t) in eager.iter().zip(tape.value(ll).data()) {
            assert!((e - t).abs() < 1e-12);
        }
    }

    #[test]
    fn critic_batch_values_are_order_preserving() {
        let mut rng = rng_from_seed(41);
        let critic = Critic::new(3, 16, &mut rng);
        let obs = Tensor::matrix(5, 3, (0..15).map(|i| i as f64 * 0.2 - 1.0).collect());
        let batch = critic.value(&obs).unwrap();
        for r in 0..5 {
            let single = critic.value(&Tensor::matrix(1, 3, obs.row(r).to_vec())).unwrap();
            assert_eq!(batch[r], single[0]);
        }
    }
}
