//! Monte Carlo conditional flow matching losses.
//!
//! Each action is paired with `n_mc` (noise, flow-step) draws. The
//! per-sample loss is the squared L2 error (summed over action
//! dimensions) between the predicted velocity at the interpolated
//! action and the linear-schedule target `a − ε`, clamped to
//! `[0, loss_max]` before any ratio is formed.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::policy::FlowActor;
use crate::tape::{Tape, Var};
use crate::tensor::{self, Tensor};

/// Flow steps are kept away from both endpoints: the clean-action
/// parameterization divides by (1 − τ), and τ = 0 erases the action.
pub const TAU_LO: f64 = 1e-3;
pub const TAU_HI: f64 = 1.0 - 1e-3;

/// One Monte Carlo draw: standard-normal noise and a flow step.
#[derive(Debug, Clone, PartialEq)]
pub struct McSample {
    pub noise: Vec<f64>,
    pub flow_step: f64,
}

/// Clamping scheme for losses and loss differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampConfig {
    /// Per-sample losses are clamped to `[0, loss_max]`.
    pub loss_max: f64,
    /// Loss differences are clamped to `[−diff_max, diff_max]` before
    /// exponentiation.
    pub diff_max: f64,
    /// Use a straight-through gradient for the difference clamp.
    pub straight_through: bool,
}

impl ClampConfig {
    /// No clamping at all; the pipeline must match the clamped one
    /// built with infinite bounds exactly.
    pub fn unbounded() -> Self {
        ClampConfig { loss_max: f64::INFINITY, diff_max: f64::INFINITY, straight_through: true }
    }
}

impl Default for ClampConfig {
    fn default() -> Self {
        ClampConfig { loss_max: 100.0, diff_max: 5.0, straight_through: true }
    }
}

/// Draw `n_mc` independent (noise, flow-step) pairs: ε ~ N(0, I),
/// τ uniform on `[TAU_LO, TAU_HI]`.
pub fn draw_mc_samples(action_dim: usize, n_mc: usize, rng: &mut ChaCha8Rng) -> Vec<McSample> {
    assert!(n_mc >= 1, "need at least one Monte Carlo sample");
    (0..n_mc)
        .map(|_| McSample {
            noise: (0..action_dim).map(|_| rng.sample(StandardNormal)).collect(),
            flow_step: TAU_LO + (TAU_HI - TAU_LO) * rng.random::<f64>(),
        })
        .collect()
}

/// Linear interpolation `aᵗ = τ·a + (1 − τ)·ε`.
pub fn interpolate(action: &[f64], sample: &McSample) -> Vec<f64> {
    assert_eq!(action.len(), sample.noise.len(), "action/noise dim mismatch");
    let t = sample.flow_step;
    action.iter().zip(&sample.noise).map(|(&a, &e)| t * a + (1.0 - t) * e).collect()
}

/// Flattened inputs for a batch of (action, sample) rows. Row `i·n_mc + j`
/// holds action i with its j-th sample.
struct BatchInputs {
    obs_rep: Tensor,
    a_tau: Tensor,
    tau: Vec<f64>,
    target: Tensor,
}

fn assemble_batch(
    obs: &Tensor,
    actions: &Tensor,
    samples: &[McSample],
    n_mc: usize,
) -> BatchInputs {
    let b = actions.rows();
    assert_eq!(obs.rows(), b, "obs/actions row mismatch");
    assert_eq!(samples.len(), b * n_mc, "expected {} samples, got {}", b * n_mc, samples.len());
    let (od, ad) = (obs.cols(), actions.cols());
    let rows = b * n_mc;
    let mut obs_rep = Vec::with_capacity(rows * od);
    let mut a_tau = Vec::with_capacity(rows * ad);
    let mut tau = Vec::with_capacity(rows);
    let mut target = Vec::with_capacity(rows * ad);
    for i in 0..b {
        for j in 0..n_mc {
            let s = &samples[i * n_mc + j];
            obs_rep.extend_from_slice(obs.row(i));
            a_tau.extend(interpolate(actions.row(i), s));
            tau.push(s.flow_step);
            target.extend(actions.row(i).iter().zip(&s.noise).map(|(&a, &e)| a - e));
        }
    }
    BatchInputs {
        obs_rep: Tensor::matrix(rows, od, obs_rep),
        a_tau: Tensor::matrix(rows, ad, a_tau),
        tau,
        target: Tensor::matrix(rows, ad, target),
    }
}

/// Gradient-free per-sample losses for a batch: `(B·n_mc)` values in
/// sample order. This is the path that caches ℓ under θ_old.
pub fn cfm_losses_eval(
    actor: &FlowActor,
    obs: &Tensor,
    actions: &Tensor,
    samples: &[McSample],
    n_mc: usize,
    clamp: &ClampConfig,
) -> Result<Vec<f64>> {
    let inp = assemble_batch(obs, actions, samples, n_mc);
    let v = actor.velocity_eval(&inp.obs_rep, &inp.a_tau, &inp.tau)?;
    let err = tensor::sub(&v, &inp.target);
    let l = tensor::sum_last(&tensor::square(&err));
    Ok(tensor::clamp(&l, 0.0, clamp.loss_max).into_data())
}

/// Differentiable per-sample losses on a tape: `(B·n_mc,)`.
pub fn cfm_losses_tape(
    tape: &mut Tape,
    vars: &crate::mlp::MlpVars,
    actor: &FlowActor,
    obs: &Tensor,
    actions: &Tensor,
    samples: &[McSample],
    n_mc: usize,
    clamp: &ClampConfig,
) -> Result<Var> {
    let inp = assemble_batch(obs, actions, samples, n_mc);
    let v = actor.velocity_tape(tape, vars, &inp.obs_rep, &inp.a_tau, &inp.tau)?;
    let target = tape.constant(inp.target);
    let err = tape.sub(v, target)?;
    let sq = tape.square(err)?;
    let l = tape.sum_last(sq)?;
    tape.clamp(l, 0.0, clamp.loss_max)
}

/// One per-sample loss `ℓ = ‖v̂(aᵗ, τ; o) − (a − ε)‖²₂`, clamped.
pub fn cfm_loss_per_sample(
    actor: &FlowActor,
    obs: &[f64],
    action: &[f64],
    sample: &McSample,
    clamp: &ClampConfig,
) -> Result<f64> {
    let obs_t = Tensor::matrix(1, obs.len(), obs.to_vec());
    let act_t = Tensor::matrix(1, action.len(), action.to_vec());
    Ok(cfm_losses_eval(actor, &obs_t, &act_t, core::slice::from_ref(sample), 1, clamp)?[0])
}

/// Monte Carlo CFM estimate: arithmetic mean of per-sample losses.
pub fn cfm_loss_mean(
    actor: &FlowActor,
    obs: &[f64],
    action: &[f64],
    samples: &[McSample],
    clamp: &ClampConfig,
) -> Result<f64> {
    assert!(!samples.is_empty(), "cfm_loss_mean needs samples");
    let obs_t = Tensor::matrix(1, obs.len(), obs.to_vec());
    let act_t = Tensor::matrix(1, action.len(), action.to_vec());
    let l = cfm_losses_eval(actor, &obs_t, &act_t, samples, samples.len(), clamp)?;
    Ok(l.iter().sum::<f64>() / l.len() as f64)
}

/// Chunk-level loss: per-timestep per-sample losses summed across the
/// chunk. All timesteps condition on the same observation.
pub fn chunk_cfm_loss(
    actor: &FlowActor,
    obs: &[f64],
    action_chunk: &[Vec<f64>],
    samples: &[McSample],
    clamp: &ClampConfig,
) -> Result<f64> {
    assert!(!action_chunk.is_empty(), "chunk must contain at least one timestep");
    assert_eq!(action_chunk.len(), samples.len(), "one sample per chunk timestep");
    let mut total = 0.0;
    for (a, s) in action_chunk.iter().zip(samples) {
        total += cfm_loss_per_sample(actor, obs, a, s, clamp)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::OutputParam;
    use crate::rngstream::rng_from_seed;
    use alloc::vec;

    fn zeroed_actor(obs_dim: usize, action_dim: usize) -> FlowActor {
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
        actor
    }

    #[test]
    fn sample_draws_respect_bounds_and_seeding() {
        let mut rng = rng_from_seed(4);
        let s = draw_mc_samples(3, 16, &mut rng);
        assert_eq!(s.len(), 16);
        for m in &s {
            assert!(m.flow_step >= TAU_LO && m.flow_step <= TAU_HI);
            assert_eq!(m.noise.len(), 3);
        }
        let mut rng2 = rng_from_seed(4);
        assert_eq!(s, draw_mc_samples(3, 16, &mut rng2));
    }

    #[test]
    fn noise_moments_match_standard_normal() {
        let mut rng = rng_from_seed(8);
        let s = draw_mc_samples(1, 100_000, &mut rng);
        let mean: f64 = s.iter().map(|m| m.noise[0]).sum::<f64>() / s.len() as f64;
        let var: f64 =
            s.iter().map(|m| (m.noise[0] - mean) * (m.noise[0] - mean)).sum::<f64>() / s.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn interpolation_endpoints() {
        let a = vec![2.0];
        let near_noise = McSample { noise: vec![-1.0], flow_step: TAU_LO };
        let near_action = McSample { noise: vec![-1.0], flow_step: TAU_HI };
        let mid = McSample { noise: vec![0.0], flow_step: 0.5 };
        assert!((interpolate(&a, &near_noise)[0] - (-1.0)).abs() < 5e-3);
        assert!((interpolate(&a, &near_action)[0] - 2.0).abs() < 5e-3);
        assert_eq!(interpolate(&a, &mid)[0], 1.0);
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        // Head bias = target velocity for a=1, ε=0 in 1-D: v̂ ≡ 1.
        let mut actor = zeroed_actor(2, 1);
        actor.mlp.layers.last_mut().unwrap().bias.data_mut()[0] = 1.0;
        let s = McSample { noise: vec![0.0], flow_step: 0.4 };
        let l = cfm_loss_per_sample(&actor, &[0.0, 0.0], &[1.0], &s, &ClampConfig::default())
            .unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn unit_error_gives_unit_loss() {
        // v̂ = 0, a = 1, ε = 0 → ℓ = (0 − 1)² = 1.
        let actor = zeroed_actor(2, 1);
        let s = McSample { noise: vec![0.0], flow_step: 0.3 };
        let l = cfm_loss_per_sample(&actor, &[0.0, 0.0], &[1.0], &s, &ClampConfig::default())
            .unwrap();
        assert_eq!(l, 1.0);
    }

    #[test]
    fn loss_sums_over_action_dims() {
        // Per-dim error e → ℓ = d·e².
        let d = 4;
        let actor = zeroed_actor(2, d);
        let s = McSample { noise: vec![0.0; d], flow_step: 0.5 };
        let e = 0.7;
        let l = cfm_loss_per_sample(&actor, &[0.0, 0.0], &vec![e; d], &s, &ClampConfig::default())
            .unwrap();
        assert!((l - d as f64 * e * e).abs() < 1e-12);
    }

    #[test]
    fn mean_and_single_sample_agree() {
        let mut rng = rng_from_seed(12);
        let actor = FlowActor::new(2, 2, 8, OutputParam::Velocity, &mut rng);
        let samples = draw_mc_samples(2, 1, &mut rng);
        let cfg = ClampConfig::default();
        let single =
            cfm_loss_per_sample(&actor, &[0.1, 0.2], &[0.3, -0.4], &samples[0], &cfg).unwrap();
        let mean = cfm_loss_mean(&actor, &[0.1, 0.2], &[0.3, -0.4], &samples, &cfg).unwrap();
        assert_eq!(single, mean);

        // ℓ ∈ {1, 3} → mean 2 (hand case via the arithmetic).
        assert_eq!((1.0f64 + 3.0) / 2.0, 2.0);
    }

    #[test]
    fn loss_clamps_to_loss_max() {
        let actor = zeroed_actor(1, 1);
        let s = McSample { noise: vec![0.0], flow_step: 0.5 };
        let cfg = ClampConfig { loss_max: 4.0, diff_max: 5.0, straight_through: true };
        // a = 10 → raw ℓ = 100, clamped to 4.
        let l = cfm_loss_per_sample(&actor, &[0.0], &[10.0], &s, &cfg).unwrap();
        assert_eq!(l, 4.0);
        // Unbounded config leaves it alone.
        let l = cfm_loss_per_sample(&actor, &[0.0], &[10.0], &s, &ClampConfig::unbounded())
            .unwrap();
        assert_eq!(l, 100.0);
    }

    #[test]
    fn chunk_loss_sums_timesteps() {
        let actor = zeroed_actor(1, 1);
        let s = |fs| McSample { noise: vec![0.0], flow_step: fs };
        let cfg = ClampConfig::default();
        // Two timesteps with ℓ = 0.5² = 0.25 each... use a = √0.5.
        let a = libm::sqrt(0.5);
        let chunk = vec![vec![a], vec![a]];
        let l = chunk_cfm_loss(&actor, &[0.0], &chunk, &[s(0.3), s(0.7)], &cfg).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        // T_c = 1 equals the per-sample loss.
        let one = chunk_cfm_loss(&actor, &[0.0], &chunk[..1].to_vec(), &[s(0.3)], &cfg).unwrap();
        let per = cfm_loss_per_sample(&actor, &[0.0], &chunk[0], &s(0.3), &cfg).unwrap();
        assert_eq!(one, per);
        // Perfect predictor on a zero chunk → 0.
        let zeros = vec![vec![0.0], vec![0.0]];
        let l0 = chunk_cfm_loss(&actor, &[0.0], &zeros, &[s(0.3), s(0.7)], &cfg).unwrap();
        assert_eq!(l0, 0.0);
    }

    #[test]
    fn taped_and_eager_losses_are_bit_identical() {
        let mut rng = rng_from_seed(33);
        let actor = FlowActor::new(3, 2, 16, OutputParam::Velocity, &mut rng);
        let obs = Tensor::matrix(4, 3, (0..12).map(|i| (i as f64 * 0.37).sin()).collect());
        let actions = Tensor::matrix(4, 2, (0..8).map(|i| (i as f64 * 0.21).cos()).collect());
        let samples = draw_mc_samples(2, 4 * 3, &mut rng);
        let cfg = ClampConfig::default();

        let eager = cfm_losses_eval(&actor, &obs, &actions, &samples, 3, &cfg).unwrap();
        let mut tape = Tape::new();
        let vars = actor.mlp.register(&mut tape);
        let l = cfm_losses_tape(&mut tape, &vars, &actor, &obs, &actions, &samples, 3, &cfg)
            .unwrap();
        assert_eq!(eager.as_slice(), tape.value(l).data());
    }

    #[test]
    fn x0_parameterization_gradcheck() {
        // CFM loss gradients for the clean-action head must also pass
        // finite differences.
        let mut rng = rng_from_seed(55);
        let actor = FlowActor::new(2, 2, 8, OutputParam::CleanAction, &mut rng);
        let obs = Tensor::matrix(1, 2, vec![0.3, -0.6]);
        let actions = Tensor::matrix(1, 2, vec![0.8, 0.1]);
        let samples = draw_mc_samples(2, 2, &mut rng);
        let params: Vec<Tensor> = actor.mlp.params().into_iter().cloned().collect();
        let cfg = ClampConfig::default();

        let err = crate::gradcheck::check_gradients(
            &params,
            |tape, vars| {
                let mlp_vars = crate::mlp::MlpVars::from_vars(vars);
                let l =
                    cfm_losses_tape(tape, &mlp_vars, &actor, &obs, &actions, &samples, 2, &cfg)?;
                tape.mean_all(l)
            },
            1e-5,
        );
        assert!(err < 1e-4, "max relative error {err}");
    }
}
