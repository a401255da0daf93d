//! Behavior-cloning pretraining: supervised CFM minimization over
//! demonstration (observation, action) pairs, with fresh Monte Carlo
//! samples every batch.

use rand::seq::SliceRandom;

use fpopp_core::cfm;
use fpopp_core::env::expert::DemoSet;
use fpopp_core::normalizer::ObsNormalizer;
use fpopp_core::optim::{clip_grad_norm, OptimizerState};
use fpopp_core::policy::FlowActor;
use fpopp_core::rngstream::{derive, Role};
use fpopp_core::tape::Tape;
use fpopp_core::tensor::Tensor;

use crate::error::{Result, RunError};

pub struct BcOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub n_mc: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for BcOptions {
    fn default() -> Self {
        BcOptions { epochs: 40, learning_rate: 1e-3, n_mc: 4, batch_size: 256, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct BcStats {
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// CFM loss on the held-out episodes, fixed samples.
    pub holdout_loss: f64,
}

/// Fit the normalizer to the demo observations (then frozen) and train
/// the actor by supervised CFM regression. Roughly the last tenth of
/// the episodes are held out for the reported loss.
pub fn pretrain_bc(
    actor: &mut FlowActor,
    normalizer: &mut ObsNormalizer,
    demos: &DemoSet,
    opts: &BcOptions,
) -> Result<BcStats> {
    if demos.episodes.is_empty() {
        return Err(RunError::usage("demo set has no episodes"));
    }
    if demos.obs_dim != actor.obs_dim || demos.action_dim != actor.action_dim {
        return Err(RunError::usage(format!(
            "demo dims ({}, {}) do not match actor dims ({}, {})",
            demos.obs_dim, demos.action_dim, actor.obs_dim, actor.action_dim
        )));
    }

    // Normalizer statistics from all demo observations, then frozen.
    *normalizer = ObsNormalizer::new(demos.obs_dim, normalizer.clip);
    for ep in &demos.episodes {
        for step in ep {
            normalizer.normalize(&Tensor::matrix(1, demos.obs_dim, step.obs.clone()), true);
        }
    }

    let holdout_eps = if demos.episodes.len() >= 5 { demos.episodes.len().div_ceil(10) } else { 1 };
    let split = demos.episodes.len().saturating_sub(holdout_eps).max(1);
    let (train_eps, holdout) = if demos.episodes.len() == 1 {
        (&demos.episodes[..], &demos.episodes[..])
    } else {
        (&demos.episodes[..split], &demos.episodes[split..])
    };

    let flatten = |eps: &[Vec<fpopp_core::env::expert::DemoStep>]| -> (Tensor, Tensor) {
        let steps: Vec<_> = eps.iter().flatten().collect();
        let mut obs = Vec::with_capacity(steps.len() * demos.obs_dim);
        let mut act = Vec::with_capacity(steps.len() * demos.action_dim);
        for s in &steps {
            obs.extend_from_slice(&s.obs);
            act.extend_from_slice(&s.action);
        }
        (
            Tensor::matrix(steps.len(), demos.obs_dim, obs),
            Tensor::matrix(steps.len(), demos.action_dim, act),
        )
    };
    let (train_obs_raw, train_act) = flatten(train_eps);
    let (hold_obs_raw, hold_act) = flatten(holdout);
    let train_obs = normalizer.normalize(&train_obs_raw, false);
    let hold_obs = normalizer.normalize(&hold_obs_raw, false);

    let clamp = cfm::ClampConfig::default();
    let mut optimizer =
        OptimizerState::new(&actor.mlp.params(), opts.learning_rate).with_weight_decay(1e-4);

    let n = train_obs.rows();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        let mut shuffle_rng = derive(opts.seed, Role::Shuffle, 1 << 32, epoch as u64);
        indices.shuffle(&mut shuffle_rng);
        let mut sample_rng = derive(opts.seed, Role::McSamples, 1 << 32, epoch as u64);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in indices.chunks(opts.batch_size) {
            let obs_mb = gather_rows(&train_obs, chunk);
            let act_mb = gather_rows(&train_act, chunk);
            let mut samples = Vec::with_capacity(chunk.len() * opts.n_mc);
            for _ in 0..chunk.len() {
                samples.extend(cfm::draw_mc_samples(actor.action_dim, opts.n_mc, &mut sample_rng));
            }
            let mut tape = Tape::new();
            let vars = actor.mlp.register(&mut tape);
            let losses = cfm::cfm_losses_tape(
                &mut tape, &vars, actor, &obs_mb, &act_mb, &samples, opts.n_mc, &clamp,
            )
            .map_err(RunError::from)?;
            let loss = tape.mean_all(losses).map_err(RunError::from)?;
            total += tape.value(loss).item();
            batches += 1;
            tape.backward(loss);
            let mut grads = actor.mlp.grads(&tape, &vars);
            clip_grad_norm(&mut grads, 1.0);
            optimizer.step(&mut actor.mlp.params_mut(), &grads).map_err(RunError::from)?;
        }
        epoch_losses.push(total / batches.max(1) as f64);
    }

    // Held-out loss with fixed samples so checkpoints are comparable.
    let mut hold_rng = derive(opts.seed, Role::McSamples, (1 << 32) + 1, 0);
    let mut hold_samples = Vec::with_capacity(hold_obs.rows() * opts.n_mc);
    for _ in 0..hold_obs.rows() {
        hold_samples.extend(cfm::draw_mc_samples(actor.action_dim, opts.n_mc, &mut hold_rng));
    }
    let losses =
        cfm::cfm_losses_eval(actor, &hold_obs, &hold_act, &hold_samples, opts.n_mc, &clamp)
            .map_err(RunError::from)?;
    let holdout_loss = losses.iter().sum::<f64>() / losses.len() as f64;
    Ok(BcStats { epoch_losses, holdout_loss })
}

fn gather_rows(t: &Tensor, idx: &[usize]) -> Tensor {
    let cols = t.cols();
    let mut data = Vec::with_capacity(idx.len() * cols);
    for &i in idx {
        data.extend_from_slice(t.row(i));
    }
    Tensor::matrix(idx.len(), cols, data)
}
