//! The training loop: rollout collection with cached Monte Carlo
//! samples, epoch/minibatch updates with rollback on numeric faults,
//! evaluation, and the KL-adaptive learning-rate rule.

use std::collections::VecDeque;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use fpopp_core::advantage::{compute_gae, RolloutBuffer};
use fpopp_core::cfm::{self, McSample};
use fpopp_core::diagnostics::{self, ActorRef};
use fpopp_core::env::{EnvBatch, PushConfig};
use fpopp_core::error::Error as CoreError;
use fpopp_core::objectives::{
    fpo_actor_loss_tape, gaussian_ppo_loss_tape, normalize_advantages, value_loss_tape,
    ObjectiveConfig, RatioStats,
};
use fpopp_core::optim::clip_grad_norm;
use fpopp_core::policy::{FlowActor, SampleInit};
use fpopp_core::rngstream::{derive, Role};
use fpopp_core::tape::Tape;
use fpopp_core::tensor::Tensor;

use crate::agent::{ActorNet, Agent};
use crate::config::TrainConfig;
use crate::error::{Result, RunError};
use crate::metrics::MetricsRecord;

/// Wall-time source for metrics. Tests inject [`FixedClock`] so logs
/// are bit-reproducible.
pub trait Clock {
    fn elapsed(&mut self) -> f64;
}

pub struct RealClock(Instant);

impl RealClock {
    pub fn start() -> Self {
        RealClock(Instant::now())
    }
}

impl Clock for RealClock {
    fn elapsed(&mut self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Always reports zero elapsed time.
pub struct FixedClock;

impl Clock for FixedClock {
    fn elapsed(&mut self) -> f64 {
        0.0
    }
}

/// Consecutive faulted updates tolerated before the run aborts.
pub const FAULT_RETRY_BUDGET: usize = 3;

/// How many recent episode returns feed `train_return_mean`.
const RETURN_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy)]
pub enum EvalSampling {
    Zero,
    Random,
}

#[derive(Debug, Clone)]
pub struct EvalResult {
    pub mean: f64,
    pub std: f64,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct UpdateStats {
    pub actor_loss: f64,
    pub value_loss: f64,
    pub cfm_loss_mean: f64,
    pub ratio_mean: f64,
    pub ratio_max: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    /// Max |ρ − 1| observed in the first minibatch of the first epoch,
    /// where all ratios must be 1 up to float noise.
    pub first_minibatch_max_ratio_dev: f64,
    pub grad_cosine: Option<f64>,
    pub kl_proxy: Option<f64>,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub objective: ObjectiveConfig,
    pub agent: Agent,
    pub env: EnvBatch,
    current_obs: Tensor,
    episode_return_acc: Vec<f64>,
    recent_returns: VecDeque<f64>,
    pub env_steps: u64,
    pub faults: usize,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Trainer> {
        cfg.validate()?;
        let agent = Agent::new(&cfg)?;
        Trainer::with_agent(cfg, agent)
    }

    /// Start from an existing agent (fine-tuning).
    pub fn with_agent(cfg: TrainConfig, agent: Agent) -> Result<Trainer> {
        cfg.validate()?;
        let env_id = cfg.env_id()?;
        if env_id != agent.env_id {
            return Err(RunError::usage(format!(
                "agent was built for env `{}`, config asks for `{}`",
                agent.env_id.name(),
                env_id.name()
            )));
        }
        let push = if cfg.push_perturbations {
            PushConfig::enabled()
        } else {
            PushConfig::default()
        };
        let mut env = EnvBatch::new(env_id, cfg.num_envs, push);
        let current_obs = env.reset(cfg.seed);
        let num_envs = cfg.num_envs;
        let (objective, _) = cfg.objective_config();
        Ok(Trainer {
            cfg,
            objective,
            agent,
            env,
            current_obs,
            episode_return_acc: vec![0.0; num_envs],
            recent_returns: VecDeque::with_capacity(RETURN_WINDOW),
            env_steps: 0,
            faults: 0,
        })
    }

    /// Run all configured updates, emitting one metrics record each.
    pub fn run(
        &mut self,
        clock: &mut dyn Clock,
        mut on_record: impl FnMut(&MetricsRecord) -> Result<()>,
    ) -> Result<()> {
        for update in 0..self.cfg.updates {
            let record = self.run_one_update(update, clock)?;
            on_record(&record)?;
        }
        Ok(())
    }

    /// One rollout + update + optional evaluation, with fault handling.
    pub fn run_one_update(&mut self, update: usize, clock: &mut dyn Clock) -> Result<MetricsRecord> {
        let outcome = self
            .collect_rollout(update)
            .and_then(|(mut buffer, last_values)| {
                compute_gae(&mut buffer, self.cfg.gamma, self.cfg.gae_lambda, &last_values);
                if self.objective.normalize_advantages {
                    normalize_advantages(&mut buffer.advantages);
                }
                self.update(update, &buffer)
            });

        let mut record = MetricsRecord {
            update,
            env_steps: self.env_steps,
            wall_time: 0.0,
            train_return_mean: self.train_return_mean(),
            eval_return_zero: None,
            eval_return_random: None,
            actor_loss: None,
            value_loss: None,
            cfm_loss_mean: None,
            ratio_mean: None,
            ratio_max: None,
            ratio_clip_fraction: None,
            grad_norm: None,
            learning_rate: self.agent.optimizer.learning_rate,
            entropy: None,
            grad_cosine: None,
            numeric_fault: false,
        };

        match outcome {
            Ok(stats) => {
                self.faults = 0;
                record.actor_loss = Some(stats.actor_loss);
                record.value_loss = Some(stats.value_loss);
                record.cfm_loss_mean = if self.cfg.algo.is_flow() {
                    Some(stats.cfm_loss_mean)
                } else {
                    None
                };
                record.ratio_mean = Some(stats.ratio_mean);
                record.ratio_max = Some(stats.ratio_max);
                record.ratio_clip_fraction = Some(stats.clip_fraction);
                record.grad_norm = Some(stats.grad_norm);
                record.grad_cosine = stats.grad_cosine;
                if let Some(proxy) = stats.kl_proxy {
                    self.agent.optimizer.learning_rate = kl_adaptive_lr_rule(
                        proxy,
                        self.cfg.target_kl,
                        self.agent.optimizer.learning_rate,
                    );
                }
            }
            Err(CoreFault(msg)) => {
                self.faults += 1;
                record.numeric_fault = true;
                if self.faults > FAULT_RETRY_BUDGET {
                    return Err(RunError::Numeric(format!(
                        "update {update}: {msg} ({} consecutive faulted updates)",
                        self.faults
                    )));
                }
            }
        }

        let is_eval = self.cfg.eval_interval > 0
            && ((update + 1) % self.cfg.eval_interval == 0 || update + 1 == self.cfg.updates);
        if is_eval {
            let eval_seed = derive(self.cfg.seed, Role::Eval, update as u64, 0).random::<u64>();
            let zero = self.evaluate_current(EvalSampling::Zero, eval_seed)?;
            let random = self.evaluate_current(EvalSampling::Random, eval_seed)?;
            record.eval_return_zero = Some(zero.mean);
            record.eval_return_random = Some(random.mean);
            record.entropy = Some(self.policy_entropy(update)?);
        }

        record.wall_time = clock.elapsed();
        Ok(record)
    }

    fn train_return_mean(&self) -> Option<f64> {
        if self.recent_returns.is_empty() {
            None
        } else {
            Some(self.recent_returns.iter().sum::<f64>() / self.recent_returns.len() as f64)
        }
    }

    /// Collect `rollout_steps` transitions from every env. For flow
    /// policies this also draws each action's Monte Carlo samples and
    /// caches their losses under the current (pre-update) parameters.
    pub fn collect_rollout(
        &mut self,
        update: usize,
    ) -> std::result::Result<(RolloutBuffer, Vec<f64>), CoreFault> {
        let e = self.cfg.num_envs;
        let t_len = self.cfg.rollout_steps;
        let n = e * t_len;
        let obs_dim = self.agent.obs_dim();
        let act_dim = self.agent.action_dim();
        let is_flow = self.cfg.algo.is_flow();
        let n_mc = if is_flow { self.cfg.n_mc } else { 0 };

        let mut obs_data = Vec::with_capacity(n * obs_dim);
        let mut act_data = Vec::with_capacity(n * act_dim);
        let mut rewards = Vec::with_capacity(n);
        let mut dones = Vec::with_capacity(n);
        let mut truncateds = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        let mut boot_values = vec![0.0; n];
        let mut logliks_old = Vec::new();

        let mut rng = derive(self.cfg.seed, Role::PolicyNoise, update as u64, 0);

        for t in 0..t_len {
            let obs_norm =
                self.agent.normalizer.normalize(&self.current_obs, self.cfg.update_normalizer);
            let actions = match &self.agent.actor {
                ActorNet::Flow(actor) => actor.sample(
                    &obs_norm,
                    SampleInit::Random,
                    self.cfg.flow_steps_train,
                    Some(&mut rng),
                )?,
                ActorNet::Gaussian(actor) => {
                    let (a, ll) = actor.sample(&obs_norm, &mut rng)?;
                    logliks_old.extend(ll);
                    a
                }
            };
            let step_values = self.agent.critic.value(&obs_norm)?;

            let out = self.env.step(&actions)?;

            obs_data.extend_from_slice(obs_norm.data());
            act_data.extend_from_slice(actions.data());
            values.extend_from_slice(&step_values);
            for env_i in 0..e {
                let i = t * e + env_i;
                rewards.push(out.rewards[env_i]);
                dones.push(out.dones[env_i]);
                truncateds.push(out.truncateds[env_i]);
                self.episode_return_acc[env_i] += out.rewards[env_i];
                if out.dones[env_i] || out.truncateds[env_i] {
                    if self.recent_returns.len() == RETURN_WINDOW {
                        self.recent_returns.pop_front();
                    }
                    self.recent_returns.push_back(self.episode_return_acc[env_i]);
                    self.episode_return_acc[env_i] = 0.0;
                }
                if let Some(fin) = &out.final_obs[env_i] {
                    let fin_t = Tensor::matrix(1, obs_dim, fin.clone());
                    let fin_norm = self.agent.normalizer.normalize(&fin_t, false);
                    boot_values[i] = self.agent.critic.value(&fin_norm)?[0];
                }
            }
            self.current_obs = out.obs;
            self.env_steps += e as u64;
        }

        let mut buffer = RolloutBuffer {
            num_envs: e,
            steps: t_len,
            n_mc,
            obs: Tensor::matrix(n, obs_dim, obs_data),
            actions: Tensor::matrix(n, act_dim, act_data),
            rewards,
            dones,
            truncateds,
            values,
            boot_values,
            logliks_old,
            mc_samples: Vec::new(),
            l_old: Vec::new(),
            advantages: Vec::new(),
            returns: Vec::new(),
        };

        if let ActorNet::Flow(actor) = &self.agent.actor {
            let mut mc_rng = derive(self.cfg.seed, Role::McSamples, update as u64, 0);
            let mut samples = Vec::with_capacity(n * n_mc);
            for _ in 0..n {
                samples.extend(cfm::draw_mc_samples(act_dim, n_mc, &mut mc_rng));
            }
            buffer.l_old = cfm::cfm_losses_eval(
                actor,
                &buffer.obs,
                &buffer.actions,
                &samples,
                n_mc,
                &self.objective.clamp,
            )?;
            buffer.mc_samples = samples;
        }

        let last_obs_norm = self.agent.normalizer.normalize(&self.current_obs, false);
        let last_values = self.agent.critic.value(&last_obs_norm)?;
        Ok((buffer, last_values))
    }

    /// Epoch/minibatch optimization over one processed buffer. On a
    /// numeric fault the agent is restored to its pre-update snapshot
    /// and the fault is returned.
    pub fn update(
        &mut self,
        update: usize,
        buffer: &RolloutBuffer,
    ) -> std::result::Result<UpdateStats, CoreFault> {
        let snapshot = self.agent.snapshot();
        match self.update_inner(update, buffer) {
            Ok(stats) => Ok(stats),
            Err(fault) => {
                self.agent.restore(&snapshot);
                Err(fault)
            }
        }
    }

    fn update_inner(
        &mut self,
        update: usize,
        buffer: &RolloutBuffer,
    ) -> std::result::Result<UpdateStats, CoreFault> {
        let n = buffer.len();
        let mb_count = self.cfg.minibatches;
        let mb_size = n / mb_count;
        let old_actor = if self.cfg.kl_adaptive_lr {
            match &self.agent.actor {
                ActorNet::Flow(a) => Some(a.clone()),
                ActorNet::Gaussian(_) => None,
            }
        } else {
            None
        };

        let mut stats = UpdateStats::default();
        let mut passes = 0usize;
        let mut grad_flats: Vec<Vec<f64>> = Vec::new();
        let mut indices: Vec<usize> = (0..n).collect();

        for epoch in 0..self.cfg.epochs {
            let mut shuffle_rng =
                derive(self.cfg.seed, Role::Shuffle, update as u64, epoch as u64);
            indices.shuffle(&mut shuffle_rng);
            for mb in 0..mb_count {
                let idx = &indices[mb * mb_size..(mb + 1) * mb_size];
                let (grads, pass) = minibatch_pass(
                    &self.agent,
                    &self.objective,
                    &self.cfg,
                    buffer,
                    idx,
                )?;
                let mut grads = grads;
                if self.cfg.grad_cosine_diagnostic {
                    grad_flats
                        .push(grads.iter().flat_map(|g| g.data().iter().copied()).collect());
                }
                let norm = clip_grad_norm(&mut grads, self.cfg.max_grad_norm);
                self.agent.optimizer_step(&grads)?;

                if epoch == 0 && mb == 0 {
                    stats.first_minibatch_max_ratio_dev = pass.ratios.max_dev;
                }
                stats.actor_loss += pass.actor_loss;
                stats.value_loss += pass.value_loss;
                stats.cfm_loss_mean += pass.cfm_loss_mean;
                stats.ratio_mean += pass.ratios.mean;
                stats.ratio_max = stats.ratio_max.max(pass.ratios.max);
                stats.clip_fraction += pass.ratios.clip_fraction;
                stats.grad_norm += norm;
                passes += 1;
            }
        }

        let p = passes as f64;
        stats.actor_loss /= p;
        stats.value_loss /= p;
        stats.cfm_loss_mean /= p;
        stats.ratio_mean /= p;
        stats.clip_fraction /= p;
        stats.grad_norm /= p;
        if self.cfg.grad_cosine_diagnostic && grad_flats.len() >= 2 {
            let rep = diagnostics::grad_cosine_similarity(&grad_flats);
            stats.grad_cosine =
                if rep.mean_cosine.is_nan() { None } else { Some(rep.mean_cosine) };
        }
        if let (Some(old), ActorNet::Flow(new)) = (&old_actor, &self.agent.actor) {
            stats.kl_proxy = Some(noise_prediction_divergence(new, old, buffer)?);
        }
        Ok(stats)
    }

    /// Deterministic evaluation of the current agent on its own env
    /// kind. `episodes` envs run one fixed-length episode each.
    pub fn evaluate_current(&self, sampling: EvalSampling, seed: u64) -> Result<EvalResult> {
        evaluate(
            &self.agent,
            self.cfg.eval_episodes,
            sampling,
            self.cfg.flow_steps_eval,
            seed,
            if self.cfg.push_perturbations {
                PushConfig::enabled()
            } else {
                PushConfig::default()
            },
        )
    }

    /// Nearest-neighbor entropy of the action distribution at the
    /// current first observation.
    fn policy_entropy(&self, update: usize) -> Result<f64> {
        let mut norm = self.agent.normalizer.clone();
        let obs_norm = norm.normalize(&self.current_obs, false);
        let mut rng = derive(self.cfg.seed, Role::Eval, update as u64, 1);
        let actor_ref = match &self.agent.actor {
            ActorNet::Flow(f) => ActorRef::Flow(f),
            ActorNet::Gaussian(g) => ActorRef::Gaussian(g),
        };
        let samples = diagnostics::sample_actions(
            &actor_ref,
            obs_norm.row(0),
            256,
            self.cfg.flow_steps_eval,
            &mut rng,
        )?;
        Ok(diagnostics::knn_entropy(&samples, 3))
    }
}

/// Numeric fault wrapper so trainer internals can use `?` on core errors.
#[derive(Debug)]
pub struct CoreFault(pub String);

impl From<CoreError> for CoreFault {
    fn from(e: CoreError) -> Self {
        CoreFault(e.to_string())
    }
}

struct PassStats {
    actor_loss: f64,
    value_loss: f64,
    cfm_loss_mean: f64,
    ratios: RatioStats,
}

fn gather_rows(t: &Tensor, idx: &[usize]) -> Tensor {
    let cols = t.cols();
    let mut data = Vec::with_capacity(idx.len() * cols);
    for &i in idx {
        data.extend_from_slice(t.row(i));
    }
    Tensor::matrix(idx.len(), cols, data)
}

fn gather<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

fn gather_samples(samples: &[McSample], idx: &[usize], n_mc: usize) -> Vec<McSample> {
    let mut out = Vec::with_capacity(idx.len() * n_mc);
    for &i in idx {
        out.extend_from_slice(&samples[i * n_mc..(i + 1) * n_mc]);
    }
    out
}

fn gather_flat(v: &[f64], idx: &[usize], n_mc: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(idx.len() * n_mc);
    for &i in idx {
        out.extend_from_slice(&v[i * n_mc..(i + 1) * n_mc]);
    }
    out
}

/// One forward/backward pass over a minibatch. Returns raw (pre-clip)
/// gradients in the agent's parameter order.
fn minibatch_pass(
    agent: &Agent,
    objective: &ObjectiveConfig,
    cfg: &TrainConfig,
    buffer: &RolloutBuffer,
    idx: &[usize],
) -> std::result::Result<(Vec<Tensor>, PassStats), CoreFault> {
    let obs = gather_rows(&buffer.obs, idx);
    let actions = gather_rows(&buffer.actions, idx);
    let adv = gather(&buffer.advantages, idx);
    let returns = gather(&buffer.returns, idx);

    let mut tape = Tape::new();
    let (grads, actor_loss_v, cfm_mean, ratios, value_loss_v) = match &agent.actor {
        ActorNet::Flow(actor) => {
            let samples = gather_samples(&buffer.mc_samples, idx, buffer.n_mc);
            let l_old = gather_flat(&buffer.l_old, idx, buffer.n_mc);
            let avars = actor.mlp.register(&mut tape);
            let l_theta = cfm::cfm_losses_tape(
                &mut tape,
                &avars,
                actor,
                &obs,
                &actions,
                &samples,
                buffer.n_mc,
                &objective.clamp,
            )?;
            let lvals = tape.value(l_theta);
            let cfm_mean = lvals.data().iter().sum::<f64>() / lvals.numel() as f64;
            let (actor_loss, ratios) =
                fpo_actor_loss_tape(&mut tape, l_theta, &l_old, &adv, buffer.n_mc, objective)?;

            let cvars = agent.critic.mlp.register(&mut tape);
            let values = agent.critic.value_tape(&mut tape, &cvars, &obs)?;
            let v_loss = value_loss_tape(&mut tape, values, &returns)?;
            let v_scaled = tape.scale(v_loss, objective.value_loss_coef)?;
            let total = tape.add(actor_loss, v_scaled)?;
            tape.backward(total);

            let mut grads = actor.mlp.grads(&tape, &avars);
            grads.extend(agent.critic.mlp.grads(&tape, &cvars));
            (
                grads,
                tape.value(actor_loss).item(),
                cfm_mean,
                ratios,
                tape.value(v_loss).item(),
            )
        }
        ActorNet::Gaussian(actor) => {
            let logliks_old = gather(&buffer.logliks_old, idx);
            let mvars = actor.mean.register(&mut tape);
            let ls_var = tape.param(&actor.log_std);
            let ll =
                actor.log_likelihood_tape(&mut tape, &mvars, ls_var, &obs, &actions)?;
            let (mut actor_loss, ratios) =
                gaussian_ppo_loss_tape(&mut tape, ll, &logliks_old, &adv, objective)?;
            if cfg.entropy_coef > 0.0 {
                let h = tape.sum_all(ls_var)?;
                let bonus = tape.scale(h, -cfg.entropy_coef)?;
                actor_loss = tape.add(actor_loss, bonus)?;
            }
            let cvars = agent.critic.mlp.register(&mut tape);
            let values = agent.critic.value_tape(&mut tape, &cvars, &obs)?;
            let v_loss = value_loss_tape(&mut tape, values, &returns)?;
            let v_scaled = tape.scale(v_loss, objective.value_loss_coef)?;
            let total = tape.add(actor_loss, v_scaled)?;
            tape.backward(total);

            let mut grads = actor.mean.grads(&tape, &mvars);
            grads.push(
                tape.grad(ls_var)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(actor.log_std.shape().to_vec())),
            );
            grads.extend(agent.critic.mlp.grads(&tape, &cvars));
            (
                grads,
                tape.value(actor_loss).item(),
                0.0,
                ratios,
                tape.value(v_loss).item(),
            )
        }
    };
    Ok((
        grads,
        PassStats {
            actor_loss: actor_loss_v,
            value_loss: value_loss_v,
            cfm_loss_mean: cfm_mean,
            ratios,
        },
    ))
}

/// Proxy KL via predicted noises: ε̂ = a − v̂ under the linear schedule.
/// Returns the mean squared L2 distance between the noises predicted by
/// the new and old parameters at the cached (aᵗ, τ) pairs.
pub fn noise_prediction_divergence(
    new_actor: &FlowActor,
    old_actor: &FlowActor,
    buffer: &RolloutBuffer,
) -> std::result::Result<f64, CoreFault> {
    assert!(buffer.n_mc > 0, "flow buffer required");
    let n = buffer.len();
    let act_dim = new_actor.action_dim;
    let rows = n * buffer.n_mc;
    let mut obs_rep = Vec::with_capacity(rows * buffer.obs.cols());
    let mut a_tau = Vec::with_capacity(rows * act_dim);
    let mut tau = Vec::with_capacity(rows);
    for i in 0..n {
        for j in 0..buffer.n_mc {
            let s = &buffer.mc_samples[i * buffer.n_mc + j];
            obs_rep.extend_from_slice(buffer.obs.row(i));
            a_tau.extend(cfm::interpolate(buffer.actions.row(i), s));
            tau.push(s.flow_step);
        }
    }
    let obs_rep = Tensor::matrix(rows, buffer.obs.cols(), obs_rep);
    let a_tau = Tensor::matrix(rows, act_dim, a_tau);
    // ε̂ = a − v̂; the action terms cancel in the difference, so the
    // divergence is the mean squared distance between velocity fields.
    let v_new = new_actor.velocity_eval(&obs_rep, &a_tau, &tau)?;
    let v_old = old_actor.velocity_eval(&obs_rep, &a_tau, &tau)?;
    let mut total = 0.0;
    for r in 0..rows {
        let d: f64 = v_new
            .row(r)
            .iter()
            .zip(v_old.row(r))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += d;
    }
    Ok(total / rows as f64)
}

/// Learning-rate adaptation: halve above 2× target, grow 1.5× below
/// half target, and stay inside [1e-6, 1e-2].
pub fn kl_adaptive_lr_rule(proxy_kl: f64, target_kl: f64, lr: f64) -> f64 {
    let adjusted = if proxy_kl > 2.0 * target_kl {
        lr * 0.5
    } else if proxy_kl < 0.5 * target_kl {
        lr * 1.5
    } else {
        lr
    };
    adjusted.clamp(1e-6, 1e-2)
}

/// Run `episodes` independent fixed-length episodes and report
/// undiscounted return statistics. The normalizer stays frozen.
pub fn evaluate(
    agent: &Agent,
    episodes: usize,
    sampling: EvalSampling,
    flow_steps: usize,
    seed: u64,
    push: PushConfig,
) -> Result<EvalResult> {
    if episodes == 0 {
        return Err(RunError::usage("evaluation needs at least one episode"));
    }
    let mut env = EnvBatch::new(agent.env_id, episodes, push);
    let mut obs = env.reset(seed);
    let mut normalizer = agent.normalizer.clone();
    let mut rng = derive(seed, Role::Eval, u64::MAX, 0);
    let mut returns = vec![0.0; episodes];
    let limit = agent.env_id.episode_limit();
    for _ in 0..limit {
        let obs_norm = normalizer.normalize(&obs, false);
        let actions = match (&agent.actor, sampling) {
            (ActorNet::Flow(a), EvalSampling::Zero) => {
                a.sample(&obs_norm, SampleInit::Zero, flow_steps, None)?
            }
            (ActorNet::Flow(a), EvalSampling::Random) => {
                a.sample(&obs_norm, SampleInit::Random, flow_steps, Some(&mut rng))?
            }
            (ActorNet::Gaussian(g), EvalSampling::Zero) => g.mean.forward_eval(&obs_norm),
            (ActorNet::Gaussian(g), EvalSampling::Random) => g.sample(&obs_norm, &mut rng)?.0,
        };
        let out = env.step(&actions).map_err(RunError::from)?;
        for (r, &step_r) in returns.iter_mut().zip(&out.rewards) {
            *r += step_r;
        }
        obs = out.obs;
    }
    let mean = returns.iter().sum::<f64>() / episodes as f64;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / episodes as f64;
    Ok(EvalResult { mean, std: var.sqrt(), returns })
}

impl From<CoreFault> for RunError {
    fn from(f: CoreFault) -> Self {
        RunError::Numeric(f.0)
    }
}
