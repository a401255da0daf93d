//! Command implementations shared by the CLI surface and the preset
//! sweep runner.

use std::path::{Path, PathBuf};

use fpopp_core::diagnostics::{self, ActorRef};
use fpopp_core::env::expert::generate_demos;
use fpopp_core::env::{EnvBatch, EnvId, PushConfig};
use fpopp_core::normalizer::ObsNormalizer;
use fpopp_core::policy::{FlowActor, OutputParam};
use fpopp_core::rngstream::{derive, rng_from_seed, Role};

use crate::agent::{ActorNet, Agent};
use crate::bc::{pretrain_bc, BcOptions};
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{Algo, TrainConfig, TrustRegionOpt};
use crate::demofile;
use crate::error::{Result, RunError};
use crate::metrics::{header_line, record_line, MetricsLog};
use crate::table::write_table;
use crate::trainer::{evaluate, Clock, EvalSampling, Trainer};

pub struct TrainSummary {
    pub out_dir: PathBuf,
    pub metrics_path: PathBuf,
    pub final_checkpoint: PathBuf,
    pub final_eval_zero: Option<f64>,
    pub final_eval_random: Option<f64>,
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(RunError::io(path))
}

/// Full training run: metrics log, periodic checkpoints at evaluation
/// intervals, final checkpoint, and the effective config echoed both
/// into the log header and `config.toml`.
pub fn run_train(cfg: &TrainConfig, out_dir: &Path, clock: &mut dyn Clock) -> Result<TrainSummary> {
    cfg.validate()?;
    ensure_dir(out_dir)?;
    let (_, warnings) = cfg.objective_config();
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    std::fs::write(out_dir.join("config.toml"), cfg.to_toml_string())
        .map_err(RunError::io(out_dir.join("config.toml")))?;

    let metrics_path = out_dir.join("metrics.jsonl");
    let mut log = MetricsLog::to_file(&metrics_path)?;
    log.push(header_line(cfg))?;

    let mut trainer = Trainer::new(cfg.clone())?;
    let mut last_zero = None;
    let mut last_random = None;
    for update in 0..cfg.updates {
        let record = trainer.run_one_update(update, clock)?;
        if record.eval_return_zero.is_some() {
            last_zero = record.eval_return_zero;
            last_random = record.eval_return_random;
            let ckpt = out_dir.join(format!("checkpoint-u{update}.fpoc"));
            save_checkpoint(&ckpt, &trainer.agent, cfg)?;
        }
        log.push(record_line(&record))?;
    }
    let final_checkpoint = out_dir.join("checkpoint-final.fpoc");
    save_checkpoint(&final_checkpoint, &trainer.agent, cfg)?;
    Ok(TrainSummary {
        out_dir: out_dir.to_path_buf(),
        metrics_path,
        final_checkpoint,
        final_eval_zero: last_zero,
        final_eval_random: last_random,
    })
}

pub struct EvalCommand {
    pub checkpoint: PathBuf,
    pub env: Option<String>,
    pub sampling: EvalSampling,
    pub flow_steps: usize,
    pub episodes: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub push: bool,
}

/// Evaluate a checkpoint; prints mean ± std and writes the per-episode
/// returns table.
pub fn run_eval(cmd: &EvalCommand) -> Result<(f64, f64)> {
    if cmd.episodes == 0 {
        return Err(RunError::usage("--episodes must be at least 1"));
    }
    let (agent, _cfg) = load_checkpoint(&cmd.checkpoint)?;
    if let Some(env) = &cmd.env {
        let env_id = EnvId::parse(env)
            .ok_or_else(|| RunError::usage(format!("unknown env `{env}`")))?;
        if env_id != agent.env_id
            || env_id.obs_dim() != agent.obs_dim()
            || env_id.action_dim() != agent.action_dim()
        {
            return Err(RunError::usage(format!(
                "checkpoint/env dim mismatch: checkpoint is for `{}`, asked for `{env}`",
                agent.env_id.name()
            )));
        }
    }
    let push = if cmd.push { PushConfig::enabled() } else { PushConfig::default() };
    let result = evaluate(&agent, cmd.episodes, cmd.sampling, cmd.flow_steps, cmd.seed, push)?;
    if let Some(out) = &cmd.out {
        let rows: Vec<Vec<f64>> =
            result.returns.iter().enumerate().map(|(i, r)| vec![i as f64, *r]).collect();
        write_table(out, &["episode", "return"], &rows)?;
    }
    Ok((result.mean, result.std))
}

/// Generate expert demonstrations and write them to `out`.
pub fn run_gen_demos(env: &str, episodes: usize, seed: u64, out: &Path) -> Result<f64> {
    let env_id =
        EnvId::parse(env).ok_or_else(|| RunError::usage(format!("unknown env `{env}`")))?;
    let demos = generate_demos(env_id, episodes, seed)?;
    demofile::write_demos(out, &demos)?;
    Ok(demos.mean_return)
}

pub struct PretrainCommand {
    pub demos: PathBuf,
    pub epochs: usize,
    pub learning_rate: f64,
    pub n_mc: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub seed: u64,
    pub out: PathBuf,
}

/// Behavior-clone an actor from a demo file and save it as a checkpoint.
pub fn run_pretrain(cmd: &PretrainCommand) -> Result<f64> {
    let demos = demofile::read_demos(&cmd.demos)?;
    let mut rng = derive(cmd.seed, Role::ParamInit, 2, 0);
    let mut actor = FlowActor::new(
        demos.obs_dim,
        demos.action_dim,
        cmd.hidden,
        OutputParam::Velocity,
        &mut rng,
    );
    let mut normalizer = ObsNormalizer::new(demos.obs_dim, 10.0);
    let opts = BcOptions {
        epochs: cmd.epochs,
        learning_rate: cmd.learning_rate,
        n_mc: cmd.n_mc,
        batch_size: cmd.batch_size,
        seed: cmd.seed,
    };
    let stats = pretrain_bc(&mut actor, &mut normalizer, &demos, &opts)?;

    // Checkpoint carries a config matching the pretrained architecture,
    // already set up for the fine-tuning recipe.
    let cfg = finetune_config_for(&demos.env_id, cmd.hidden, cmd.seed);
    let agent = Agent::from_pretrained(&cfg, actor, normalizer)?;
    save_checkpoint(&cmd.out, &agent, &cfg)?;
    Ok(stats.holdout_loss)
}

/// Fine-tuning defaults: per-sample ratios with plain PPO clipping and
/// frozen normalizer statistics.
pub fn finetune_config_for(env_id: &EnvId, hidden: usize, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig {
        algo: Algo::Fpopp,
        env: env_id.name().to_string(),
        seed,
        hidden_actor: hidden,
        updates: 100,
        update_normalizer: false,
        ..Default::default()
    };
    cfg.objective.trust_region = Some(TrustRegionOpt::Ppo);
    cfg
}

pub struct FinetuneCommand {
    pub base_checkpoint: PathBuf,
    pub cfg: TrainConfig,
    pub out_dir: PathBuf,
}

/// RL fine-tuning from a pretrained checkpoint: fresh critic, frozen
/// normalizer, {per-sample, ppo} objective unless overridden.
pub fn run_finetune(cmd: &FinetuneCommand, clock: &mut dyn Clock) -> Result<TrainSummary> {
    let (base, _base_cfg) = load_checkpoint(&cmd.base_checkpoint)?;
    let ActorNet::Flow(actor) = base.actor else {
        return Err(RunError::usage("fine-tuning requires a flow-policy checkpoint"));
    };
    let cfg = cmd.cfg.clone();
    cfg.validate()?;
    ensure_dir(&cmd.out_dir)?;
    std::fs::write(cmd.out_dir.join("config.toml"), cfg.to_toml_string())
        .map_err(RunError::io(cmd.out_dir.join("config.toml")))?;

    let agent = Agent::from_pretrained(&cfg, actor, base.normalizer)?;
    let metrics_path = cmd.out_dir.join("metrics.jsonl");
    let mut log = MetricsLog::to_file(&metrics_path)?;
    log.push(header_line(&cfg))?;
    let mut trainer = Trainer::with_agent(cfg.clone(), agent)?;
    let mut last_zero = None;
    let mut last_random = None;
    for update in 0..cfg.updates {
        let record = trainer.run_one_update(update, clock)?;
        if record.eval_return_zero.is_some() {
            last_zero = record.eval_return_zero;
            last_random = record.eval_return_random;
        }
        log.push(record_line(&record))?;
    }
    let final_checkpoint = cmd.out_dir.join("checkpoint-final.fpoc");
    save_checkpoint(&final_checkpoint, &trainer.agent, &cfg)?;
    Ok(TrainSummary {
        out_dir: cmd.out_dir.clone(),
        metrics_path,
        final_checkpoint,
        final_eval_zero: last_zero,
        final_eval_random: last_random,
    })
}

/// `diag correlation`: sample actions at a deterministic reset
/// observation and write the d×d Pearson matrix.
pub fn run_diag_correlation(
    checkpoint: &Path,
    samples: usize,
    flow_steps: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let (agent, _) = load_checkpoint(checkpoint)?;
    let mut env = EnvBatch::new(agent.env_id, 1, PushConfig::default());
    let obs = env.reset(seed);
    let mut normalizer = agent.normalizer.clone();
    let obs_norm = normalizer.normalize(&obs, false);
    let actor_ref = match &agent.actor {
        ActorNet::Flow(f) => ActorRef::Flow(f),
        ActorNet::Gaussian(g) => ActorRef::Gaussian(g),
    };
    let mut rng = rng_from_seed(seed);
    let corr = diagnostics::action_correlation(
        &actor_ref,
        obs_norm.row(0),
        samples,
        flow_steps,
        &mut rng,
    )?;
    let d = agent.action_dim();
    let cols: Vec<String> = (0..d).map(|i| format!("a{i}")).collect();
    let col_refs: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
    let rows: Vec<Vec<f64>> = (0..d).map(|i| corr.matrix.row(i).to_vec()).collect();
    write_table(out, &col_refs, &rows)?;
    if !corr.degenerate_dims.is_empty() {
        eprintln!("warning: zero-variance action dims {:?}", corr.degenerate_dims);
    }
    Ok(())
}

/// `diag flow-field`: transport trajectories of sampled noises for one
/// action dimension, as (trajectory, tau, value) rows.
pub fn run_diag_flow_field(
    checkpoint: &Path,
    dim: usize,
    trajectories: usize,
    steps: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let (agent, _) = load_checkpoint(checkpoint)?;
    let ActorNet::Flow(actor) = &agent.actor else {
        return Err(RunError::usage("flow-field export requires a flow-policy checkpoint"));
    };
    if dim >= agent.action_dim() {
        return Err(RunError::usage(format!(
            "action dim index {dim} out of range (policy has {})",
            agent.action_dim()
        )));
    }
    let mut env = EnvBatch::new(agent.env_id, 1, PushConfig::default());
    let obs = env.reset(seed);
    let mut normalizer = agent.normalizer.clone();
    let obs_norm = normalizer.normalize(&obs, false);
    let mut rng = rng_from_seed(seed);
    let lines = diagnostics::flow_field_trajectories(
        actor,
        obs_norm.row(0),
        dim,
        trajectories,
        steps,
        &mut rng,
    )?;
    let mut rows = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        for &(tau, v) in line {
            rows.push(vec![i as f64, tau, v]);
        }
    }
    write_table(out, &["trajectory", "tau", "value"], &rows)?;
    Ok(())
}

/// `diag entropy`: nearest-neighbor entropy of the action distribution
/// at a deterministic reset observation.
pub fn run_diag_entropy(
    checkpoint: &Path,
    samples: usize,
    k: usize,
    flow_steps: usize,
    seed: u64,
) -> Result<f64> {
    let (agent, _) = load_checkpoint(checkpoint)?;
    let mut env = EnvBatch::new(agent.env_id, 1, PushConfig::default());
    let obs = env.reset(seed);
    let mut normalizer = agent.normalizer.clone();
    let obs_norm = normalizer.normalize(&obs, false);
    let actor_ref = match &agent.actor {
        ActorNet::Flow(f) => ActorRef::Flow(f),
        ActorNet::Gaussian(g) => ActorRef::Gaussian(g),
    };
    let mut rng = rng_from_seed(seed);
    let actions =
        diagnostics::sample_actions(&actor_ref, obs_norm.row(0), samples, flow_steps, &mut rng)?;
    Ok(diagnostics::knn_entropy(&actions, k))
}
