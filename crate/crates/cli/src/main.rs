//! `fpopp`: train, evaluate, and analyze flow-matching policy-gradient
//! agents on the built-in toy control environments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fpopp_cli::commands::{self, EvalCommand, FinetuneCommand, PretrainCommand};
use fpopp_cli::config::{Algo, GranularityOpt, TrainConfig, TrustRegionOpt};
use fpopp_cli::error::{Result, RunError};
use fpopp_cli::presets;
use fpopp_cli::trainer::{EvalSampling, RealClock};

#[derive(Parser)]
#[command(name = "fpopp", version, about = "Flow-matching policy gradients on toy control tasks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a training loop and write metrics plus checkpoints.
    Train(TrainArgs),
    /// Evaluate a checkpoint and write per-episode returns.
    Eval(EvalArgs),
    /// Generate scripted-expert demonstrations.
    GenDemos(GenDemosArgs),
    /// Behavior-clone an actor from a demonstration file.
    Pretrain(PretrainArgs),
    /// RL fine-tuning from a pretrained checkpoint.
    Finetune(FinetuneArgs),
    /// Analysis tools over trained checkpoints.
    #[command(subcommand)]
    Diag(DiagCmd),
    /// Run a shipped experiment preset.
    Preset(PresetArgs),
}

#[derive(Args)]
struct OverrideArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// fpopp, fpo, or gauss-ppo.
    #[arg(long)]
    algo: Option<String>,
    /// pointmass, correlated, or multigoal.
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    updates: Option<usize>,
    #[arg(long)]
    num_envs: Option<usize>,
    #[arg(long)]
    rollout_steps: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    minibatches: Option<usize>,
    #[arg(long, value_name = "LR")]
    learning_rate: Option<f64>,
    #[arg(long)]
    n_mc: Option<usize>,
    /// Euler steps for training rollouts.
    #[arg(long)]
    flow_steps: Option<usize>,
    /// Euler steps for evaluation.
    #[arg(long)]
    eval_flow_steps: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    gae_lambda: Option<f64>,
    #[arg(long)]
    hidden_actor: Option<usize>,
    #[arg(long)]
    hidden_critic: Option<usize>,
    /// "u" (velocity) or "x0" (clean action).
    #[arg(long)]
    network_output: Option<String>,
    #[arg(long)]
    clip_eps: Option<f64>,
    /// ppo, spo, or aspo.
    #[arg(long)]
    trust_region: Option<String>,
    /// per-sample or per-action.
    #[arg(long)]
    granularity: Option<String>,
    #[arg(long)]
    entropy_coef: Option<f64>,
    #[arg(long)]
    kl_adaptive_lr: bool,
    #[arg(long)]
    eval_interval: Option<usize>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    /// Enable external push perturbations.
    #[arg(long)]
    push: bool,
    /// Record the within-update gradient cosine similarity.
    #[arg(long)]
    grad_cosine: bool,
}

impl OverrideArgs {
    fn apply(&self, cfg: &mut TrainConfig) -> Result<()> {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(a) = &self.algo {
            cfg.algo =
                Algo::parse(a).ok_or_else(|| RunError::usage(format!("unknown algo `{a}`")))?;
        }
        if let Some(e) = &self.env {
            cfg.env = e.clone();
        }
        if let Some(v) = self.updates {
            cfg.updates = v;
        }
        if let Some(v) = self.num_envs {
            cfg.num_envs = v;
        }
        if let Some(v) = self.rollout_steps {
            cfg.rollout_steps = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.minibatches {
            cfg.minibatches = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.n_mc {
            cfg.n_mc = v;
        }
        if let Some(v) = self.flow_steps {
            cfg.flow_steps_train = v;
        }
        if let Some(v) = self.eval_flow_steps {
            cfg.flow_steps_eval = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.gae_lambda {
            cfg.gae_lambda = v;
        }
        if let Some(v) = self.hidden_actor {
            cfg.hidden_actor = v;
        }
        if let Some(v) = self.hidden_critic {
            cfg.hidden_critic = v;
        }
        if let Some(v) = &self.network_output {
            cfg.network_output = v.clone();
        }
        if let Some(v) = self.clip_eps {
            cfg.objective.clip_eps = v;
        }
        if let Some(t) = &self.trust_region {
            cfg.objective.trust_region = Some(match t.as_str() {
                "ppo" => TrustRegionOpt::Ppo,
                "spo" => TrustRegionOpt::Spo,
                "aspo" => TrustRegionOpt::Aspo,
                other => return Err(RunError::usage(format!("unknown trust region `{other}`"))),
            });
        }
        if let Some(g) = &self.granularity {
            cfg.objective.granularity = Some(match g.as_str() {
                "per-sample" => GranularityOpt::PerSample,
                "per-action" => GranularityOpt::PerAction,
                other => return Err(RunError::usage(format!("unknown granularity `{other}`"))),
            });
        }
        if let Some(v) = self.entropy_coef {
            cfg.entropy_coef = v;
        }
        if self.kl_adaptive_lr {
            cfg.kl_adaptive_lr = true;
        }
        if let Some(v) = self.eval_interval {
            cfg.eval_interval = v;
        }
        if let Some(v) = self.eval_episodes {
            cfg.eval_episodes = v;
        }
        if self.push {
            cfg.push_perturbations = true;
        }
        if self.grad_cosine {
            cfg.grad_cosine_diagnostic = true;
        }
        Ok(())
    }
}

#[derive(Args)]
struct TrainArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: <out-root>/<algo>-<env>-seed<seed>).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Sanity-check the checkpoint against this env id.
    #[arg(long)]
    env: Option<String>,
    /// zero or random.
    #[arg(long, default_value = "zero")]
    sampling: String,
    #[arg(long, default_value_t = 5)]
    flow_steps: usize,
    #[arg(long, default_value_t = 32)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-episode returns table (default: alongside the checkpoint).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    push: bool,
}

#[derive(Args)]
struct GenDemosArgs {
    #[arg(long, default_value = "pointmass")]
    env: String,
    #[arg(long, default_value_t = 50)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    demos: PathBuf,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 4)]
    n_mc: usize,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FinetuneArgs {
    #[arg(long)]
    base_checkpoint: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Subcommand)]
enum DiagCmd {
    /// Pearson correlation matrix of sampled actions.
    Correlation {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10000)]
        samples: usize,
        #[arg(long, default_value_t = 8)]
        flow_steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Noise-transport trajectories for one action dimension.
    FlowField {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        dim: usize,
        #[arg(long, default_value_t = 10000)]
        trajectories: usize,
        #[arg(long, default_value_t = 8)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Nearest-neighbor entropy of the action distribution.
    Entropy {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10000)]
        samples: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        flow_steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct PresetArgs {
    /// One of: ablation-ratio, ablation-trust-region,
    /// zero-sampling-sweep, finetune-pointmass, gauss-vs-fpopp.
    name: String,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the per-run update count.
    #[arg(long)]
    updates: Option<usize>,
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    /// Run up to N training processes concurrently.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

/// Output directory root: `FPOPP_OUT_DIR` or `./runs`.
fn out_root() -> PathBuf {
    std::env::var_os("FPOPP_OUT_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn parse_sampling(s: &str) -> Result<EvalSampling> {
    match s {
        "zero" => Ok(EvalSampling::Zero),
        "random" => Ok(EvalSampling::Random),
        other => Err(RunError::usage(format!("unknown sampling `{other}` (zero|random)"))),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Train(args) => {
            let mut cfg = match &args.config {
                Some(path) => TrainConfig::load(path)?,
                None => TrainConfig::default(),
            };
            args.overrides.apply(&mut cfg)?;
            cfg.validate()?;
            let out = args.out.unwrap_or_else(|| {
                out_root().join(format!("{}-{}-seed{}", cfg.algo.name(), cfg.env, cfg.seed))
            });
            let mut clock = RealClock::start();
            let summary = commands::run_train(&cfg, &out, &mut clock)?;
            println!("metrics: {}", summary.metrics_path.display());
            println!("checkpoint: {}", summary.final_checkpoint.display());
            if let (Some(z), Some(r)) = (summary.final_eval_zero, summary.final_eval_random) {
                println!("final eval return: zero {z:.3}, random {r:.3}");
            }
        }
        Cmd::Eval(args) => {
            let out = args
                .out
                .clone()
                .or_else(|| args.checkpoint.parent().map(|d| d.join("eval-returns.txt")));
            let (mean, std) = commands::run_eval(&EvalCommand {
                checkpoint: args.checkpoint,
                env: args.env,
                sampling: parse_sampling(&args.sampling)?,
                flow_steps: args.flow_steps,
                episodes: args.episodes,
                seed: args.seed,
                out,
                push: args.push,
            })?;
            println!("return: {mean:.4} ± {std:.4}");
        }
        Cmd::GenDemos(args) => {
            let out = args.out.unwrap_or_else(|| {
                PathBuf::from(format!("demos-{}-{}-seed{}.txt", args.env, args.episodes, args.seed))
            });
            let mean = commands::run_gen_demos(&args.env, args.episodes, args.seed, &out)?;
            println!("wrote {} (mean episode return {mean:.3})", out.display());
        }
        Cmd::Pretrain(args) => {
            let out = args.out.unwrap_or_else(|| PathBuf::from("bc-checkpoint.fpoc"));
            let holdout = commands::run_pretrain(&PretrainCommand {
                demos: args.demos,
                epochs: args.epochs,
                learning_rate: args.learning_rate,
                n_mc: args.n_mc,
                batch_size: args.batch_size,
                hidden: args.hidden,
                seed: args.seed,
                out: out.clone(),
            })?;
            println!("wrote {} (held-out CFM loss {holdout:.6})", out.display());
        }
        Cmd::Finetune(args) => {
            let (_, base_cfg) = fpopp_cli::checkpoint::load_checkpoint(&args.base_checkpoint)?;
            let mut cfg = commands::finetune_config_for(
                &base_cfg.env_id()?,
                base_cfg.hidden_actor,
                base_cfg.seed,
            );
            args.overrides.apply(&mut cfg)?;
            cfg.validate()?;
            let out = args
                .out
                .unwrap_or_else(|| out_root().join(format!("finetune-{}-seed{}", cfg.env, cfg.seed)));
            let summary = commands::run_finetune(
                &FinetuneCommand { base_checkpoint: args.base_checkpoint, cfg, out_dir: out },
                &mut RealClock::start(),
            )?;
            println!("metrics: {}", summary.metrics_path.display());
            println!("checkpoint: {}", summary.final_checkpoint.display());
        }
        Cmd::Diag(diag) => match diag {
            DiagCmd::Correlation { checkpoint, samples, flow_steps, seed, out } => {
                let out = out.unwrap_or_else(|| PathBuf::from("correlation.txt"));
                commands::run_diag_correlation(&checkpoint, samples, flow_steps, seed, &out)?;
                println!("wrote {}", out.display());
            }
            DiagCmd::FlowField { checkpoint, dim, trajectories, steps, seed, out } => {
                let out = out.unwrap_or_else(|| PathBuf::from("flow-field.txt"));
                commands::run_diag_flow_field(&checkpoint, dim, trajectories, steps, seed, &out)?;
                println!("wrote {}", out.display());
            }
            DiagCmd::Entropy { checkpoint, samples, k, flow_steps, seed } => {
                let h = commands::run_diag_entropy(&checkpoint, samples, k, flow_steps, seed)?;
                println!("entropy estimate: {h:.4}");
            }
        },
        Cmd::Preset(args) => {
            let out = args.out.unwrap_or_else(|| out_root().join(&args.name));
            presets::run_preset(&args.name, &out, args.updates, args.seeds, args.parallel)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // Usage problems exit 1, numeric faults 2, I/O failures 3.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
