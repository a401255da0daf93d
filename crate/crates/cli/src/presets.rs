//! Shipped experiment presets: desk-scale sweeps mirroring the main
//! ablation and comparison axes. Runs execute sequentially in-process
//! by default, or as child processes with `--parallel N`.

use std::path::{Path, PathBuf};
use std::process::Command;

use fpopp_core::env::EnvId;

use crate::commands::{self, run_train, EvalCommand, FinetuneCommand, PretrainCommand};
use crate::config::{Algo, GranularityOpt, TrainConfig, TrustRegionOpt};
use crate::error::{Result, RunError};
use crate::metrics::MetricsRecord;
use crate::table::write_table;
use crate::trainer::{EvalSampling, RealClock};

pub const PRESET_NAMES: &[&str] = &[
    "ablation-ratio",
    "ablation-trust-region",
    "zero-sampling-sweep",
    "finetune-pointmass",
    "gauss-vs-fpopp",
];

#[derive(Debug, Clone)]
pub struct PresetRun {
    pub name: String,
    pub cfg: TrainConfig,
}

/// Small-network pointmass base used by the sweep presets.
fn sweep_base(seed: u64) -> TrainConfig {
    TrainConfig {
        env: "pointmass".to_string(),
        seed,
        num_envs: 128,
        updates: 120,
        epochs: 8,
        hidden_actor: 32,
        hidden_critic: 64,
        n_mc: 8,
        flow_steps_train: 16,
        learning_rate: 3e-4,
        eval_interval: 20,
        eval_episodes: 16,
        ..Default::default()
    }
}

pub fn preset_runs(name: &str, updates: Option<usize>, seeds: usize) -> Result<Vec<PresetRun>> {
    let mut runs = Vec::new();
    match name {
        "ablation-ratio" => {
            for seed in 0..seeds as u64 {
                for gran in [GranularityOpt::PerSample, GranularityOpt::PerAction] {
                    let mut cfg = sweep_base(seed);
                    cfg.objective.granularity = Some(gran);
                    let tag = match gran {
                        GranularityOpt::PerSample => "per-sample",
                        GranularityOpt::PerAction => "per-action",
                    };
                    runs.push(PresetRun { name: format!("{tag}-seed{seed}"), cfg });
                }
            }
        }
        "ablation-trust-region" => {
            for seed in 0..seeds as u64 {
                for tr in [TrustRegionOpt::Ppo, TrustRegionOpt::Spo, TrustRegionOpt::Aspo] {
                    let mut cfg = sweep_base(seed);
                    cfg.objective.trust_region = Some(tr);
                    let tag = match tr {
                        TrustRegionOpt::Ppo => "ppo",
                        TrustRegionOpt::Spo => "spo",
                        TrustRegionOpt::Aspo => "aspo",
                    };
                    runs.push(PresetRun { name: format!("{tag}-seed{seed}"), cfg });
                }
            }
        }
        "zero-sampling-sweep" => {
            for seed in 0..seeds as u64 {
                let mut cfg = sweep_base(seed);
                cfg.env = "multigoal".to_string();
                cfg.updates = 240;
                runs.push(PresetRun { name: format!("multigoal-seed{seed}"), cfg });
            }
        }
        "gauss-vs-fpopp" => {
            for seed in 0..seeds as u64 {
                for num_envs in [32usize, 64, 128, 256, 512] {
                    for algo in [Algo::Fpopp, Algo::GaussPpo] {
                        let mut cfg = sweep_base(seed);
                        cfg.algo = algo;
                        cfg.num_envs = num_envs;
                        cfg.updates = 150;
                        if algo == Algo::GaussPpo {
                            cfg.objective.clip_eps = 0.2;
                        }
                        runs.push(PresetRun {
                            name: format!("{}-e{num_envs}-seed{seed}", algo.name()),
                            cfg,
                        });
                    }
                }
            }
        }
        "finetune-pointmass" => {
            // Handled specially in run_preset; no plain training runs.
        }
        other => {
            return Err(RunError::usage(format!(
                "unknown preset `{other}` (available: {})",
                PRESET_NAMES.join(", ")
            )));
        }
    }
    if let Some(u) = updates {
        for r in &mut runs {
            r.cfg.updates = u;
        }
    }
    Ok(runs)
}

fn last_evals(metrics_path: &Path) -> Result<(Option<f64>, Option<f64>)> {
    let text = std::fs::read_to_string(metrics_path).map_err(RunError::io(metrics_path))?;
    let mut zero = None;
    let mut random = None;
    for line in text.lines().skip(1) {
        if let Ok(rec) = serde_json::from_str::<MetricsRecord>(line) {
            if rec.eval_return_zero.is_some() {
                zero = rec.eval_return_zero;
                random = rec.eval_return_random;
            }
        }
    }
    Ok((zero, random))
}

pub fn run_preset(
    name: &str,
    out_root: &Path,
    updates: Option<usize>,
    seeds: usize,
    parallel: usize,
) -> Result<()> {
    std::fs::create_dir_all(out_root).map_err(RunError::io(out_root))?;
    if name == "finetune-pointmass" {
        return run_finetune_preset(out_root, updates, seeds);
    }
    let runs = preset_runs(name, updates, seeds)?;
    if parallel > 1 {
        run_children(&runs, out_root, parallel)?;
    } else {
        for run in &runs {
            println!("== {}", run.name);
            let mut clock = RealClock::start();
            run_train(&run.cfg, &out_root.join(&run.name), &mut clock)?;
        }
    }

    // Summary table of final evaluation returns.
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for run in &runs {
        let (zero, random) = last_evals(&out_root.join(&run.name).join("metrics.jsonl"))?;
        labels.push(run.name.clone());
        rows.push(vec![
            zero.unwrap_or(f64::NAN),
            random.unwrap_or(f64::NAN),
        ]);
    }
    let summary = out_root.join("summary.txt");
    let mut text = String::from("run eval_return_zero eval_return_random\n");
    for (label, row) in labels.iter().zip(&rows) {
        text.push_str(&format!("{label} {:?} {:?}\n", row[0], row[1]));
    }
    std::fs::write(&summary, text).map_err(RunError::io(&summary))?;
    println!("summary written to {}", summary.display());

    if name == "zero-sampling-sweep" {
        zero_sampling_tables(out_root, &runs)?;
    }
    Ok(())
}

/// Post-training sampling/step-count sweep over each trained checkpoint.
fn zero_sampling_tables(out_root: &Path, runs: &[PresetRun]) -> Result<()> {
    let mut rows = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let ckpt = out_root.join(&run.name).join("checkpoint-final.fpoc");
        let mut row = vec![i as f64];
        for (sampling, k) in [
            (EvalSampling::Zero, 5),
            (EvalSampling::Zero, 50),
            (EvalSampling::Random, 5),
            (EvalSampling::Random, 50),
        ] {
            let (mean, _) = commands::run_eval(&EvalCommand {
                checkpoint: ckpt.clone(),
                env: None,
                sampling,
                flow_steps: k,
                episodes: 32,
                seed: 1234,
                out: None,
                push: false,
            })?;
            row.push(mean);
        }
        rows.push(row);
    }
    let path = out_root.join("zero-sampling-table.txt");
    write_table(&path, &["seed", "zero_k5", "zero_k50", "random_k5", "random_k50"], &rows)?;
    println!("sampling table written to {}", path.display());
    Ok(())
}

/// Demos → behavior cloning → RL fine-tuning, per seed.
fn run_finetune_preset(out_root: &Path, updates: Option<usize>, seeds: usize) -> Result<()> {
    let demo_path = out_root.join("demos.txt");
    let mean_return = commands::run_gen_demos("pointmass", 50, 1, &demo_path)?;
    println!("expert demos: mean return {mean_return:.2}");

    let mut rows = Vec::new();
    for seed in 0..seeds as u64 {
        let ckpt = out_root.join(format!("bc-seed{seed}.fpoc"));
        let holdout = commands::run_pretrain(&PretrainCommand {
            demos: demo_path.clone(),
            epochs: 30,
            learning_rate: 1e-3,
            n_mc: 4,
            batch_size: 256,
            hidden: 32,
            seed,
            out: ckpt.clone(),
        })?;
        let (bc_mean, _) = commands::run_eval(&EvalCommand {
            checkpoint: ckpt.clone(),
            env: None,
            sampling: EvalSampling::Zero,
            flow_steps: 5,
            episodes: 32,
            seed: 999,
            out: None,
            push: false,
        })?;
        let mut cfg = commands::finetune_config_for(&EnvId::PointMass, 32, seed);
        cfg.num_envs = 128;
        cfg.epochs = 8;
        cfg.n_mc = 8;
        cfg.flow_steps_train = 16;
        cfg.learning_rate = 3e-4;
        if let Some(u) = updates {
            cfg.updates = u;
        }
        let summary = commands::run_finetune(
            &FinetuneCommand {
                base_checkpoint: ckpt,
                cfg,
                out_dir: out_root.join(format!("finetune-seed{seed}")),
            },
            &mut RealClock::start(),
        )?;
        let (ft_mean, _) = commands::run_eval(&EvalCommand {
            checkpoint: summary.final_checkpoint,
            env: None,
            sampling: EvalSampling::Zero,
            flow_steps: 5,
            episodes: 32,
            seed: 999,
            out: None,
            push: false,
        })?;
        println!(
            "seed {seed}: holdout CFM {holdout:.4}, BC return {bc_mean:.2}, fine-tuned {ft_mean:.2}"
        );
        rows.push(vec![seed as f64, holdout, bc_mean, ft_mean]);
    }
    write_table(
        &out_root.join("finetune-summary.txt"),
        &["seed", "bc_holdout_cfm", "bc_return", "finetuned_return"],
        &rows,
    )?;
    Ok(())
}

/// Spawn child `fpopp train` processes, at most `parallel` at a time.
fn run_children(runs: &[PresetRun], out_root: &Path, parallel: usize) -> Result<()> {
    let exe = std::env::current_exe()
        .map_err(|e| RunError::Format(format!("cannot locate executable: {e}")))?;
    let mut pending: Vec<(PathBuf, String)> = Vec::new();
    for run in runs {
        let dir = out_root.join(&run.name);
        std::fs::create_dir_all(&dir).map_err(RunError::io(&dir))?;
        let cfg_path = dir.join("config.toml");
        std::fs::write(&cfg_path, run.cfg.to_toml_string()).map_err(RunError::io(&cfg_path))?;
        pending.push((dir, run.name.clone()));
    }
    let mut queue = pending.into_iter();
    let mut active: Vec<(std::process::Child, String)> = Vec::new();
    loop {
        while active.len() < parallel {
            let Some((dir, name)) = queue.next() else { break };
            println!("== spawning {name}");
            let child = Command::new(&exe)
                .arg("train")
                .arg("--config")
                .arg(dir.join("config.toml"))
                .arg("--out")
                .arg(&dir)
                .spawn()
                .map_err(|e| RunError::Format(format!("spawn failed: {e}")))?;
            active.push((child, name));
        }
        if active.is_empty() {
            break;
        }
        let (mut child, name) = active.remove(0);
        let status = child
            .wait()
            .map_err(|e| RunError::Format(format!("wait failed: {e}")))?;
        if !status.success() {
            return Err(RunError::Format(format!(
                "preset run `{name}` failed with {status}"
            )));
        }
    }
    Ok(())
}
