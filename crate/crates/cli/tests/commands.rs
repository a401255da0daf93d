//! Library-level checks for the command layer and preset definitions.

use fpopp_cli::commands::{self, EvalCommand, FinetuneCommand, PretrainCommand};
use fpopp_cli::config::TrainConfig;
use fpopp_cli::presets::{preset_runs, PRESET_NAMES};
use fpopp_cli::trainer::{EvalSampling, FixedClock};

#[test]
fn preset_definitions_are_valid_configs() {
    for name in PRESET_NAMES {
        let runs = preset_runs(name, Some(3), 2).unwrap();
        if *name == "finetune-pointmass" {
            assert!(runs.is_empty());
            continue;
        }
        assert!(!runs.is_empty(), "{name} has no runs");
        for run in &runs {
            run.cfg.validate().unwrap_or_else(|e| panic!("{name}/{}: {e}", run.name));
            assert_eq!(run.cfg.updates, 3, "updates override not applied");
        }
        // Run names are unique.
        let mut names: Vec<&str> = runs.iter().map(|r| r.name.as_str()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), runs.len(), "{name} has duplicate run names");
    }
    assert!(preset_runs("bogus", None, 1).is_err());
}

#[test]
fn ablation_presets_cover_both_axes() {
    let ratio = preset_runs("ablation-ratio", None, 5).unwrap();
    assert_eq!(ratio.len(), 10);
    let tr = preset_runs("ablation-trust-region", None, 5).unwrap();
    assert_eq!(tr.len(), 15);
    let gauss = preset_runs("gauss-vs-fpopp", None, 5).unwrap();
    assert_eq!(gauss.len(), 50);
}

fn tiny_cfg() -> TrainConfig {
    TrainConfig {
        num_envs: 4,
        rollout_steps: 8,
        minibatches: 2,
        updates: 2,
        epochs: 2,
        n_mc: 2,
        flow_steps_train: 3,
        flow_steps_eval: 3,
        hidden_actor: 8,
        hidden_critic: 8,
        eval_interval: 2,
        eval_episodes: 2,
        ..Default::default()
    }
}

#[test]
fn train_eval_pipeline_writes_expected_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_cfg();
    let summary = commands::run_train(&cfg, dir.path(), &mut FixedClock).unwrap();
    assert!(summary.final_checkpoint.exists());
    assert!(summary.metrics_path.exists());
    assert!(dir.path().join("config.toml").exists());
    // Metrics: header + one record per update.
    let text = std::fs::read_to_string(&summary.metrics_path).unwrap();
    assert_eq!(text.lines().count(), 1 + cfg.updates);
    assert!(text.lines().next().unwrap().starts_with("{\"config\":"));

    // Eval twice with the same seed: identical, table written.
    let table = dir.path().join("returns.txt");
    let run_eval = || {
        commands::run_eval(&EvalCommand {
            checkpoint: summary.final_checkpoint.clone(),
            env: None,
            sampling: EvalSampling::Zero,
            flow_steps: 3,
            episodes: 3,
            seed: 9,
            out: Some(table.clone()),
            push: false,
        })
        .unwrap()
    };
    let (m1, s1) = run_eval();
    let (m2, s2) = run_eval();
    assert_eq!((m1, s1), (m2, s2));
    let table_text = std::fs::read_to_string(&table).unwrap();
    assert_eq!(table_text.lines().count(), 4);
    assert_eq!(table_text.lines().next().unwrap(), "episode return");
}

#[test]
fn pretrain_then_finetune_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let demos = dir.path().join("demos.txt");
    let mean = commands::run_gen_demos("pointmass", 2, 1, &demos).unwrap();
    assert!(mean > 0.0);

    let ckpt = dir.path().join("bc.fpoc");
    let holdout = commands::run_pretrain(&PretrainCommand {
        demos,
        epochs: 1,
        learning_rate: 1e-3,
        n_mc: 2,
        batch_size: 64,
        hidden: 8,
        seed: 0,
        out: ckpt.clone(),
    })
    .unwrap();
    assert!(holdout.is_finite());

    let mut cfg = tiny_cfg();
    cfg.update_normalizer = false;
    let summary = commands::run_finetune(
        &FinetuneCommand {
            base_checkpoint: ckpt,
            cfg,
            out_dir: dir.path().join("ft"),
        },
        &mut FixedClock,
    )
    .unwrap();
    assert!(summary.final_checkpoint.exists());

    // The fine-tuned checkpoint evaluates.
    let (m, _) = commands::run_eval(&EvalCommand {
        checkpoint: summary.final_checkpoint,
        env: Some("pointmass".to_string()),
        sampling: EvalSampling::Random,
        flow_steps: 3,
        episodes: 2,
        seed: 4,
        out: None,
        push: false,
    })
    .unwrap();
    assert!(m.is_finite());
}

#[test]
fn diag_commands_produce_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_cfg();
    let summary = commands::run_train(&cfg, dir.path(), &mut FixedClock).unwrap();

    let corr = dir.path().join("corr.txt");
    commands::run_diag_correlation(&summary.final_checkpoint, 300, 3, 0, &corr).unwrap();
    assert_eq!(std::fs::read_to_string(&corr).unwrap().lines().count(), 3);

    let field = dir.path().join("field.txt");
    commands::run_diag_flow_field(&summary.final_checkpoint, 0, 4, 8, 0, &field).unwrap();
    let text = std::fs::read_to_string(&field).unwrap();
    // Header plus 4 trajectories × 9 points.
    assert_eq!(text.lines().count(), 1 + 4 * 9);
    assert!(text.lines().next().unwrap().contains("trajectory"));

    let h = commands::run_diag_entropy(&summary.final_checkpoint, 400, 3, 3, 0).unwrap();
    assert!(h.is_finite());

    // Out-of-range dim index is a usage error.
    let err =
        commands::run_diag_flow_field(&summary.final_checkpoint, 7, 4, 8, 0, &field).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}
