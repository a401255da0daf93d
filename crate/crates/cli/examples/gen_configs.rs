use fpopp_cli::config::{Algo, TrainConfig, TrustRegionOpt};

fn write(name: &str, cfg: &TrainConfig) {
    cfg.validate().unwrap();
    std::fs::write(format!("configs/{name}.toml"), cfg.to_toml_string()).unwrap();
    println!("configs/{name}.toml");
}

fn main() {
    // Full-scale pointmass runs with the shipped defaults.
    write("pointmass-fpopp", &TrainConfig::default());
    write("pointmass-fpo", &TrainConfig { algo: Algo::Fpo, ..Default::default() });
    let mut gauss = TrainConfig { algo: Algo::GaussPpo, ..Default::default() };
    gauss.objective.clip_eps = 0.2;
    write("pointmass-gauss-ppo", &gauss);

    // Desk-scale variants for the other environments.
    let small = TrainConfig {
        num_envs: 128,
        hidden_actor: 32,
        hidden_critic: 64,
        n_mc: 8,
        flow_steps_train: 16,
        epochs: 8,
        learning_rate: 3e-4,
        eval_interval: 20,
        ..Default::default()
    };
    write(
        "multigoal-fpopp",
        &TrainConfig { env: "multigoal".into(), updates: 240, ..small.clone() },
    );
    write(
        "multigoal-fpopp-push",
        &TrainConfig {
            env: "multigoal".into(),
            updates: 240,
            push_perturbations: true,
            ..small.clone()
        },
    );
    write(
        "correlated-fpopp",
        &TrainConfig { env: "correlated".into(), updates: 150, ..small.clone() },
    );
    let mut finetune = TrainConfig {
        updates: 100,
        update_normalizer: false,
        ..small
    };
    finetune.objective.trust_region = Some(TrustRegionOpt::Ppo);
    write("finetune-pointmass", &finetune);
}
