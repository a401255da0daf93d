use fpopp_cli::config::{Algo, TrainConfig};
use fpopp_cli::trainer::Trainer;
use fpopp_core::advantage::compute_gae;
use fpopp_core::objectives::normalize_advantages;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let num_envs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(256);
    let hidden: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(64);
    let n_mc: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(16);
    let k: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(64);
    let epochs: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(16);

    let cfg = TrainConfig {
        algo: Algo::Fpopp,
        env: "pointmass".to_string(),
        num_envs,
        hidden_actor: hidden,
        hidden_critic: hidden * 2,
        n_mc,
        flow_steps_train: k,
        epochs,
        ..Default::default()
    };
    let mut trainer = Trainer::new(cfg).unwrap();
    for round in 0..3 {
        let t0 = Instant::now();
        let (mut buffer, last_values) = trainer.collect_rollout(round).unwrap();
        let t1 = Instant::now();
        compute_gae(&mut buffer, 0.99, 0.95, &last_values);
        normalize_advantages(&mut buffer.advantages);
        let t2 = Instant::now();
        trainer.update(round, &buffer).unwrap();
        let t3 = Instant::now();
        println!(
            "round {round}: rollout {:.2}s  gae {:.3}s  update {:.2}s",
            (t1 - t0).as_secs_f64(),
            (t2 - t1).as_secs_f64(),
            (t3 - t2).as_secs_f64()
        );
    }
}
