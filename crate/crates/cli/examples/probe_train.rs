use fpopp_cli::config::{Algo, TrainConfig};
use fpopp_cli::trainer::{RealClock, Trainer};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let algo = args.get(1).map(|s| s.as_str()).unwrap_or("fpopp");
    let env = args.get(2).map(|s| s.as_str()).unwrap_or("pointmass");
    let updates: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(40);
    let num_envs: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(64);
    let seed: u64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0);

    let cfg = TrainConfig {
        algo: Algo::parse(algo).unwrap(),
        env: env.to_string(),
        seed,
        num_envs,
        updates,
        hidden_actor: 32,
        hidden_critic: 64,
        n_mc: 8,
        flow_steps_train: 16,
        epochs: 8,
        eval_interval: 5,
        eval_episodes: 8,
        learning_rate: 3e-4,
        ..Default::default()
    };
    let mut trainer = Trainer::new(cfg).unwrap();
    let mut clock = RealClock::start();
    let t0 = Instant::now();
    trainer
        .run(&mut clock, |r| {
            if r.eval_return_zero.is_some() || r.update < 3 {
                println!(
                    "u={:<4} steps={:<8} train={:?} evalZ={:?} evalR={:?} aloss={:?} vloss={:?} clip={:?} t={:.1}s",
                    r.update,
                    r.env_steps,
                    r.train_return_mean.map(|v| (v * 100.0).round() / 100.0),
                    r.eval_return_zero.map(|v| (v * 100.0).round() / 100.0),
                    r.eval_return_random.map(|v| (v * 100.0).round() / 100.0),
                    r.actor_loss.map(|v| (v * 1000.0).round() / 1000.0),
                    r.value_loss.map(|v| (v * 1000.0).round() / 1000.0),
                    r.ratio_clip_fraction.map(|v| (v * 100.0).round() / 100.0),
                    r.wall_time
                );
            }
            Ok(())
        })
        .unwrap();
    println!("total: {:.1}s", t0.elapsed().as_secs_f64());
}
