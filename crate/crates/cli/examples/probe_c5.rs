use fpopp_cli::config::{Algo, TrainConfig};
use fpopp_cli::trainer::{RealClock, Trainer};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = TrainConfig {
        algo: Algo::Fpopp,
        env: "pointmass".to_string(),
        seed,
        ..Default::default()
    };
    let mut trainer = Trainer::new(cfg).unwrap();
    let mut clock = RealClock::start();
    for u in 0..300 {
        let r = trainer.run_one_update(u, &mut clock).unwrap();
        if let Some(z) = r.eval_return_zero {
            println!(
                "u={:<4} evalZ={:.1} perstep={:.3} evalR={:.1} t={:.0}s",
                u, z, z / 200.0, r.eval_return_random.unwrap(), r.wall_time
            );
            if z / 200.0 >= 0.87 {
                println!("threshold reached at update {u}");
                break;
            }
        }
    }
}
