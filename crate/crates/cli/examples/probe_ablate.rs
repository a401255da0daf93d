use fpopp_cli::agent::ActorNet;
use fpopp_cli::config::{Algo, TrainConfig};
use fpopp_cli::trainer::{EvalSampling, FixedClock, Trainer};
use fpopp_core::diagnostics::{self, ActorRef};
use fpopp_core::rngstream::rng_from_seed;

fn base(env: &str, seed: u64) -> TrainConfig {
    TrainConfig {
        env: env.to_string(),
        seed,
        num_envs: 32,
        updates: 300,
        epochs: 16,
        hidden_actor: 32,
        hidden_critic: 64,
        n_mc: 4,
        flow_steps_train: 8,
        learning_rate: 3e-4,
        eval_interval: 50,
        eval_episodes: 32,
        ..Default::default()
    }
}

fn run(tag: &str, cfg: TrainConfig) {
    let updates = cfg.updates;
    let mut t = Trainer::new(cfg).unwrap();
    let mut clock = FixedClock;
    let mut faults = 0;
    let mut curve = Vec::new();
    for u in 0..updates {
        match t.run_one_update(u, &mut clock) {
            Ok(r) => {
                if r.numeric_fault {
                    faults += 1;
                }
                if let Some(z) = r.eval_return_zero {
                    curve.push(format!("{u}:{z:.0}"));
                }
            }
            Err(e) => {
                println!("{tag}: ABORT at u={u}: {e}");
                return;
            }
        }
    }
    let z = t.evaluate_current(EvalSampling::Zero, 777).unwrap();
    let r = t.evaluate_current(EvalSampling::Random, 777).unwrap();
    println!(
        "{tag}: zero={:.2} random={:.2} faults={faults} curve=[{}]",
        z.mean,
        r.mean,
        curve.join(" ")
    );
}

fn main() {
    let what = std::env::args().nth(1).unwrap_or_else(|| "c6".into());
    match what.as_str() {
        "c6" => {
            for seed in [0u64, 1, 2] {
                for clip in [0.04] {
                    let mut fpo = base("pointmass", seed);
                    fpo.algo = Algo::Fpo;
                    fpo.objective.clip_eps = clip;
                    run(&format!("fpo   clip={clip} seed={seed}"), fpo);
                    let mut fpopp = base("pointmass", seed);
                    fpopp.objective.clip_eps = clip;
                    run(&format!("fpopp clip={clip} seed={seed}"), fpopp);
                }
            }
        }
        "c6v" => {
            // Harder variants: ratio noise via tiny n_mc, plus pushes.
            for (tag, n_mc, push, updates) in
                [("nmc2", 2usize, false, 200usize), ("push", 4, true, 200), ("nmc2push", 2, true, 200)]
            {
                for seed in [0u64, 1] {
                    for algo in [Algo::Fpo, Algo::Fpopp] {
                        let mut cfg = base("pointmass", seed);
                        cfg.algo = algo;
                        cfg.objective.clip_eps = 0.04;
                        cfg.n_mc = n_mc;
                        cfg.push_perturbations = push;
                        cfg.updates = updates;
                        run(&format!("{tag} {} seed={seed}", algo.name()), cfg);
                    }
                }
            }
        }
        "c7" => {
            for seed in [0u64, 1] {
                let mut cfg = base("multigoal", seed);
                cfg.updates = 200;
                run(&format!("multigoal seed={seed}"), cfg);
            }
        }
        "c8" => {
            for seed in [0u64, 1] {
                let mut cfg = base("correlated", seed);
                cfg.updates = 150;
                cfg.eval_interval = 1_000_000;
                let updates = cfg.updates;
                let mut t = Trainer::new(cfg).unwrap();
                let corr = |t: &Trainer| {
                    let ActorNet::Flow(actor) = &t.agent.actor else { unreachable!() };
                    let mut rng = rng_from_seed(seed + 100);
                    let res = diagnostics::action_correlation(
                        &ActorRef::Flow(actor),
                        &[0.0; 4],
                        10_000,
                        8,
                        &mut rng,
                    )
                    .unwrap();
                    (res.matrix.data()[1], res.matrix.data()[2 * 4 + 3])
                };
                let before = corr(&t);
                let mut clock = FixedClock;
                for u in 0..updates {
                    t.run_one_update(u, &mut clock).unwrap();
                }
                let after = corr(&t);
                let z = t.evaluate_current(EvalSampling::Zero, 777).unwrap();
                let r = t.evaluate_current(EvalSampling::Random, 777).unwrap();
                println!(
                    "correlated seed={seed}: zero={:.2} random={:.2} corr12 {:.3}->{:.3} corr34 {:.3}->{:.3}",
                    z.mean, r.mean, before.0, after.0, before.1, after.1
                );
            }
        }
        _ => panic!("c6|c7|c8"),
    }
}
