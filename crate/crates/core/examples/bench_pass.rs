use fpopp_core::cfm::{self, ClampConfig};
use fpopp_core::objectives::{fpo_actor_loss_tape, ObjectiveConfig};
use fpopp_core::policy::{FlowActor, OutputParam};
use fpopp_core::rngstream::rng_from_seed;
use fpopp_core::tape::Tape;
use fpopp_core::tensor::Tensor;
use rand::Rng;
use std::time::Instant;

fn main() {
    let b = 1536usize;
    let n_mc = 16usize;
    let obs_dim = 6;
    let act_dim = 2;
    let mut rng = rng_from_seed(1);
    let actor = FlowActor::new(obs_dim, act_dim, 64, OutputParam::Velocity, &mut rng);
    let obs = Tensor::matrix(b, obs_dim, (0..b * obs_dim).map(|_| rng.random::<f64>()).collect());
    let actions =
        Tensor::matrix(b, act_dim, (0..b * act_dim).map(|_| rng.random::<f64>()).collect());
    let mut samples = Vec::new();
    for _ in 0..b {
        samples.extend(cfm::draw_mc_samples(act_dim, n_mc, &mut rng));
    }
    let clamp = ClampConfig::default();
    let l_old = cfm::cfm_losses_eval(&actor, &obs, &actions, &samples, n_mc, &clamp).unwrap();
    let adv: Vec<f64> = (0..b).map(|_| rng.random::<f64>() - 0.5).collect();
    let objective = ObjectiveConfig::fpopp();

    for _ in 0..3 {
        let t0 = Instant::now();
        let mut tape = Tape::new();
        let vars = actor.mlp.register(&mut tape);
        let l_theta =
            cfm::cfm_losses_tape(&mut tape, &vars, &actor, &obs, &actions, &samples, n_mc, &clamp)
                .unwrap();
        let t1 = Instant::now();
        let (loss, _) =
            fpo_actor_loss_tape(&mut tape, l_theta, &l_old, &adv, n_mc, &objective).unwrap();
        let t2 = Instant::now();
        tape.backward(loss);
        let t3 = Instant::now();
        let grads = actor.mlp.grads(&tape, &vars);
        let t4 = Instant::now();
        println!(
            "cfm_fwd {:.0}ms  loss_fwd {:.0}ms  backward {:.0}ms  grads {:.1}ms  (|g0|={:.2e})",
            (t1 - t0).as_secs_f64() * 1e3,
            (t2 - t1).as_secs_f64() * 1e3,
            (t3 - t2).as_secs_f64() * 1e3,
            (t4 - t3).as_secs_f64() * 1e3,
            grads[0].data()[0].abs()
        );
        // Also time the eager loss for comparison.
        let t5 = Instant::now();
        let _ = cfm::cfm_losses_eval(&actor, &obs, &actions, &samples, n_mc, &clamp).unwrap();
        println!("eager cfm {:.0}ms", t5.elapsed().as_secs_f64() * 1e3);
    }
}
