use fpopp_core::tensor::{self, Tensor};
use std::time::Instant;

fn time(name: &str, mut f: impl FnMut() -> f64) {
    let reps = 20;
    let t0 = Instant::now();
    let mut acc = 0.0;
    for _ in 0..reps {
        acc += f();
    }
    println!("{name:>24}: {:7.2} ms (acc {acc:.2e})", t0.elapsed().as_secs_f64() / reps as f64 * 1e3);
}

fn main() {
    let rows = 24576;
    let x = Tensor::matrix(rows, 12, (0..rows * 12).map(|i| (i as f64 * 0.001).sin()).collect());
    let w1 = Tensor::matrix(12, 64, (0..12 * 64).map(|i| (i as f64 * 0.01).cos() * 0.1).collect());
    let b1 = Tensor::from_vec(vec![0.01; 64]);
    let h = Tensor::matrix(rows, 64, (0..rows * 64).map(|i| (i as f64 * 0.0001).sin()).collect());
    let w2 = Tensor::matrix(64, 64, (0..64 * 64).map(|i| (i as f64 * 0.01).sin() * 0.1).collect());
    let b2 = Tensor::from_vec(vec![0.01; 64]);

    time("affine 12->64", || tensor::matmul_bias(&x, &w1, &b1).data()[0]);
    time("affine 64->64", || tensor::matmul_bias(&h, &w2, &b2).data()[0]);
    time("tanh (rows,64)", || tensor::tanh(&h).data()[0]);
    time("square (rows,64)", || tensor::square(&h).data()[0]);
    time("is_finite (rows,64)", || tensor::sum_rows(&h).data()[0]);
    time("matmul_bt 64x64", || tensor::matmul_bt(&h, &w2).data()[0]);
    time("matmul_at -> (64,64)", || tensor::matmul_at(&h, &h).data()[0]);
    time("sum_last", || tensor::sum_last(&h).data()[0]);
    time("clone 12.6MB", || h.clone().data()[0]);

    // CFM pipeline decomposition.
    use fpopp_core::cfm::{self, ClampConfig};
    use fpopp_core::policy::{FlowActor, OutputParam};
    use fpopp_core::rngstream::rng_from_seed;
    let mut rng = rng_from_seed(1);
    let actor = FlowActor::new(6, 2, 64, OutputParam::Velocity, &mut rng);
    let b = 1536;
    let n_mc = 16;
    let obs = Tensor::matrix(b, 6, (0..b * 6).map(|i| (i as f64 * 0.01).sin()).collect());
    let actions = Tensor::matrix(b, 2, (0..b * 2).map(|i| (i as f64 * 0.02).cos()).collect());
    let mut samples = Vec::new();
    use rand::Rng;
    let _ = rng.random::<f64>();
    for _ in 0..b {
        samples.extend(cfm::draw_mc_samples(2, n_mc, &mut rng));
    }
    let clamp = ClampConfig::default();
    time("cfm eval full", || {
        cfm::cfm_losses_eval(&actor, &obs, &actions, &samples, n_mc, &clamp).unwrap()[0]
    });
    let obs_rep = {
        let mut data = Vec::with_capacity(b * n_mc * 6);
        for i in 0..b {
            for _ in 0..n_mc {
                data.extend_from_slice(obs.row(i));
            }
        }
        Tensor::matrix(b * n_mc, 6, data)
    };
    let a_tau = Tensor::matrix(b * n_mc, 2, vec![0.3; b * n_mc * 2]);
    let tau = vec![0.5; b * n_mc];
    time("velocity_eval only", || {
        actor.velocity_eval(&obs_rep, &a_tau, &tau).unwrap().data()[0]
    });
}

#[allow(dead_code)]
fn extra() {}
