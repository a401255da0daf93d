use fpopp_core::tensor::{matmul, Tensor};
use std::time::Instant;

fn main() {
    for (m, k, n) in [(24576, 9, 64), (24576, 64, 64), (6144, 128, 128), (256, 64, 64)] {
        let a = Tensor::matrix(m, k, (0..m * k).map(|i| (i % 97) as f64 * 0.01).collect());
        let b = Tensor::matrix(k, n, (0..k * n).map(|i| (i % 89) as f64 * 0.01).collect());
        let reps = (2e9 / (m * k * n) as f64).max(1.0) as usize;
        let t0 = Instant::now();
        let mut acc = 0.0;
        for _ in 0..reps {
            acc += matmul(&a, &b).data()[0];
        }
        let dt = t0.elapsed().as_secs_f64();
        let gflops = (2.0 * (m * k * n) as f64 * reps as f64) / dt / 1e9;
        println!("({m:>6},{k:>4},{n:>4}) x{reps:<4} {gflops:6.2} GFLOP/s  (acc={acc:.1})");
    }
}
