use std::time::Instant;

fn bench(name: &str, f: impl Fn(f64) -> f64) {
    let n = 4_000_000usize;
    let xs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.001) % 4.0 - 2.0).collect();
    let t0 = Instant::now();
    let mut acc = 0.0;
    for &x in &xs {
        acc += f(x);
    }
    let dt = t0.elapsed().as_secs_f64();
    println!("{name:>12}: {:6.1} ns/elem (acc={acc:.3})", dt / n as f64 * 1e9);
}

fn main() {
    bench("libm tanh", libm::tanh);
    bench("std tanh", f64::tanh);
    bench("libm exp", libm::exp);
    bench("std exp", f64::exp);
    bench("exp tanh", |x| {
        let u = libm::exp(2.0 * x);
        1.0 - 2.0 / (u + 1.0)
    });
    bench("mul", |x| x * 1.0000001);
}
