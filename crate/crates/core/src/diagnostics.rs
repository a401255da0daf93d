//! Post-hoc analysis: within-update gradient agreement, action
//! correlation matrices, flow-field trajectories, and a nearest-neighbor
//! entropy estimate.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::math;
use crate::policy::{FlowActor, GaussianActor, SampleInit};
use crate::tensor::{self, Tensor};

/// Actor handle for sampling-based diagnostics.
pub enum ActorRef<'a> {
    Flow(&'a FlowActor),
    Gaussian(&'a GaussianActor),
}

/// Mean cosine similarity between per-minibatch gradients and their
/// within-update average.
#[derive(Debug, Clone, Copy)]
pub struct CosineReport {
    /// NaN when undefined (all gradients excluded).
    pub mean_cosine: f64,
    pub included: usize,
    pub excluded: usize,
}

/// Mean of cos(g_j, ḡ) where ḡ averages all gradients. Gradients with
/// zero norm are excluded from the mean (their count is reported); a
/// zero-norm ḡ makes every cosine undefined and the result NaN.
pub fn grad_cosine_similarity(grads: &[Vec<f64>]) -> CosineReport {
    assert!(grads.len() >= 2, "need at least two gradients");
    let dim = grads[0].len();
    let mut mean = vec![0.0; dim];
    for g in grads {
        assert_eq!(g.len(), dim, "gradient length mismatch");
        for (m, x) in mean.iter_mut().zip(g) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= grads.len() as f64;
    }
    let mean_norm = math::sqrt(mean.iter().map(|v| v * v).sum());
    if mean_norm == 0.0 {
        return CosineReport { mean_cosine: f64::NAN, included: 0, excluded: grads.len() };
    }

    let mut total = 0.0;
    let mut included = 0usize;
    let mut excluded = 0usize;
    for g in grads {
        let norm = math::sqrt(g.iter().map(|v| v * v).sum());
        if norm == 0.0 {
            excluded += 1;
            continue;
        }
        let dot: f64 = g.iter().zip(&mean).map(|(a, b)| a * b).sum();
        total += dot / (norm * mean_norm);
        included += 1;
    }
    if included == 0 {
        CosineReport { mean_cosine: f64::NAN, included, excluded }
    } else {
        CosineReport { mean_cosine: total / included as f64, included, excluded }
    }
}

/// Pearson correlation matrix of sample columns.
#[derive(Debug, Clone)]
pub struct CorrelationResult {
    /// (d, d), symmetric, unit diagonal. Rows/columns of degenerate
    /// dimensions are NaN off-diagonal.
    pub matrix: Tensor,
    /// Dimensions with zero variance.
    pub degenerate_dims: Vec<usize>,
}

/// Correlation of an (M, d) sample matrix, M ≥ 2.
pub fn correlation_from_samples(samples: &Tensor) -> CorrelationResult {
    let m = samples.rows();
    let d = samples.cols();
    assert!(m >= 2, "need at least two samples");

    let mut mean = vec![0.0; d];
    for r in 0..m {
        for (mu, x) in mean.iter_mut().zip(samples.row(r)) {
            *mu += x;
        }
    }
    for mu in mean.iter_mut() {
        *mu /= m as f64;
    }

    let mut cov = vec![0.0; d * d];
    for r in 0..m {
        let row = samples.row(r);
        for i in 0..d {
            let di = row[i] - mean[i];
            for j in i..d {
                cov[i * d + j] += di * (row[j] - mean[j]);
            }
        }
    }
    let degenerate: Vec<usize> = (0..d).filter(|&i| cov[i * d + i] == 0.0).collect();

    let mut out = vec![0.0; d * d];
    for i in 0..d {
        out[i * d + i] = 1.0;
        for j in (i + 1)..d {
            let denom = math::sqrt(cov[i * d + i]) * math::sqrt(cov[j * d + j]);
            let c = if denom == 0.0 { f64::NAN } else { cov[i * d + j] / denom };
            out[i * d + j] = c;
            out[j * d + i] = c;
        }
    }
    CorrelationResult { matrix: Tensor::matrix(d, d, out), degenerate_dims: degenerate }
}

/// Sample `m` actions conditioned on one observation and correlate the
/// action dimensions. Flow actors sample with random initialization.
pub fn action_correlation(
    actor: &ActorRef<'_>,
    obs: &[f64],
    m: usize,
    flow_steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<CorrelationResult> {
    let samples = sample_actions(actor, obs, m, flow_steps, rng)?;
    Ok(correlation_from_samples(&samples))
}

/// Draw `m` actions at a fixed observation.
pub fn sample_actions(
    actor: &ActorRef<'_>,
    obs: &[f64],
    m: usize,
    flow_steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    match actor {
        ActorRef::Flow(f) => {
            let obs_rep = repeat_row(obs, m);
            f.sample(&obs_rep, SampleInit::Random, flow_steps, Some(rng))
        }
        ActorRef::Gaussian(g) => {
            let obs_rep = repeat_row(obs, m);
            Ok(g.sample(&obs_rep, rng)?.0)
        }
    }
}

fn repeat_row(row: &[f64], times: usize) -> Tensor {
    let mut data = Vec::with_capacity(row.len() * times);
    for _ in 0..times {
        data.extend_from_slice(row);
    }
    Tensor::matrix(times, row.len(), data)
}

/// Transport trajectories of `m` random noises through the flow field:
/// per trajectory, the (τ_k, action[dim]) polyline over `steps` Euler
/// steps (steps + 1 points including both endpoints).
pub fn flow_field_trajectories(
    actor: &FlowActor,
    obs: &[f64],
    dim: usize,
    m: usize,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<(f64, f64)>>> {
    assert!(dim < actor.action_dim, "action dim index out of range");
    assert!(steps >= 1, "need at least one integration step");
    use rand::Rng;
    let obs_rep = repeat_row(obs, m);
    let mut action = Tensor::matrix(
        m,
        actor.action_dim,
        (0..m * actor.action_dim).map(|_| rng.sample(StandardNormal)).collect(),
    );
    let mut polylines: Vec<Vec<(f64, f64)>> = (0..m)
        .map(|r| {
            let mut p = Vec::with_capacity(steps + 1);
            p.push((0.0, action.row(r)[dim]));
            p
        })
        .collect();
    let dt = 1.0 / steps as f64;
    for k in 0..steps {
        let tau = vec![k as f64 * dt; m];
        let v = actor.velocity_eval(&obs_rep, &action, &tau)?;
        action = tensor::add(&action, &tensor::scale(&v, dt));
        for (r, line) in polylines.iter_mut().enumerate() {
            line.push(((k + 1) as f64 * dt, action.row(r)[dim]));
        }
    }
    Ok(polylines)
}

/// Kozachenko–Leonenko entropy estimate from k-th nearest-neighbor
/// distances of an (M, d) sample:
/// `Ĥ = ψ(M) − ψ(k) + ln V_d + (d/M)·Σ ln r_k`.
/// Distances are floored at 1e-12 so duplicate points stay finite.
pub fn knn_entropy(samples: &Tensor, k: usize) -> f64 {
    let m = samples.rows();
    let d = samples.cols();
    assert!(k >= 1 && m > k, "need M > k ≥ 1");

    let mut log_dist_sum = 0.0;
    let mut nearest = vec![f64::INFINITY; k];
    for i in 0..m {
        nearest.iter_mut().for_each(|x| *x = f64::INFINITY);
        let ri = samples.row(i);
        for j in 0..m {
            if i == j {
                continue;
            }
            let dist_sq: f64 =
                ri.iter().zip(samples.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            // Insertion into the running k smallest.
            if dist_sq < nearest[k - 1] {
                let mut pos = k - 1;
                while pos > 0 && nearest[pos - 1] > dist_sq {
                    nearest[pos] = nearest[pos - 1];
                    pos -= 1;
                }
                nearest[pos] = dist_sq;
            }
        }
        let r_k = math::sqrt(nearest[k - 1]).max(1e-12);
        log_dist_sum += math::ln(r_k);
    }
    (d as f64 / m as f64) * log_dist_sum
        + math::ln(math::unit_ball_volume(d))
        + math::digamma(m as f64)
        - math::digamma(k as f64)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations,
/// ascending. Verification tool for correlation-matrix PSD checks.
pub fn symmetric_eigenvalues(mat: &Tensor) -> Vec<f64> {
    let d = mat.cols();
    assert_eq!(mat.rows(), d, "matrix must be square");
    let mut a = mat.data().to_vec();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += a[p * d + q] * a[p * d + q];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + math::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + math::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = t * c;
                for i in 0..d {
                    let aip = a[i * d + p];
                    let aiq = a[i * d + q];
                    a[i * d + p] = c * aip - s * aiq;
                    a[i * d + q] = s * aip + c * aiq;
                }
                for i in 0..d {
                    let api = a[p * d + i];
                    let aqi = a[q * d + i];
                    a[p * d + i] = c * api - s * aqi;
                    a[q * d + i] = s * api + c * aqi;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..d).map(|i| a[i * d + i]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig
}
