//! Running observation normalization with Welford aggregates.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::tensor::Tensor;

/// Per-dimension running mean/variance plus a clip bound on the
/// normalized output. Statistics update only when the caller passes
/// `update = true` (training rollouts); evaluation keeps them frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsNormalizer {
    pub count: f64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
    pub clip: f64,
}

impl ObsNormalizer {
    pub fn new(dim: usize, clip: f64) -> Self {
        assert!(clip > 0.0, "clip bound must be positive");
        ObsNormalizer { count: 0.0, mean: vec![0.0; dim], m2: vec![0.0; dim], clip }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Population variance per dimension; zero until the first update.
    pub fn variance(&self) -> Vec<f64> {
        if self.count < 1.0 {
            return vec![0.0; self.dim()];
        }
        self.m2.iter().map(|m2| m2 / self.count).collect()
    }

    fn absorb(&mut self, obs: &[f64]) {
        self.count += 1.0;
        for ((m, m2), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(obs) {
            let delta = x - *m;
            *m += delta / self.count;
            *m2 += delta * (x - *m);
        }
    }

    fn normalize_row(&self, obs: &[f64], out: &mut [f64]) {
        let var = self.variance();
        for ((o, &x), (&m, &v)) in
            out.iter_mut().zip(obs).zip(self.mean.iter().zip(var.iter()))
        {
            let z = if self.count < 1.0 {
                // No statistics yet: pass through (unit variance, zero mean).
                x
            } else {
                (x - m) / math::sqrt(v + 1e-8)
            };
            *o = z.max(-self.clip).min(self.clip);
        }
    }

    /// Normalize a batch of observations (rows). When `update` is set,
    /// each row is absorbed into the running statistics before it is
    /// normalized, in row order.
    pub fn normalize(&mut self, obs: &Tensor, update: bool) -> Tensor {
        assert_eq!(obs.cols(), self.dim(), "observation dim mismatch");
        let mut out = Tensor::zeros(obs.shape().to_vec());
        let cols = obs.cols();
        for r in 0..obs.rows() {
            if update {
                self.absorb(obs.row(r));
            }
            let row = obs.row(r).to_vec();
            self.normalize_row(&row, &mut out.data_mut()[r * cols..(r + 1) * cols]);
        }
        out
    }
}
