//! Small tanh MLPs with orthogonal initialization.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::math;
use crate::tape::{Tape, Var};
use crate::tensor::{self, Tensor};

/// One affine layer: weight (in, out) and bias (out,).
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Feed-forward network with tanh on every layer except the last.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Tape handles for one registration of the parameters.
pub struct MlpVars {
    layers: Vec<(Var, Var)>,
}

impl MlpVars {
    /// Pair up raw vars in `params()` order: weight, bias per layer.
    pub fn from_vars(vars: &[Var]) -> Self {
        assert!(vars.len() % 2 == 0, "expected (weight, bias) pairs");
        MlpVars { layers: vars.chunks(2).map(|c| (c[0], c[1])).collect() }
    }
}

impl Mlp {
    /// Build from layer sizes, e.g. `[obs, h, h, out]`.
    ///
    /// Hidden weights use orthogonal init with gain √2; the output
    /// layer uses `out_gain` (small gains give a near-zero initial
    /// output, which for flow actors makes the untrained policy
    /// approximately standard normal in action space). Biases start
    /// at zero.
    pub fn new(dims: &[usize], out_gain: f64, rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let last = layers.len() == dims.len() - 2;
            let gain = if last { out_gain } else { math::sqrt(2.0) };
            layers.push(Linear {
                weight: orthogonal(fan_in, fan_out, gain, rng),
                bias: Tensor::zeros(alloc::vec![fan_out]),
            });
        }
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.shape()[1]
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    /// Register all parameters on a tape.
    pub fn register(&self, tape: &mut Tape) -> MlpVars {
        let layers =
            self.layers.iter().map(|l| (tape.param(&l.weight), tape.param(&l.bias))).collect();
        MlpVars { layers }
    }

    /// Differentiable forward pass for a previously registered copy.
    pub fn forward(&self, tape: &mut Tape, vars: &MlpVars, input: Var) -> Result<Var> {
        let n = vars.layers.len();
        let mut x = input;
        for (i, &(w, b)) in vars.layers.iter().enumerate() {
            let z = tape.affine(x, w, b)?;
            x = if i + 1 < n { tape.tanh(z)? } else { z };
        }
        Ok(x)
    }

    /// Gradient-free forward pass. Calls the same kernels as the taped
    /// path, so values are bit-identical.
    pub fn forward_eval(&self, input: &Tensor) -> Tensor {
        let mut x = tensor::matmul_bias(input, &self.layers[0].weight, &self.layers[0].bias);
        for l in self.layers.iter().skip(1) {
            x = tensor::tanh(&x);
            x = tensor::matmul_bias(&x, &l.weight, &l.bias);
        }
        x
    }

    /// Gradients for this MLP's vars, in `params()` order. Missing
    /// gradients (parameters the root does not depend on) are zeros.
    pub fn grads(&self, tape: &Tape, vars: &MlpVars) -> Vec<Tensor> {
        vars.layers
            .iter()
            .zip(&self.layers)
            .flat_map(|(&(w, b), l)| {
                [
                    tape.grad(w).cloned().unwrap_or_else(|| Tensor::zeros(l.weight.shape().to_vec())),
                    tape.grad(b).cloned().unwrap_or_else(|| Tensor::zeros(l.bias.shape().to_vec())),
                ]
            })
            .collect()
    }
}

/// Orthogonal-style init: Gram-Schmidt on a standard-normal matrix,
/// scaled by `gain`. Orthonormalizes whichever side is shorter.
fn orthogonal(fan_in: usize, fan_out: usize, gain: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let (rows, cols, transpose) =
        if fan_in >= fan_out { (fan_in, fan_out, false) } else { (fan_out, fan_in, true) };
    // Columns of a (rows, cols) Gaussian matrix, orthonormalized.
    let mut m: Vec<Vec<f64>> = (0..cols)
        .map(|_| (0..rows).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    for c in 0..cols {
        for prev in 0..c {
            let dot: f64 = m[c].iter().zip(&m[prev]).map(|(a, b)| a * b).sum();
            let (head, tail) = m.split_at_mut(c);
            for (x, y) in tail[0].iter_mut().zip(&head[prev]) {
                *x -= dot * y;
            }
        }
        let norm = math::sqrt(m[c].iter().map(|v| v * v).sum::<f64>()).max(1e-12);
        for x in m[c].iter_mut() {
            *x *= gain / norm;
        }
    }
    let mut data = alloc::vec![0.0; fan_in * fan_out];
    for c in 0..cols {
        for r in 0..rows {
            if transpose {
                data[c * fan_out + r] = m[c][r];
            } else {
                data[r * fan_out + c] = m[c][r];
            }
        }
    }
    Tensor::matrix(fan_in, fan_out, data)
}
