//! Central-finite-difference gradient verification.

use alloc::vec::Vec;

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Compare tape gradients of a scalar function against central finite
/// differences.
///
/// `f` rebuilds the scalar on a fresh tape from the registered
/// parameter vars; it must be deterministic. Returns the maximum over
/// all coordinates of `|analytic − fd| / max(1, |analytic|)`.
pub fn check_gradients<F>(params: &[Tensor], f: F, h: f64) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    assert!(h > 0.0, "step size must be positive");

    let eval = |p: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = p.iter().map(|t| tape.param(t)).collect();
        let root = f(&mut tape, &vars).expect("gradcheck function faulted");
        tape.value(root).item()
    };

    // Analytic gradients from one taped pass.
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|t| tape.param(t)).collect();
    let root = f(&mut tape, &vars).expect("gradcheck function faulted");
    assert_eq!(tape.value(root).numel(), 1, "gradcheck function must be scalar");
    tape.backward(root);
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| {
            tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape().to_vec()))
        })
        .collect();

    let mut max_err = 0.0f64;
    let mut work: Vec<Tensor> = params.to_vec();
    for i in 0..params.len() {
        for j in 0..params[i].numel() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let plus = eval(&work);
            work[i].data_mut()[j] = orig - h;
            let minus = eval(&work);
            work[i].data_mut()[j] = orig;

            let fd = (plus - minus) / (2.0 * h);
            let a = analytic[i].data()[j];
            let err = (a - fd).abs() / a.abs().max(1.0);
            if err > max_err {
                max_err = err;
            }
        }
    }
    max_err
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::Rng;

    #[test]
    fn sum_of_squares_is_exact() {
        let mut rng = crate::rngstream::rng_from_seed(11);
        let x = Tensor::from_vec((0..10).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect());
        let err = check_gradients(
            &[x],
            |tape, vars| {
                let sq = tape.square(vars[0])?;
                tape.sum_all(sq)
            },
            1e-5,
        );
        assert!(err < 1e-8, "err = {err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let x = Tensor::from_vec(vec![1.0, 2.0]);
        let err = check_gradients(&[x], |tape, _| Ok(tape.constant(Tensor::scalar(3.5))), 1e-5);
        assert_eq!(err, 0.0);
    }
}
