//! Dense row-major `f64` tensors and the raw kernels behind every
//! differentiable operation.
//!
//! `Tensor` is plain data: shape plus a flat buffer. The tape in
//! [`crate::tape`] and the eager forward passes both call the same
//! kernel functions here, so a value computed with or without gradient
//! tracking is bit-identical.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Dense multi-dimensional array of `f64` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor { shape, data: vec![0.0; numel] }
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let numel: usize = shape.iter().product();
        Tensor { shape, data: vec![value; numel] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![1], data: vec![value] }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    /// Row-major matrix from nested construction parameters.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// Number of rows when viewed as a 2-D array (1-D tensors are one row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[..self.shape.len() - 1].iter().product(),
        }
    }

    /// Length of the last axis.
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    /// Borrow one row of a 2-D view.
    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.data)
    }

    /// Reinterpret with a new shape of equal element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Tensor {
        Tensor::new(shape, self.data.clone())
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn iter(&self) -> core::slice::Iter<'_, f64> {
        self.data.iter()
    }
}

fn assert_same_shape(a: &Tensor, b: &Tensor, op: &str) {
    assert_eq!(
        a.shape(),
        b.shape(),
        "{op}: shape mismatch {:?} vs {:?}",
        a.shape(),
        b.shape()
    );
}

/// Exact non-finite detection: exponent bits all set. Branchless, so it
/// vectorizes; used on every operation result.
pub(crate) fn all_finite(xs: &[f64]) -> bool {
    const EXP_MASK: u64 = 0x7ff0_0000_0000_0000;
    let mut acc = 0u64;
    for v in xs {
        acc |= ((v.to_bits() & EXP_MASK) == EXP_MASK) as u64;
    }
    acc == 0
}

/// Element count above which elementwise kernels split across threads.
#[cfg(feature = "parallel")]
const PAR_ELEM_THRESHOLD: usize = 1 << 17;

// ---- kernels -------------------------------------------------------------
//
// Free functions so the tape and eager paths share one implementation.
// Parallel splits assign each output element to exactly one thread, so
// results are identical to the sequential loop.

pub(crate) fn map2(a: &Tensor, b: &Tensor, op: &str, f: impl Fn(f64, f64) -> f64 + Sync) -> Tensor {
    assert_same_shape(a, b, op);
    let n = a.data.len();
    #[cfg(feature = "parallel")]
    if n >= PAR_ELEM_THRESHOLD {
        use rayon::prelude::*;
        let chunk = n.div_ceil(rayon::current_num_threads().max(1));
        let data = a
            .data
            .par_iter()
            .zip(b.data.par_iter())
            .with_min_len(chunk)
            .map(|(&x, &y)| f(x, y))
            .collect();
        return Tensor { shape: a.shape.clone(), data };
    }
    let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
    Tensor { shape: a.shape.clone(), data }
}

pub(crate) fn map1(a: &Tensor, f: impl Fn(f64) -> f64 + Sync) -> Tensor {
    let n = a.data.len();
    #[cfg(feature = "parallel")]
    if n >= PAR_ELEM_THRESHOLD {
        use rayon::prelude::*;
        let chunk = n.div_ceil(rayon::current_num_threads().max(1));
        let data =
            a.data.par_iter().with_min_len(chunk).map(|&x| f(x)).collect();
        return Tensor { shape: a.shape.clone(), data };
    }
    let data = a.data.iter().map(|&x| f(x)).collect();
    Tensor { shape: a.shape.clone(), data }
}

/// Uninitialized f64 buffer for gemm outputs written with beta = 0;
/// dgemm overwrites every element before anything reads it.
fn gemm_out_buffer(n: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(n);
    #[allow(clippy::uninit_vec)]
    unsafe {
        v.set_len(n);
    }
    v
}

pub fn add(a: &Tensor, b: &Tensor) -> Tensor {
    map2(a, b, "add", |x, y| x + y)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Tensor {
    map2(a, b, "sub", |x, y| x - y)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Tensor {
    map2(a, b, "mul", |x, y| x * y)
}

pub fn min(a: &Tensor, b: &Tensor) -> Tensor {
    map2(a, b, "min", |x, y| if x <= y { x } else { y })
}

pub fn scale(a: &Tensor, c: f64) -> Tensor {
    map1(a, |x| x * c)
}

pub fn add_scalar(a: &Tensor, c: f64) -> Tensor {
    map1(a, |x| x + c)
}

pub fn tanh(a: &Tensor) -> Tensor {
    map1(a, math::tanh)
}

pub fn exp(a: &Tensor) -> Tensor {
    map1(a, math::exp)
}

pub fn ln(a: &Tensor) -> Tensor {
    map1(a, math::ln)
}

pub fn square(a: &Tensor) -> Tensor {
    map1(a, |x| x * x)
}

pub fn clamp(a: &Tensor, lo: f64, hi: f64) -> Tensor {
    assert!(lo <= hi, "clamp: lo {lo} > hi {hi}");
    map1(a, |x| x.max(lo).min(hi))
}

/// Elementwise select: `a` where the mask entry is ≥ 0, else `b`.
pub fn select_by_sign(mask: &Tensor, a: &Tensor, b: &Tensor) -> Tensor {
    assert_same_shape(mask, a, "select_by_sign");
    assert_same_shape(mask, b, "select_by_sign");
    let data = mask
        .data
        .iter()
        .zip(a.data.iter().zip(&b.data))
        .map(|(&m, (&x, &y))| if m >= 0.0 { x } else { y })
        .collect();
    Tensor { shape: a.shape.clone(), data }
}

pub fn sum_all(a: &Tensor) -> Tensor {
    Tensor::scalar(a.data.iter().sum())
}

pub fn mean_all(a: &Tensor) -> Tensor {
    assert!(a.numel() > 0, "mean_all on empty tensor");
    Tensor::scalar(a.data.iter().sum::<f64>() / a.numel() as f64)
}

/// Sum over the last axis: (..., n) → (...).
pub fn sum_last(a: &Tensor) -> Tensor {
    let rows = a.rows();
    let cols = a.cols();
    assert!(a.shape().len() >= 1 && cols > 0, "sum_last needs a non-empty last axis");
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        out.push(a.row(r).iter().sum());
    }
    Tensor::new(a.shape[..a.shape.len() - 1].to_vec().max_one(), out)
}

/// Mean over the last axis: (..., n) → (...).
pub fn mean_last(a: &Tensor) -> Tensor {
    let cols = a.cols() as f64;
    let summed = sum_last(a);
    scale(&summed, 1.0 / cols)
}

/// L2 norm over the last axis: (..., n) → (...).
pub fn l2_norm_last(a: &Tensor) -> Tensor {
    let rows = a.rows();
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        out.push(math::sqrt(a.row(r).iter().map(|v| v * v).sum()));
    }
    Tensor::new(a.shape[..a.shape.len() - 1].to_vec().max_one(), out)
}

/// Broadcast-add a length-n vector to every row of a (m, n) matrix.
pub fn add_row(a: &Tensor, v: &Tensor) -> Tensor {
    let cols = a.cols();
    assert_eq!(v.numel(), cols, "add_row: vector length {} vs cols {}", v.numel(), cols);
    let mut data = Vec::with_capacity(a.numel());
    for r in 0..a.rows() {
        for (x, y) in a.row(r).iter().zip(&v.data) {
            data.push(x + y);
        }
    }
    Tensor { shape: a.shape.clone(), data }
}

/// Broadcast-multiply every row of a (m, n) matrix by a length-n vector.
pub fn mul_row(a: &Tensor, v: &Tensor) -> Tensor {
    let cols = a.cols();
    assert_eq!(v.numel(), cols, "mul_row: vector length {} vs cols {}", v.numel(), cols);
    let mut data = Vec::with_capacity(a.numel());
    for r in 0..a.rows() {
        for (x, y) in a.row(r).iter().zip(&v.data) {
            data.push(x * y);
        }
    }
    Tensor { shape: a.shape.clone(), data }
}

/// Column sums of a (m, n) matrix: (n,). Used for bias gradients.
pub fn sum_rows(a: &Tensor) -> Tensor {
    let cols = a.cols();
    let mut out = vec![0.0; cols];
    for r in 0..a.rows() {
        for (o, x) in out.iter_mut().zip(a.row(r)) {
            *o += x;
        }
    }
    Tensor::from_vec(out)
}

trait MaxOne {
    fn max_one(self) -> Vec<usize>;
}

impl MaxOne for Vec<usize> {
    // sum_last of a 1-D tensor yields a scalar with shape [1].
    fn max_one(self) -> Vec<usize> {
        if self.is_empty() {
            vec![1]
        } else {
            self
        }
    }
}

/// Number of rows under which matmul stays single-threaded.
#[cfg(feature = "parallel")]
const PAR_ROW_THRESHOLD: usize = 512;

/// `a` (m, k) times `b` (k, n) → (m, n).
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.shape().len(), 2, "matmul lhs must be 2-D, got {:?}", a.shape());
    assert_eq!(b.shape().len(), 2, "matmul rhs must be 2-D, got {:?}", b.shape());
    let (m, k) = (a.shape[0], a.shape[1]);
    let (k2, n) = (b.shape[0], b.shape[1]);
    assert_eq!(k, k2, "matmul: inner dims {k} vs {k2}");
    let mut out = gemm_out_buffer(m * n);
    gemm_rows(&a.data, &b.data, &mut out, m, k, n, false, false);
    Tensor { shape: vec![m, n], data: out }
}

/// Fused affine map: `a` (m, k) times `w` (k, n) plus a row-broadcast
/// bias (n,). The bias is written into the output buffer first and the
/// product accumulates on top, saving one full pass over the output.
pub fn matmul_bias(a: &Tensor, w: &Tensor, bias: &Tensor) -> Tensor {
    let (m, k) = (a.shape[0], a.shape[1]);
    let (k2, n) = (w.shape[0], w.shape[1]);
    assert_eq!(k, k2, "matmul_bias: inner dims {k} vs {k2}");
    assert_eq!(bias.numel(), n, "matmul_bias: bias length {} vs cols {n}", bias.numel());
    let mut out = Vec::with_capacity(m * n);
    for _ in 0..m {
        out.extend_from_slice(&bias.data);
    }
    gemm_rows(&a.data, &w.data, &mut out, m, k, n, false, true);
    Tensor { shape: vec![m, n], data: out }
}

/// `a` (m, k) times `b`ᵀ where `b` is (n, k) → (m, n).
pub fn matmul_bt(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.shape[0], a.shape[1]);
    let (n, k2) = (b.shape[0], b.shape[1]);
    assert_eq!(k, k2, "matmul_bt: inner dims {k} vs {k2}");
    let mut out = gemm_out_buffer(m * n);
    gemm_rows(&a.data, &b.data, &mut out, m, k, n, true, false);
    Tensor { shape: vec![m, n], data: out }
}

/// `a`ᵀ (k, m) … i.e. `a` is (m, k) … times `b` (m, n) → (k, n).
///
/// The contracted dimension `m` is large in training (batch rows), so
/// it is split into per-thread blocks whose partial products are summed
/// in a fixed order.
pub fn matmul_at(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.shape[0], a.shape[1]);
    let (m2, n) = (b.shape[0], b.shape[1]);
    assert_eq!(m, m2, "matmul_at: outer dims {m} vs {m2}");

    let block = |a_chunk: &[f64], b_chunk: &[f64], out: &mut [f64], rows: usize| unsafe {
        matrixmultiply::dgemm(
            k,
            rows,
            n,
            1.0,
            a_chunk.as_ptr(),
            1,
            k as isize, // aᵀ: row stride 1, col stride k
            b_chunk.as_ptr(),
            n as isize,
            1,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    };

    #[cfg(feature = "parallel")]
    if m >= PAR_ROW_THRESHOLD {
        use rayon::prelude::*;
        let threads = rayon::current_num_threads().max(1);
        let chunk = m.div_ceil(threads);
        let partials: Vec<Vec<f64>> = a
            .data
            .par_chunks(chunk * k)
            .zip(b.data.par_chunks(chunk * n))
            .map(|(ac, bc)| {
                let mut out = vec![0.0; k * n];
                block(ac, bc, &mut out, ac.len() / k);
                out
            })
            .collect();
        let mut out = vec![0.0; k * n];
        for p in partials {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v;
            }
        }
        return Tensor { shape: vec![k, n], data: out };
    }

    let mut out = vec![0.0; k * n];
    block(&a.data, &b.data, &mut out, m);
    Tensor { shape: vec![k, n], data: out }
}

/// dgemm on raw slices, splitting the `m` rows across threads when the
/// `parallel` feature is enabled. Each output element is produced by
/// exactly one dgemm call, so the result is identical to the sequential
/// computation.
fn gemm_rows(
    a: &[f64],
    b: &[f64],
    out: &mut [f64],
    m: usize,
    k: usize,
    n: usize,
    b_transposed: bool,
    accumulate: bool,
) {
    let (rsb, csb) = if b_transposed { (1isize, k as isize) } else { (n as isize, 1isize) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    let call = |a_chunk: &[f64], out_chunk: &mut [f64], rows: usize| unsafe {
        matrixmultiply::dgemm(
            rows,
            k,
            n,
            1.0,
            a_chunk.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            out_chunk.as_mut_ptr(),
            n as isize,
            1,
        );
    };

    #[cfg(feature = "parallel")]
    {
        if m >= PAR_ROW_THRESHOLD {
            use rayon::prelude::*;
            let chunk = m.div_ceil(rayon::current_num_threads().max(1));
            out.par_chunks_mut(chunk * n)
                .zip(a.par_chunks(chunk * k))
                .for_each(|(oc, ac)| call(ac, oc, ac.len() / k));
            return;
        }
    }
    call(a, out, m);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let n = b.shape()[1];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let av = a.data()[i * k + p];
                for j in 0..n {
                    out[i * n + j] += av * b.data()[p * n + j];
                }
            }
        }
        Tensor::matrix(m, n, out)
    }

    #[test]
    fn matmul_matches_naive() {
        let mut rng = crate::rngstream::rng_from_seed(7);
        use rand::Rng;
        let a = Tensor::matrix(5, 4, (0..20).map(|_| rng.random::<f64>() - 0.5).collect());
        let b = Tensor::matrix(4, 3, (0..12).map(|_| rng.random::<f64>() - 0.5).collect());
        let got = matmul(&a, &b);
        let want = naive_matmul(&a, &b);
        for (g, w) in got.data().iter().zip(want.data()) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }

    #[test]
    fn matmul_transposed_variants() {
        let a = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Tensor::matrix(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        // a @ b
        let ab = matmul(&a, &b);
        assert_eq!(ab.data(), &[58.0, 64.0, 139.0, 154.0]);
        // a @ (bᵀ)ᵀ via matmul_bt on bᵀ stored as (2,3)
        let bt = Tensor::matrix(2, 3, vec![7.0, 9.0, 11.0, 8.0, 10.0, 12.0]);
        let ab2 = matmul_bt(&a, &bt);
        assert_eq!(ab2.data(), ab.data());
        // aᵀ @ a: (3,3)
        let ata = matmul_at(&a, &a);
        assert_eq!(ata.shape(), &[3, 3]);
        assert_eq!(ata.data()[0], 1.0 * 1.0 + 4.0 * 4.0);
    }

    #[test]
    fn reductions_and_broadcast() {
        let a = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(sum_last(&a).data(), &[6.0, 15.0]);
        assert_eq!(mean_last(&a).data(), &[2.0, 5.0]);
        assert_eq!(sum_rows(&a).data(), &[5.0, 7.0, 9.0]);
        assert_eq!(sum_all(&a).item(), 21.0);
        assert_eq!(mean_all(&a).item(), 3.5);
        let v = Tensor::from_vec(vec![10.0, 20.0, 30.0]);
        assert_eq!(add_row(&a, &v).data(), &[11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
        assert_eq!(mul_row(&a, &v).data(), &[10.0, 40.0, 90.0, 40.0, 100.0, 180.0]);
        let n = l2_norm_last(&Tensor::matrix(1, 2, vec![3.0, 4.0]));
        assert_eq!(n.data(), &[5.0]);
    }

    #[test]
    fn select_and_min() {
        let mask = Tensor::from_vec(vec![1.0, -0.5, 0.0]);
        let a = Tensor::from_vec(vec![10.0, 10.0, 10.0]);
        let b = Tensor::from_vec(vec![20.0, 20.0, 20.0]);
        assert_eq!(select_by_sign(&mask, &a, &b).data(), &[10.0, 20.0, 10.0]);
        assert_eq!(
            min(&Tensor::from_vec(vec![-0.8]), &Tensor::from_vec(vec![-0.95])).data(),
            &[-0.95]
        );
    }

    #[test]
    #[should_panic(expected = "shape mismatch")]
    fn shape_mismatch_panics() {
        let _ = add(&Tensor::from_vec(vec![1.0]), &Tensor::from_vec(vec![1.0, 2.0]));
    }
}
