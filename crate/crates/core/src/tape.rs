//! Reverse-mode autodiff over a per-pass tape.
//!
//! A [`Tape`] is built fresh for every forward pass: leaves are
//! registered, operations push nodes, and [`Tape::backward`] replays
//! them in reverse. Values are computed by the shared kernels in
//! [`crate::tensor`], so a forward pass on the tape is bit-identical
//! to the eager equivalent.
//!
//! Every operation validates that its result is finite and returns
//! [`Error::NumericFault`] otherwise; NaN and Inf never propagate.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Matmul(Var, Var),
    Affine { x: Var, w: Var, b: Var },
    AddRow(Var, Var),
    MulRow(Var, Var),
    AddBroadcast(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Exp(Var),
    Ln(Var),
    Square(Var),
    SumAll(Var),
    MeanAll(Var),
    SumLast(Var),
    MeanLast(Var),
    L2NormLast(Var),
    Clamp(Var, f64, f64),
    ClampSt(Var),
    SelectBySign { mask: Var, a: Var, b: Var },
    Reshape(Var),
}

struct Node {
    op: Op,
    value: Tensor,
    grad: Option<Tensor>,
}

/// Operation recorder; rebuilt per forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Register a leaf that participates in differentiation.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push_unchecked(Op::Leaf, t.clone())
    }

    /// Register a non-differentiated input. Gradients still flow to it
    /// (callers simply ignore them).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_unchecked(Op::Leaf, t)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of the last `backward` root w.r.t. `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Clear accumulated gradients, keeping the graph.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push_unchecked(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value, grad: None });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, value: Tensor, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NumericFault { op: name });
        }
        Ok(self.push_unchecked(op, value))
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    // ---- operations ------------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::add(self.val(a), self.val(b));
        self.push(Op::Add(a, b), v, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::sub(self.val(a), self.val(b));
        self.push(Op::Sub(a, b), v, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::mul(self.val(a), self.val(b));
        self.push(Op::Mul(a, b), v, "mul")
    }

    /// Elementwise minimum; ties route the gradient to the first input.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::min(self.val(a), self.val(b));
        self.push(Op::Min(a, b), v, "min")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::matmul(self.val(a), self.val(b));
        self.push(Op::Matmul(a, b), v, "matmul")
    }

    /// Fused `x @ w + bias` with the bias broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let v = tensor::matmul_bias(self.val(x), self.val(w), self.val(b));
        self.push(Op::Affine { x, w, b }, v, "affine")
    }

    /// Broadcast-add a vector to every row of a matrix (bias add).
    pub fn add_row(&mut self, a: Var, v: Var) -> Result<Var> {
        let out = tensor::add_row(self.val(a), self.val(v));
        self.push(Op::AddRow(a, v), out, "add_row")
    }

    /// Broadcast-multiply every row of a matrix by a vector.
    pub fn mul_row(&mut self, a: Var, v: Var) -> Result<Var> {
        let out = tensor::mul_row(self.val(a), self.val(v));
        self.push(Op::MulRow(a, v), out, "mul_row")
    }

    /// Add a one-element tensor to every entry of `a`.
    pub fn add_broadcast(&mut self, a: Var, s: Var) -> Result<Var> {
        assert_eq!(self.val(s).numel(), 1, "add_broadcast: rhs must be scalar");
        let sv = self.val(s).item();
        let out = tensor::add_scalar(self.val(a), sv);
        self.push(Op::AddBroadcast(a, s), out, "add_broadcast")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = tensor::scale(self.val(a), c);
        self.push(Op::Scale(a, c), v, "scale")
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = tensor::add_scalar(self.val(a), c);
        self.push(Op::AddScalar(a), v, "add_scalar")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let v = tensor::tanh(self.val(a));
        self.push(Op::Tanh(a), v, "tanh")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let v = tensor::exp(self.val(a));
        self.push(Op::Exp(a), v, "exp")
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        let v = tensor::ln(self.val(a));
        self.push(Op::Ln(a), v, "ln")
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let v = tensor::square(self.val(a));
        self.push(Op::Square(a), v, "square")
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let v = tensor::sum_all(self.val(a));
        self.push(Op::SumAll(a), v, "sum_all")
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let v = tensor::mean_all(self.val(a));
        self.push(Op::MeanAll(a), v, "mean_all")
    }

    pub fn sum_last(&mut self, a: Var) -> Result<Var> {
        let v = tensor::sum_last(self.val(a));
        self.push(Op::SumLast(a), v, "sum_last")
    }

    pub fn mean_last(&mut self, a: Var) -> Result<Var> {
        let v = tensor::mean_last(self.val(a));
        self.push(Op::MeanLast(a), v, "mean_last")
    }

    pub fn l2_norm_last(&mut self, a: Var) -> Result<Var> {
        let v = tensor::l2_norm_last(self.val(a));
        self.push(Op::L2NormLast(a), v, "l2_norm_last")
    }

    /// Plain clamp: zero gradient outside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let v = tensor::clamp(self.val(a), lo, hi);
        self.push(Op::Clamp(a, lo, hi), v, "clamp")
    }

    /// Straight-through clamp: forward equals plain clamp, backward is
    /// the identity inside and outside the interval.
    pub fn clamp_straight_through(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let v = tensor::clamp(self.val(a), lo, hi);
        self.push(Op::ClampSt(a), v, "clamp_straight_through")
    }

    /// `a` where `mask >= 0`, else `b`. The mask gets no gradient.
    pub fn select_by_sign(&mut self, mask: Var, a: Var, b: Var) -> Result<Var> {
        let v = tensor::select_by_sign(self.val(mask), self.val(a), self.val(b));
        self.push(Op::SelectBySign { mask, a, b }, v, "select_by_sign")
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let v = self.val(a).reshape(shape);
        self.push(Op::Reshape(a), v, "reshape")
    }

    // ---- backward ----------------------------------------------------------

    /// Reverse pass from a scalar root. Gradients accumulate across
    /// repeated calls until [`Tape::zero_grad`].
    pub fn backward(&mut self, root: Var) {
        assert!(!self.nodes.is_empty(), "backward on empty tape");
        assert_eq!(
            self.val(root).numel(),
            1,
            "backward root must be scalar, got shape {:?}",
            self.val(root).shape()
        );
        // Propagate through a scratch buffer so a second backward call
        // adds exactly one more ∂root/∂node to the stored gradients.
        // Each node's work entry is final when the reverse sweep reaches
        // it, so it is taken by value and merged immediately.
        let mut work: Vec<Option<Tensor>> = Vec::new();
        work.resize_with(self.nodes.len(), || None);
        acc(&mut work, root, Tensor::scalar(1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = work[i].take() else { continue };
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    acc(&mut work, a, g.clone());
                    acc(&mut work, b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut work, b, tensor::scale(&g, -1.0));
                    acc(&mut work, a, g.clone());
                }
                Op::Mul(a, b) => {
                    let da = tensor::mul(&g, self.val(b));
                    let db = tensor::mul(&g, self.val(a));
                    acc(&mut work, a, da);
                    acc(&mut work, b, db);
                }
                Op::Min(a, b) => {
                    let take_a = tensor::map2(self.val(a), self.val(b), "min_mask", |x, y| {
                        if x <= y {
                            1.0
                        } else {
                            0.0
                        }
                    });
                    let da = tensor::mul(&g, &take_a);
                    let db = tensor::sub(&g, &da);
                    acc(&mut work, a, da);
                    acc(&mut work, b, db);
                }
                Op::Matmul(a, b) => {
                    let da = tensor::matmul_bt(&g, self.val(b));
                    let db = tensor::matmul_at(self.val(a), &g);
                    acc(&mut work, a, da);
                    acc(&mut work, b, db);
                }
                Op::Affine { x, w, b } => {
                    let dx = tensor::matmul_bt(&g, self.val(w));
                    let dw = tensor::matmul_at(self.val(x), &g);
                    let db = tensor::sum_rows(&g);
                    acc(&mut work, x, dx);
                    acc(&mut work, w, dw);
                    acc(&mut work, b, db);
                }
                Op::AddRow(a, v) => {
                    acc(&mut work, v, tensor::sum_rows(&g));
                    acc(&mut work, a, g.clone());
                }
                Op::MulRow(a, v) => {
                    let da = tensor::mul_row(&g, self.val(v));
                    let dv = tensor::sum_rows(&tensor::mul(&g, self.val(a)));
                    acc(&mut work, a, da);
                    acc(&mut work, v, dv);
                }
                Op::AddBroadcast(a, s) => {
                    acc(&mut work, s, tensor::sum_all(&g).reshape(self.val(s).shape().to_vec()));
                    acc(&mut work, a, g.clone());
                }
                Op::Scale(a, c) => acc(&mut work, a, tensor::scale(&g, c)),
                Op::AddScalar(a) => acc(&mut work, a, g.clone()),
                Op::Tanh(a) => {
                    let y = self.val(Var(i));
                    let dy = tensor::map2(&g, y, "tanh_bwd", |gi, yi| gi * (1.0 - yi * yi));
                    acc(&mut work, a, dy);
                }
                Op::Exp(a) => {
                    let dy = tensor::mul(&g, self.val(Var(i)));
                    acc(&mut work, a, dy);
                }
                Op::Ln(a) => {
                    let dy = tensor::map2(&g, self.val(a), "ln_bwd", |gi, xi| gi / xi);
                    acc(&mut work, a, dy);
                }
                Op::Square(a) => {
                    let dy = tensor::map2(&g, self.val(a), "square_bwd", |gi, xi| gi * 2.0 * xi);
                    acc(&mut work, a, dy);
                }
                Op::SumAll(a) => {
                    let shape = self.val(a).shape().to_vec();
                    acc(&mut work, a, Tensor::full(shape, g.item()));
                }
                Op::MeanAll(a) => {
                    let shape = self.val(a).shape().to_vec();
                    let n = self.val(a).numel() as f64;
                    acc(&mut work, a, Tensor::full(shape, g.item() / n));
                }
                Op::SumLast(a) => {
                    acc(&mut work, a, broadcast_last(&g, self.val(a), 1.0));
                }
                Op::MeanLast(a) => {
                    let cols = self.val(a).cols() as f64;
                    acc(&mut work, a, broadcast_last(&g, self.val(a), 1.0 / cols));
                }
                Op::L2NormLast(a) => {
                    let x = self.val(a);
                    let y = self.val(Var(i));
                    let cols = x.cols();
                    let mut dx = Tensor::zeros(x.shape().to_vec());
                    for r in 0..x.rows() {
                        let norm = y.data()[r];
                        if norm > 0.0 {
                            let gr = g.data()[r] / norm;
                            for c in 0..cols {
                                dx.data_mut()[r * cols + c] = gr * x.data()[r * cols + c];
                            }
                        }
                    }
                    acc(&mut work, a, dx);
                }
                Op::Clamp(a, lo, hi) => {
                    let inside = tensor::map1(self.val(a), |x| {
                        if (lo..=hi).contains(&x) {
                            1.0
                        } else {
                            0.0
                        }
                    });
                    acc(&mut work, a, tensor::mul(&g, &inside));
                }
                Op::ClampSt(a) => acc(&mut work, a, g.clone()),
                Op::SelectBySign { mask, a, b } => {
                    let take_a = tensor::map1(self.val(mask), |m| if m >= 0.0 { 1.0 } else { 0.0 });
                    let da = tensor::mul(&g, &take_a);
                    let db = tensor::sub(&g, &da);
                    acc(&mut work, a, da);
                    acc(&mut work, b, db);
                }
                Op::Reshape(a) => {
                    let shape = self.val(a).shape().to_vec();
                    acc(&mut work, a, g.reshape(shape));
                }
            }
            match &mut self.nodes[i].grad {
                Some(t) => {
                    for (ti, gi) in t.data_mut().iter_mut().zip(g.data()) {
                        *ti += gi;
                    }
                }
                None => self.nodes[i].grad = Some(g),
            }
        }
    }
}

fn acc(work: &mut [Option<Tensor>], v: Var, delta: Tensor) {
    match &mut work[v.0] {
        Some(g) => {
            assert_eq!(g.shape(), delta.shape(), "gradient shape mismatch");
            for (gi, di) in g.data_mut().iter_mut().zip(delta.data()) {
                *gi += di;
            }
        }
        None => work[v.0] = Some(delta),
    }
}

/// Repeat each entry of `g` (shape = input shape minus last axis)
/// across the last axis of `like`, scaled by `c`.
fn broadcast_last(g: &Tensor, like: &Tensor, c: f64) -> Tensor {
    let cols = like.cols();
    let mut data = Vec::with_capacity(like.numel());
    for &gv in g.data() {
        for _ in 0..cols {
            data.push(gv * c);
        }
    }
    Tensor::new(like.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn sum_of_squares_gradient() {
        // root = sum(x²), x = [3] → grad = [6]
        let mut t = Tape::new();
        let x = t.param(&Tensor::from_vec(vec![3.0]));
        let sq = t.square(x).unwrap();
        let root = t.sum_all(sq).unwrap();
        t.backward(root);
        assert_eq!(t.grad(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn exp_of_difference_gradient() {
        // root = exp(c − x) at x = c → grad = −1
        let c = 0.7;
        let mut t = Tape::new();
        let cv = t.constant(Tensor::scalar(c));
        let x = t.param(&Tensor::scalar(c));
        let d = t.sub(cv, x).unwrap();
        let root = t.exp(d).unwrap();
        t.backward(root);
        assert!((t.grad(x).unwrap().item() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn saturated_clamp_gradients() {
        // clamp(7, −5, 5) → 5 with zero gradient; straight-through 5 with unit gradient.
        let mut t = Tape::new();
        let x = t.param(&Tensor::scalar(7.0));
        let plain = t.clamp(x, -5.0, 5.0).unwrap();
        assert_eq!(t.value(plain).item(), 5.0);
        t.backward(plain);
        assert_eq!(t.grad(x).unwrap().item(), 0.0);

        let mut t = Tape::new();
        let x = t.param(&Tensor::scalar(7.0));
        let st = t.clamp_straight_through(x, -5.0, 5.0).unwrap();
        assert_eq!(t.value(st).item(), 5.0);
        t.backward(st);
        assert_eq!(t.grad(x).unwrap().item(), 1.0);
    }

    #[test]
    fn straight_through_matches_plain_forward() {
        let xs = Tensor::from_vec(vec![-7.0, -5.0, -1.3, 0.0, 4.9, 5.0, 11.0]);
        let mut t = Tape::new();
        let x = t.param(&xs);
        let a = t.clamp(x, -5.0, 5.0).unwrap();
        let b = t.clamp_straight_through(x, -5.0, 5.0).unwrap();
        assert_eq!(t.value(a).data(), t.value(b).data());
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut t = Tape::new();
        let x = t.param(&Tensor::scalar(2.0));
        let sq = t.square(x).unwrap();
        let root = t.sum_all(sq).unwrap();
        t.backward(root);
        t.backward(root);
        assert_eq!(t.grad(x).unwrap().item(), 8.0);
        t.zero_grad();
        t.backward(root);
        assert_eq!(t.grad(x).unwrap().item(), 4.0);
    }

    #[test]
    fn matmul_chain_gradient() {
        // loss = sum(A @ B); dA = row-sums of Bᵀ broadcast, dB likewise.
        let mut t = Tape::new();
        let a = t.param(&Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let b = t.param(&Tensor::matrix(2, 2, vec![5.0, 6.0, 7.0, 8.0]));
        let ab = t.matmul(a, b).unwrap();
        let root = t.sum_all(ab).unwrap();
        t.backward(root);
        // d/dA[i,k] = Σ_j B[k,j]
        assert_eq!(t.grad(a).unwrap().data(), &[11.0, 15.0, 11.0, 15.0]);
        // d/dB[k,j] = Σ_i A[i,k]
        assert_eq!(t.grad(b).unwrap().data(), &[4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn min_routes_ties_to_first_input() {
        let mut t = Tape::new();
        let a = t.param(&Tensor::scalar(1.0));
        let b = t.param(&Tensor::scalar(1.0));
        let m = t.min(a, b).unwrap();
        t.backward(m);
        assert_eq!(t.grad(a).unwrap().item(), 1.0);
        assert_eq!(t.grad(b).unwrap().item(), 0.0);
    }

    #[test]
    fn select_by_sign_routes_gradient() {
        let mut t = Tape::new();
        let mask = t.constant(Tensor::from_vec(vec![1.0, -1.0, 0.0]));
        let a = t.param(&Tensor::from_vec(vec![2.0, 2.0, 2.0]));
        let b = t.param(&Tensor::from_vec(vec![3.0, 3.0, 3.0]));
        let s = t.select_by_sign(mask, a, b).unwrap();
        assert_eq!(t.value(s).data(), &[2.0, 3.0, 2.0]);
        let root = t.sum_all(s).unwrap();
        t.backward(root);
        assert_eq!(t.grad(a).unwrap().data(), &[1.0, 0.0, 1.0]);
        assert_eq!(t.grad(b).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn non_finite_result_is_a_numeric_fault() {
        let mut t = Tape::new();
        let x = t.param(&Tensor::scalar(-1.0));
        match t.ln(x) {
            Err(Error::NumericFault { op }) => assert_eq!(op, "ln"),
            other => panic!("expected numeric fault, got {other:?}"),
        }
    }

    #[test]
    #[should_panic(expected = "scalar")]
    fn non_scalar_backward_root_panics() {
        let mut t = Tape::new();
        let x = t.param(&Tensor::from_vec(vec![1.0, 2.0]));
        t.backward(x);
    }
}
