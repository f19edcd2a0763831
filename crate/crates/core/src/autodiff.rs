//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] is an append-only list of nodes. Every recorded operation
//! stores its operand indices together with whatever it needs to form the
//! local partial derivatives, so [`Tape::backward`] is a single sweep over
//! the nodes in reverse order. Operands always precede their results, which
//! makes the list a topological order by construction.
//!
//! One tape is meant to live for one training step: record, backward, drop.

use std::cell::{Ref, RefCell};
use std::fmt;

use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("shape mismatch in {op}: lhs is {lhs:?}, rhs is {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("rowwise jacobian for {rows} rows of {out}x{inp} needs {expected} entries, got {found}")]
    JacobianLength {
        rows: usize,
        out: usize,
        inp: usize,
        expected: usize,
        found: usize,
    },
}

pub type Result<T> = std::result::Result<T, AdError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    MatMul,
    /// `lhs · rhsᵀ`, the dense-layer product.
    MatMulNt,
    /// Adds a `1 × n` row to each row of the left operand.
    AddRow,
    Dot,
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryOp {
    Tanh,
    Relu,
    Arctan,
    Negate,
    Scale(f64),
    Square,
    Sqrt,
    /// Euclidean norm of the whole tensor.
    L2Norm,
    /// Euclidean norm of each row, `B × n → B × 1`.
    RowNorms,
    Sum,
    Mean,
}

enum Op {
    Leaf,
    Binary(BinaryOp, usize, usize),
    /// Elementwise map whose derivative tensor is stored at record time.
    Elementwise { x: usize, deriv: Tensor },
    Reduce(UnaryOp, usize),
    /// Row-by-row vector function with per-row Jacobians (`out × in`,
    /// row-major, concatenated over rows).
    Rowwise { x: usize, jac: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tape({} nodes)", self.len())
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}({:?})", self.idx, self.value())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var {
            tape: self,
            idx: nodes.len() - 1,
        }
    }

    /// Records an input. Parameters and constants are both leaves; the
    /// difference is only whether the caller asks for their gradient.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.leaf(Tensor::scalar(value))
    }

    fn value_of(&self, idx: usize) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[idx].value)
    }

    pub fn record_binary<'t>(&'t self, op: BinaryOp, lhs: Var<'t>, rhs: Var<'t>) -> Result<Var<'t>> {
        debug_assert!(std::ptr::eq(lhs.tape, self) && std::ptr::eq(rhs.tape, self));
        let value = {
            let a = self.value_of(lhs.idx);
            let b = self.value_of(rhs.idx);
            let mismatch = || AdError::ShapeMismatch {
                op: binary_name(op),
                lhs: a.shape(),
                rhs: b.shape(),
            };
            match op {
                BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul => {
                    if a.shape() != b.shape() {
                        return Err(mismatch());
                    }
                    match op {
                        BinaryOp::Add => a.zip_map(&b, |x, y| x + y),
                        BinaryOp::Sub => a.zip_map(&b, |x, y| x - y),
                        _ => a.zip_map(&b, |x, y| x * y),
                    }
                }
                BinaryOp::MatMul => {
                    if a.cols() != b.rows() {
                        return Err(mismatch());
                    }
                    a.matmul(&b)
                }
                BinaryOp::MatMulNt => {
                    if a.cols() != b.cols() {
                        return Err(mismatch());
                    }
                    a.matmul_nt(&b)
                }
                BinaryOp::AddRow => {
                    if b.rows() != 1 || a.cols() != b.cols() {
                        return Err(mismatch());
                    }
                    a.add_row_broadcast(&b)
                }
                BinaryOp::Dot => {
                    if a.shape() != b.shape() {
                        return Err(mismatch());
                    }
                    Tensor::scalar(a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum())
                }
                BinaryOp::Concat => {
                    if a.rows() != b.rows() {
                        return Err(mismatch());
                    }
                    a.concat_cols(&b)
                }
            }
        };
        Ok(self.push(value, Op::Binary(op, lhs.idx, rhs.idx)))
    }

    pub fn record_unary<'t>(&'t self, op: UnaryOp, x: Var<'t>) -> Var<'t> {
        debug_assert!(std::ptr::eq(x.tape, self));
        let (value, node) = {
            let v = self.value_of(x.idx);
            match op {
                UnaryOp::Tanh => {
                    let y = v.map(f64::tanh);
                    let d = y.map(|t| 1.0 - t * t);
                    (y, Op::Elementwise { x: x.idx, deriv: d })
                }
                UnaryOp::Relu => {
                    let y = v.map(|t| if t > 0.0 { t } else { 0.0 });
                    let d = v.map(|t| if t > 0.0 { 1.0 } else { 0.0 });
                    (y, Op::Elementwise { x: x.idx, deriv: d })
                }
                UnaryOp::Arctan => {
                    let y = v.map(f64::atan);
                    let d = v.map(|t| 1.0 / (1.0 + t * t));
                    (y, Op::Elementwise { x: x.idx, deriv: d })
                }
                UnaryOp::Negate => (
                    v.map(|t| -t),
                    Op::Elementwise {
                        x: x.idx,
                        deriv: Tensor::filled(v.rows(), v.cols(), -1.0),
                    },
                ),
                UnaryOp::Scale(c) => (
                    v.map(|t| c * t),
                    Op::Elementwise {
                        x: x.idx,
                        deriv: Tensor::filled(v.rows(), v.cols(), c),
                    },
                ),
                UnaryOp::Square => (
                    v.map(|t| t * t),
                    Op::Elementwise {
                        x: x.idx,
                        deriv: v.map(|t| 2.0 * t),
                    },
                ),
                UnaryOp::Sqrt => {
                    let y = v.map(f64::sqrt);
                    let d = y.map(|s| 0.5 / s);
                    (y, Op::Elementwise { x: x.idx, deriv: d })
                }
                UnaryOp::L2Norm => (Tensor::scalar(v.norm()), Op::Reduce(op, x.idx)),
                UnaryOp::RowNorms => {
                    let norms = (0..v.rows())
                        .map(|r| v.row_slice(r).iter().map(|t| t * t).sum::<f64>().sqrt())
                        .collect();
                    (Tensor::from_vec(v.rows(), 1, norms), Op::Reduce(op, x.idx))
                }
                UnaryOp::Sum => (Tensor::scalar(v.sum()), Op::Reduce(op, x.idx)),
                UnaryOp::Mean => (
                    Tensor::scalar(v.sum() / v.len() as f64),
                    Op::Reduce(op, x.idx),
                ),
            }
        };
        self.push(value, node)
    }

    /// Records `y_r = f(x_r)` for each row `r`, where the caller has already
    /// evaluated `value` and the per-row Jacobians `∂y_r/∂x_r`.
    pub fn record_rowwise<'t>(&'t self, x: Var<'t>, value: Tensor, jac: Vec<f64>) -> Result<Var<'t>> {
        let (rows, inp) = self.value_of(x.idx).shape();
        if value.rows() != rows {
            return Err(AdError::ShapeMismatch {
                op: "rowwise",
                lhs: (rows, inp),
                rhs: value.shape(),
            });
        }
        let expected = rows * value.cols() * inp;
        if jac.len() != expected {
            return Err(AdError::JacobianLength {
                rows,
                out: value.cols(),
                inp,
                expected,
                found: jac.len(),
            });
        }
        Ok(self.push(value, Op::Rowwise { x: x.idx, jac }))
    }

    /// Computes `∂loss/∂node` for every node that precedes `loss`.
    ///
    /// Adjoints are accumulated into a fresh buffer on each call, so calling
    /// this twice on the same tape yields the same answer.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let shape = nodes[loss.idx].value.shape();
        if shape != (1, 1) {
            return Err(AdError::NonScalarLoss(shape));
        }
        let mut adj: Vec<Option<Tensor>> = (0..=loss.idx).map(|_| None).collect();
        adj[loss.idx] = Some(Tensor::scalar(1.0));

        fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
            match slot {
                Some(acc) => acc.add_assign(&g),
                None => *slot = Some(g),
            }
        }

        for i in (0..=loss.idx).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Binary(op, a, b) => {
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    let (ga, gb) = match op {
                        BinaryOp::Add => (g.clone(), g.clone()),
                        BinaryOp::Sub => (g.clone(), g.map(|t| -t)),
                        BinaryOp::Mul => (g.zip_map(bv, |x, y| x * y), g.zip_map(av, |x, y| x * y)),
                        BinaryOp::MatMul => (g.matmul_nt(bv), av.matmul_tn(&g)),
                        BinaryOp::MatMulNt => (g.matmul(bv), g.matmul_tn(av)),
                        BinaryOp::AddRow => (g.clone(), g.sum_rows()),
                        BinaryOp::Dot => {
                            let s = g.item();
                            (bv.map(|t| s * t), av.map(|t| s * t))
                        }
                        BinaryOp::Concat => {
                            let split = av.cols();
                            let mut ga = Tensor::zeros(av.rows(), av.cols());
                            let mut gb = Tensor::zeros(bv.rows(), bv.cols());
                            for r in 0..g.rows() {
                                let row = g.row_slice(r);
                                ga.row_slice_mut(r).copy_from_slice(&row[..split]);
                                gb.row_slice_mut(r).copy_from_slice(&row[split..]);
                            }
                            (ga, gb)
                        }
                    };
                    accumulate(&mut adj[*a], ga);
                    accumulate(&mut adj[*b], gb);
                }
                Op::Elementwise { x, deriv } => {
                    accumulate(&mut adj[*x], g.zip_map(deriv, |a, d| a * d));
                }
                Op::Reduce(op, x) => {
                    let xv = &nodes[*x].value;
                    let gx = match op {
                        UnaryOp::L2Norm => {
                            let n = node.value.item();
                            if n == 0.0 {
                                Tensor::zeros(xv.rows(), xv.cols())
                            } else {
                                let s = g.item() / n;
                                xv.map(|t| s * t)
                            }
                        }
                        UnaryOp::RowNorms => {
                            let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                            for r in 0..xv.rows() {
                                let n = node.value.get(r, 0);
                                if n == 0.0 {
                                    continue;
                                }
                                let s = g.get(r, 0) / n;
                                for (o, v) in gx.row_slice_mut(r).iter_mut().zip(xv.row_slice(r)) {
                                    *o = s * v;
                                }
                            }
                            gx
                        }
                        UnaryOp::Sum => Tensor::filled(xv.rows(), xv.cols(), g.item()),
                        UnaryOp::Mean => {
                            Tensor::filled(xv.rows(), xv.cols(), g.item() / xv.len() as f64)
                        }
                        _ => unreachable!("elementwise ops never reduce"),
                    };
                    accumulate(&mut adj[*x], gx);
                }
                Op::Rowwise { x, jac } => {
                    let xv = &nodes[*x].value;
                    let (inp, out) = (xv.cols(), node.value.cols());
                    let mut gx = Tensor::zeros(xv.rows(), inp);
                    for r in 0..xv.rows() {
                        let j = &jac[r * out * inp..(r + 1) * out * inp];
                        let gr = g.row_slice(r);
                        let dst = gx.row_slice_mut(r);
                        for o in 0..out {
                            for c in 0..inp {
                                dst[c] += gr[o] * j[o * inp + c];
                            }
                        }
                    }
                    accumulate(&mut adj[*x], gx);
                }
            }
            adj[i] = Some(g);
        }

        let shapes = nodes[..=loss.idx].iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { adj, shapes })
    }
}

fn binary_name(op: BinaryOp) -> &'static str {
    match op {
        BinaryOp::Add => "add",
        BinaryOp::Sub => "sub",
        BinaryOp::Mul => "mul",
        BinaryOp::MatMul => "matmul",
        BinaryOp::MatMulNt => "matmul_nt",
        BinaryOp::AddRow => "add_row",
        BinaryOp::Dot => "dot",
        BinaryOp::Concat => "concat",
    }
}

/// Adjoints produced by one backward sweep.
pub struct Gradients {
    adj: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// `∂loss/∂v`; zero for nodes the loss does not depend on.
    pub fn wrt(&self, v: Var<'_>) -> Tensor {
        match self.adj.get(v.idx) {
            Some(Some(g)) => g.clone(),
            Some(None) => {
                let (r, c) = self.shapes[v.idx];
                Tensor::zeros(r, c)
            }
            None => {
                let (r, c) = v.shape();
                Tensor::zeros(r, c)
            }
        }
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn index(&self) -> usize {
        self.idx
    }

    pub fn value(&self) -> Tensor {
        self.tape.value_of(self.idx).clone()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.value_of(self.idx).shape()
    }

    /// The value of a `1 × 1` node.
    pub fn item(&self) -> f64 {
        self.tape.value_of(self.idx).item()
    }

    pub fn add(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.tape.record_binary(BinaryOp::Add, self, rhs)
    }

    pub fn sub(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.tape.record_binary(BinaryOp::Sub, self, rhs)
    }

    pub fn mul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.tape.record_binary(BinaryOp::Mul, self, rhs)
    }

    pub fn matmul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.tape.record_binary(BinaryOp::MatMul, self, rhs)
    }

    pub fn matmul_nt(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.tape.record_binary(BinaryOp::MatMulNt, self, rhs)
    }

    pub fn add_row(self, row: Var<'t>) -> Result<Var<'t>> {
        self.tape.record_binary(BinaryOp::AddRow, self, row)
    }

    pub fn dot(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.tape.record_binary(BinaryOp::Dot, self, rhs)
    }

    pub fn concat(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.tape.record_binary(BinaryOp::Concat, self, rhs)
    }

    pub fn tanh(self) -> Var<'t> {
        self.tape.record_unary(UnaryOp::Tanh, self)
    }

    pub fn relu(self) -> Var<'t> {
        self.tape.record_unary(UnaryOp::Relu, self)
    }

    pub fn arctan(self) -> Var<'t> {
        self.tape.record_unary(UnaryOp::Arctan, self)
    }

    pub fn neg(self) -> Var<'t> {
        self.tape.record_unary(UnaryOp::Negate, self)
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.tape.record_unary(UnaryOp::Scale(c), self)
    }

    pub fn square(self) -> Var<'t> {
        self.tape.record_unary(UnaryOp::Square, self)
    }

    pub fn sqrt(self) -> Var<'t> {
        self.tape.record_unary(UnaryOp::Sqrt, self)
    }

    pub fn l2norm(self) -> Var<'t> {
        self.tape.record_unary(UnaryOp::L2Norm, self)
    }

    pub fn row_norms(self) -> Var<'t> {
        self.tape.record_unary(UnaryOp::RowNorms, self)
    }

    pub fn sum(self) -> Var<'t> {
        self.tape.record_unary(UnaryOp::Sum, self)
    }

    pub fn mean(self) -> Var<'t> {
        self.tape.record_unary(UnaryOp::Mean, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn dot_gradient_is_other_operand() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::row(&[1.0, 2.0]));
        let b = tape.leaf(Tensor::row(&[3.0, 4.0]));
        let y = a.dot(b).unwrap();
        assert_eq!(y.item(), 11.0);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(a).data(), &[3.0, 4.0]);
        assert_eq!(g.wrt(b).data(), &[1.0, 2.0]);
    }

    #[test]
    fn add_self_counts_twice() {
        let tape = Tape::new();
        let x = tape.scalar(2.0);
        let y = x.add(x).unwrap();
        assert_eq!(y.item(), 4.0);
        assert_eq!(tape.backward(y).unwrap().wrt(x).item(), 2.0);
    }

    #[test]
    fn activation_derivatives() {
        let tape = Tape::new();
        let z = tape.scalar(0.0);
        let t = z.tanh();
        assert_eq!(t.item(), 0.0);
        assert_eq!(tape.backward(t).unwrap().wrt(z).item(), 1.0);

        let one = tape.scalar(1.0);
        let at = one.arctan();
        assert!((at.item() - FRAC_PI_4).abs() < 1e-15);
        assert!((tape.backward(at).unwrap().wrt(one).item() - 0.5).abs() < 1e-15);

        let r = z.relu();
        assert_eq!(tape.backward(r).unwrap().wrt(z).item(), 0.0);
    }

    #[test]
    fn l2norm_unit_vector_and_zero_subgradient() {
        let tape = Tape::new();
        let v = tape.leaf(Tensor::row(&[3.0, 4.0]));
        let n = v.l2norm();
        assert_eq!(n.item(), 5.0);
        let g = tape.backward(n).unwrap().wrt(v);
        assert!((g.data()[0] - 0.6).abs() < 1e-15 && (g.data()[1] - 0.8).abs() < 1e-15);

        let zero = tape.leaf(Tensor::row(&[0.0, 0.0]));
        let nz = zero.l2norm();
        assert_eq!(tape.backward(nz).unwrap().wrt(zero).data(), &[0.0, 0.0]);
    }

    #[test]
    fn square_backward() {
        let tape = Tape::new();
        let x = tape.scalar(3.0);
        let y = x.square();
        assert_eq!(y.item(), 9.0);
        assert_eq!(tape.backward(y).unwrap().wrt(x).item(), 6.0);
    }

    #[test]
    fn repeated_backward_resets() {
        let tape = Tape::new();
        let x = tape.scalar(3.0);
        let y = x.square().sum();
        let g1 = tape.backward(y).unwrap().wrt(x);
        let g2 = tape.backward(y).unwrap().wrt(x);
        assert_eq!(g1, g2);
    }

    #[test]
    fn shape_errors_are_reported() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::row(&[1.0, 2.0]));
        let b = tape.leaf(Tensor::row(&[1.0, 2.0, 3.0]));
        let err = a.add(b).unwrap_err();
        assert_eq!(
            err,
            AdError::ShapeMismatch {
                op: "add",
                lhs: (1, 2),
                rhs: (1, 3)
            }
        );
        assert!(err.to_string().contains("(1, 3)"));
        assert!(matches!(tape.backward(a), Err(AdError::NonScalarLoss((1, 2)))));
        let m = tape.leaf(Tensor::zeros(3, 3));
        assert!(m.matmul(a).is_err());
    }

    #[test]
    fn unused_leaf_has_zero_gradient() {
        let tape = Tape::new();
        let x = tape.scalar(1.0);
        let unused = tape.leaf(Tensor::row(&[1.0, 1.0]));
        let y = x.scale(2.0);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(unused).data(), &[0.0, 0.0]);
        assert_eq!(g.wrt(x).item(), 2.0);
    }
}
