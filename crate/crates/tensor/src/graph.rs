//! The recording tape and reverse-mode backward pass.
//!
//! Every primitive appends one node holding its forward value and the ids
//! of its inputs. Node ids are handed out in creation order, so the tape is
//! topologically sorted by construction and `backward` is a single reverse
//! sweep.

use crate::{Tensor, TensorError};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Reduction axis for `sum` / `mean`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Reduce over rows, producing `1 × cols`.
    Rows,
    /// Reduce over columns, producing `rows × 1`.
    Cols,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Square(Var),
    Tanh(Var),
    Exp(Var),
    Ln(Var),
    Sigmoid(Var),
    MaskedSoftmax(Var, Vec<bool>),
    Sum(Var, Axis),
    Mean(Var, Axis),
    SumAll(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize, usize),
    Affine(Var, Var, Var),
    Bce(Var, Vec<f64>),
    BceWithLogits(Var, Vec<f64>),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Append-only computation tape.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    checked: bool,
}

/// Gradients of one scalar output with respect to every node on the tape.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<[usize; 2]>,
}

impl Gradients {
    /// Gradient for `var`; nodes the output does not depend on get zeros.
    pub fn get(&self, var: Var) -> Tensor {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => {
                let [r, c] = self.shapes[var.0];
                Tensor::zeros(r, c)
            }
        }
    }

    /// True if the output reached `var` during the backward sweep.
    pub fn touched(&self, var: Var) -> bool {
        self.grads[var.0].is_some()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape that rejects any primitive producing NaN or infinity.
    pub fn checked() -> Self {
        Self {
            nodes: Vec::new(),
            checked: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> [usize; 2] {
        self.nodes[var.0].value.shape()
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var, TensorError> {
        if self.checked && !value.is_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(TensorError::shape(op, x, y));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push("matmul", value, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = self.value(a).transpose();
        self.push("transpose", value, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push("add", value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push("sub", value, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push("mul", value, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, TensorError> {
        let value = self.value(a).map(|x| x * factor);
        self.push("scale", value, Op::Scale(a, factor))
    }

    pub fn square(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = self.value(a).map(|x| x * x);
        self.push("square", value, Op::Square(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = self.value(a).map(f64::tanh);
        self.push("tanh", value, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = self.value(a).map(f64::exp);
        self.push("exp", value, Op::Exp(a))
    }

    /// Natural logarithm.
    pub fn ln(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = self.value(a).map(f64::ln);
        self.push("ln", value, Op::Ln(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = self.value(a).map(sigmoid);
        self.push("sigmoid", value, Op::Sigmoid(a))
    }

    /// Row-wise softmax over all positions.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let mask = vec![true; self.value(a).len()];
        self.masked_softmax_rows(a, &mask)
    }

    /// Row-wise softmax restricted to positions where `mask` is true.
    ///
    /// Masked positions get exactly zero weight and receive zero gradient.
    /// A row with no valid position is all zeros.
    pub fn masked_softmax_rows(&mut self, a: Var, mask: &[bool]) -> Result<Var, TensorError> {
        let x = self.value(a);
        if mask.len() != x.len() {
            return Err(TensorError::MaskLength {
                shape: x.shape().to_vec(),
                len: mask.len(),
            });
        }
        let (rows, cols) = (x.rows(), x.cols());
        let mut out = Tensor::zeros(rows, cols);
        for i in 0..rows {
            let valid = |j: usize| mask[i * cols + j];
            let max = (0..cols)
                .filter(|&j| valid(j))
                .map(|j| x.get(i, j))
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut total = 0.0;
            for j in (0..cols).filter(|&j| valid(j)) {
                let e = (x.get(i, j) - max).exp();
                out.set(i, j, e);
                total += e;
            }
            for j in (0..cols).filter(|&j| valid(j)) {
                out.set(i, j, out.get(i, j) / total);
            }
        }
        self.push("masked_softmax", out, Op::MaskedSoftmax(a, mask.to_vec()))
    }

    pub fn sum(&mut self, a: Var, axis: Axis) -> Result<Var, TensorError> {
        let value = reduce(self.value(a), axis);
        self.push("sum", value, Op::Sum(a, axis))
    }

    pub fn mean(&mut self, a: Var, axis: Axis) -> Result<Var, TensorError> {
        let x = self.value(a);
        let n = match axis {
            Axis::Rows => x.rows(),
            Axis::Cols => x.cols(),
        };
        if n == 0 {
            return Err(TensorError::Empty { op: "mean" });
        }
        let value = reduce(x, axis).map(|v| v / n as f64);
        self.push("mean", value, Op::Mean(a, axis))
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = Tensor::scalar(self.value(a).sum());
        self.push("sum_all", value, Op::SumAll(a))
    }

    /// Stacks inputs vertically; all must share the column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts
            .first()
            .ok_or(TensorError::Empty { op: "concat_rows" })?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(TensorError::shape("concat_rows", self.value(*first), v));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let value = Tensor::new(rows, cols, data)?;
        self.push("concat_rows", value, Op::ConcatRows(parts.to_vec()))
    }

    /// Joins inputs side by side; all must share the row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts
            .first()
            .ok_or(TensorError::Empty { op: "concat_cols" })?;
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(TensorError::shape("concat_cols", self.value(*first), v));
            }
            cols += v.cols();
        }
        let mut out = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let v = self.value(p);
            for i in 0..rows {
                for j in 0..v.cols() {
                    out.set(i, offset + j, v.get(i, j));
                }
            }
            offset += v.cols();
        }
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()))
    }

    /// Rows `start..end` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let x = self.value(a);
        if start >= end || end > x.rows() {
            return Err(TensorError::SliceBounds {
                start,
                end,
                rows: x.rows(),
            });
        }
        let cols = x.cols();
        let value = Tensor::new(
            end - start,
            cols,
            x.data()[start * cols..end * cols].to_vec(),
        )?;
        self.push("slice_rows", value, Op::SliceRows(a, start, end))
    }

    /// `x · w + b`, with the `1 × out` bias added to every row. This is the
    /// only broadcasting primitive.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.cols() != wv.rows() {
            return Err(TensorError::shape("affine", xv, wv));
        }
        if bv.rows() != 1 || bv.cols() != wv.cols() {
            return Err(TensorError::shape("affine bias", wv, bv));
        }
        let mut value = xv.matmul_unchecked(wv);
        let cols = value.cols();
        for (idx, v) in value.data_mut().iter_mut().enumerate() {
            *v += bv.data()[idx % cols];
        }
        self.push("affine", value, Op::Affine(x, w, b))
    }

    /// Mean binary cross-entropy of probabilities `p` (any shape) against
    /// `labels` in `{0, 1}`. Every probability must lie strictly inside
    /// `(0, 1)`.
    pub fn bce(&mut self, p: Var, labels: &[f64]) -> Result<Var, TensorError> {
        let pv = self.value(p);
        if labels.len() != pv.len() || pv.is_empty() {
            return Err(TensorError::LabelLength {
                shape: pv.shape().to_vec(),
                len: labels.len(),
            });
        }
        let mut total = 0.0;
        for (&q, &y) in pv.data().iter().zip(labels) {
            if !(q > 0.0 && q < 1.0) {
                return Err(TensorError::ProbabilityRange { value: q });
            }
            total -= y * q.ln() + (1.0 - y) * (1.0 - q).ln();
        }
        let value = Tensor::scalar(total / labels.len() as f64);
        self.push("bce", value, Op::Bce(p, labels.to_vec()))
    }

    /// Mean binary cross-entropy evaluated from logits, i.e. `bce(sigmoid(z))`
    /// without the rounding loss near saturation.
    pub fn bce_with_logits(&mut self, z: Var, labels: &[f64]) -> Result<Var, TensorError> {
        let zv = self.value(z);
        if labels.len() != zv.len() || zv.is_empty() {
            return Err(TensorError::LabelLength {
                shape: zv.shape().to_vec(),
                len: labels.len(),
            });
        }
        let total: f64 = zv
            .data()
            .iter()
            .zip(labels)
            .map(|(&x, &y)| softplus(x) - y * x)
            .sum();
        let value = Tensor::scalar(total / labels.len() as f64);
        self.push(
            "bce_with_logits",
            value,
            Op::BceWithLogits(z, labels.to_vec()),
        )
    }

    /// Reverse sweep from a scalar `output`.
    ///
    /// The tape is not consumed, so calling this twice yields identical
    /// gradients.
    pub fn backward(&self, output: Var) -> Result<Gradients, TensorError> {
        let out = self.value(output);
        if out.shape() != [1, 1] {
            return Err(TensorError::NotScalar {
                shape: out.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::ones(1, 1));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let y = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    accumulate(&mut grads, *a, g.matmul_unchecked(&bv.transpose()));
                    accumulate(&mut grads, *b, av.transpose().matmul_unchecked(&g));
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    accumulate(&mut grads, *a, g.zip_map(bv, |gi, bi| gi * bi));
                    accumulate(&mut grads, *b, g.zip_map(av, |gi, ai| gi * ai));
                }
                Op::Scale(a, f) => accumulate(&mut grads, *a, g.map(|v| v * f)),
                Op::Square(a) => {
                    let av = self.value(*a);
                    accumulate(&mut grads, *a, g.zip_map(av, |gi, x| 2.0 * x * gi));
                }
                Op::Tanh(a) => accumulate(&mut grads, *a, g.zip_map(y, |gi, t| gi * (1.0 - t * t))),
                Op::Exp(a) => accumulate(&mut grads, *a, g.zip_map(y, |gi, e| gi * e)),
                Op::Ln(a) => {
                    let av = self.value(*a);
                    accumulate(&mut grads, *a, g.zip_map(av, |gi, x| gi / x));
                }
                Op::Sigmoid(a) => {
                    accumulate(&mut grads, *a, g.zip_map(y, |gi, s| gi * s * (1.0 - s)))
                }
                Op::MaskedSoftmax(a, mask) => {
                    let (rows, cols) = (y.rows(), y.cols());
                    let mut dx = Tensor::zeros(rows, cols);
                    for i in 0..rows {
                        let dot: f64 = (0..cols)
                            .filter(|&j| mask[i * cols + j])
                            .map(|j| y.get(i, j) * g.get(i, j))
                            .sum();
                        for j in (0..cols).filter(|&j| mask[i * cols + j]) {
                            dx.set(i, j, y.get(i, j) * (g.get(i, j) - dot));
                        }
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::Sum(a, axis) | Op::Mean(a, axis) => {
                    let [r, c] = self.shape(*a);
                    let scale = match (&node.op, axis) {
                        (Op::Mean(..), Axis::Rows) => 1.0 / r as f64,
                        (Op::Mean(..), Axis::Cols) => 1.0 / c as f64,
                        _ => 1.0,
                    };
                    let dx = match axis {
                        Axis::Rows => Tensor::from_fn(r, c, |_, j| g.get(0, j) * scale),
                        Axis::Cols => Tensor::from_fn(r, c, |i, _| g.get(i, 0) * scale),
                    };
                    accumulate(&mut grads, *a, dx);
                }
                Op::SumAll(a) => {
                    let [r, c] = self.shape(*a);
                    accumulate(&mut grads, *a, Tensor::full(r, c, g.get(0, 0)));
                }
                Op::ConcatRows(parts) => {
                    let cols = g.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let rows = self.shape(p)[0];
                        let slice = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                        accumulate(&mut grads, p, Tensor::new(rows, cols, slice)?);
                        offset += rows;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let [rows, cols] = self.shape(p);
                        let part = Tensor::from_fn(rows, cols, |i, j| g.get(i, offset + j));
                        accumulate(&mut grads, p, part);
                        offset += cols;
                    }
                }
                Op::SliceRows(a, start, end) => {
                    let [rows, cols] = self.shape(*a);
                    let dx = Tensor::from_fn(rows, cols, |i, j| {
                        if i >= *start && i < *end {
                            g.get(i - start, j)
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads, *a, dx);
                }
                Op::Affine(x, w, b) => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    accumulate(&mut grads, *x, g.matmul_unchecked(&wv.transpose()));
                    accumulate(&mut grads, *w, xv.transpose().matmul_unchecked(&g));
                    accumulate(&mut grads, *b, reduce(&g, Axis::Rows));
                }
                Op::Bce(p, labels) => {
                    let pv = self.value(*p);
                    let n = labels.len() as f64;
                    let gv = g.get(0, 0);
                    let data = pv
                        .data()
                        .iter()
                        .zip(labels)
                        .map(|(&q, &t)| gv * (-t / q + (1.0 - t) / (1.0 - q)) / n)
                        .collect();
                    accumulate(&mut grads, *p, Tensor::new(pv.rows(), pv.cols(), data)?);
                }
                Op::BceWithLogits(z, labels) => {
                    let zv = self.value(*z);
                    let n = labels.len() as f64;
                    let gv = g.get(0, 0);
                    let data = zv
                        .data()
                        .iter()
                        .zip(labels)
                        .map(|(&x, &t)| gv * (sigmoid(x) - t) / n)
                        .collect();
                    accumulate(&mut grads, *z, Tensor::new(zv.rows(), zv.cols(), data)?);
                }
            }
            grads[idx] = Some(g);
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], var: Var, delta: Tensor) {
    match &mut grads[var.0] {
        Some(g) => g.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

fn reduce(x: &Tensor, axis: Axis) -> Tensor {
    match axis {
        Axis::Rows => {
            let mut out = Tensor::zeros(1, x.cols());
            for i in 0..x.rows() {
                for j in 0..x.cols() {
                    out.data_mut()[j] += x.get(i, j);
                }
            }
            out
        }
        Axis::Cols => {
            let data = (0..x.rows()).map(|i| x.row(i).iter().sum()).collect();
            Tensor::new(x.rows(), 1, data).expect("column reduction shape")
        }
    }
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
