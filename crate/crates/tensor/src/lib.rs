//! Small dense-tensor engine with reverse-mode automatic differentiation.
//!
//! All arithmetic is `f64`. A [`Graph`] records each primitive as it is
//! applied; [`Graph::backward`] then walks the tape in reverse and returns
//! [`Gradients`] for every recorded node.
//!
//! ```
//! use setmatch_tensor::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.leaf(Tensor::scalar(0.0));
//! let y = g.tanh(x).unwrap();
//! let grads = g.backward(y).unwrap();
//! assert_eq!(grads.get(x).item().unwrap(), 1.0);
//! ```

pub mod gradcheck;
mod graph;
mod tensor;

pub use graph::{sigmoid, Axis, Gradients, Graph, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("expected a scalar (1x1) tensor, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("ragged rows: expected {expected} columns, found {found}")]
    RaggedRows { expected: usize, found: usize },
    #[error("mask of length {len} does not cover shape {shape:?}")]
    MaskLength { shape: Vec<usize>, len: usize },
    #[error("{len} labels do not cover shape {shape:?}")]
    LabelLength { shape: Vec<usize>, len: usize },
    #[error("probability {value} outside the open interval (0, 1)")]
    ProbabilityRange { value: f64 },
    #[error("row slice {start}..{end} out of bounds for {rows} rows")]
    SliceBounds {
        start: usize,
        end: usize,
        rows: usize,
    },
    #[error("{op} on an empty input")]
    Empty { op: &'static str },
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, a: &Tensor, b: &Tensor) -> Self {
        TensorError::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_gradient_is_one() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.5));
        let grads = g.backward(x).unwrap();
        assert_eq!(grads.get(x).item().unwrap(), 1.0);
    }

    #[test]
    fn tanh_gradient_at_zero() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(0.0));
        let y = g.tanh(x).unwrap();
        assert_eq!(g.backward(y).unwrap().get(x).item().unwrap(), 1.0);
    }

    #[test]
    fn non_scalar_backward_is_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(2, 1));
        assert!(matches!(g.backward(x), Err(TensorError::NotScalar { .. })));
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::zeros(2, 3));
        let b = g.leaf(Tensor::zeros(2, 3));
        let err = g.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            TensorError::ShapeMismatch {
                op: "matmul",
                left: vec![2, 3],
                right: vec![2, 3]
            }
        );
        assert!(err.to_string().contains("[2, 3]"));
    }

    #[test]
    fn uniform_logits_give_uniform_masked_weights() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::full(2, 5, 0.7));
        let mask = [
            true, true, false, true, false, //
            true, false, false, false, false,
        ];
        let y = g.masked_softmax_rows(x, &mask).unwrap();
        let v = g.value(y);
        for j in [0, 1, 3] {
            assert!((v.get(0, j) - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(v.get(0, 2), 0.0);
        assert_eq!(v.get(0, 4), 0.0);
        assert_eq!(v.get(1, 0), 1.0);
    }

    #[test]
    fn masked_positions_get_zero_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_rows(&[[0.3, -1.2, 2.0], [1.0, 0.5, -0.5]]).unwrap());
        let w = g.leaf(Tensor::from_rows(&[[1.0, 2.0, 3.0], [-1.0, 4.0, 0.5]]).unwrap());
        let mask = [true, false, true, false, true, true];
        let y = g.masked_softmax_rows(x, &mask).unwrap();
        let z = g.mul(y, w).unwrap();
        let s = g.sum_all(z).unwrap();
        let dx = g.backward(s).unwrap().get(x);
        assert_eq!(dx.get(0, 1), 0.0);
        assert_eq!(dx.get(1, 0), 0.0);
        assert!(dx.get(0, 0) != 0.0);
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let mut g = Graph::checked();
        let x = g.leaf(Tensor::row_vector(&[1000.0, 1000.0]));
        let y = g.softmax_rows(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn checked_mode_rejects_overflow() {
        let mut g = Graph::checked();
        let x = g.leaf(Tensor::scalar(1000.0));
        assert_eq!(g.exp(x).unwrap_err(), TensorError::NonFinite { op: "exp" });
        let mut unchecked = Graph::new();
        let x = unchecked.leaf(Tensor::scalar(1000.0));
        assert!(unchecked.exp(x).is_ok());
    }

    #[test]
    fn bce_rejects_out_of_range_probability() {
        let mut g = Graph::new();
        let p = g.leaf(Tensor::column_vector(&[0.5, 1.0]));
        assert!(matches!(
            g.bce(p, &[1.0, 0.0]),
            Err(TensorError::ProbabilityRange { .. })
        ));
    }

    #[test]
    fn bce_at_one_half_is_ln_two() {
        for label in [0.0, 1.0] {
            let mut g = Graph::new();
            let p = g.leaf(Tensor::scalar(0.5));
            let l = g.bce(p, &[label]).unwrap();
            assert!((g.value(l).item().unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn backward_is_repeatable() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::from_rows(&[[0.1, 0.2], [0.3, -0.4]]).unwrap());
        let b = g.matmul(a, a).unwrap();
        let c = g.tanh(b).unwrap();
        let s = g.sum_all(c).unwrap();
        let first = g.backward(s).unwrap().get(a);
        let second = g.backward(s).unwrap().get(a);
        assert_eq!(first, second);
    }
}
