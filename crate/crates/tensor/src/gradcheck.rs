//! Central finite-difference gradient checking.
//!
//! The check only ever evaluates the forward pass, so it is independent of
//! the backward rules it validates.

use crate::{Graph, Tensor, TensorError, Var};

/// Default perturbation for central differences.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared in absolute rather than
/// relative terms.
pub const RELATIVE_FLOOR: f64 = 1e-4;

/// Outcome of a gradient check over all entries of all inputs.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// `(input index, flat entry index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub analytic: Vec<Tensor>,
    pub numeric: Vec<Tensor>,
    pub entries: usize,
}

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compares the reverse-mode gradient of a scalar function against central
/// differences with step `h`.
///
/// `build` records the function on a fresh graph given leaf handles for
/// `inputs` (in order) and returns the scalar output.
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, build: F) -> Result<GradCheck, TensorError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, TensorError>,
{
    let mut graph = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| graph.leaf(t.clone())).collect();
    let out = build(&mut graph, &vars)?;
    let grads = graph.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.get(v)).collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64, TensorError> {
        let mut g = Graph::new();
        let vs: Vec<Var> = perturbed.iter().map(|t| g.leaf(t.clone())).collect();
        let o = build(&mut g, &vs)?;
        g.value(o).item()
    };

    let mut work = inputs.to_vec();
    let mut numeric = Vec::with_capacity(inputs.len());
    let mut max_err = 0.0_f64;
    let mut worst = None;
    let mut entries = 0;
    for (t, input) in inputs.iter().enumerate() {
        let mut num = Tensor::zeros(input.rows(), input.cols());
        for e in 0..input.len() {
            let base = input.data()[e];
            work[t].data_mut()[e] = base + h;
            let plus = eval(&work)?;
            work[t].data_mut()[e] = base - h;
            let minus = eval(&work)?;
            work[t].data_mut()[e] = base;
            let n = (plus - minus) / (2.0 * h);
            num.data_mut()[e] = n;
            let err = relative_error(analytic[t].data()[e], n);
            if err > max_err || worst.is_none() {
                max_err = max_err.max(err);
                worst = Some((t, e));
            }
            entries += 1;
        }
        numeric.push(num);
    }

    Ok(GradCheck {
        max_relative_error: max_err,
        worst,
        analytic,
        numeric,
        entries,
    })
}
