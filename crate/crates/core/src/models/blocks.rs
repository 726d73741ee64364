//! Attention blocks on the autodiff tape. Node sets are row matrices:
//! `x` is `k × d` (left), `x2` is `k' × d` (right).

use serde::{Deserialize, Serialize};
use setmatch_tensor::{Axis, Graph, Var};

use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SatParams<T> {
    pub w_q: T,
    pub w_k: T,
    pub w_v: T,
}

/// Independent self-attention blocks for the left and right sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SatPair<T> {
    pub left: SatParams<T>,
    pub right: SatParams<T>,
}

/// Unprimed matrices act on left inputs, primed (`*_r`) on right inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatParams<T> {
    pub w_q: T,
    pub w_k: T,
    pub w_v: T,
    pub w_q_r: T,
    pub w_k_r: T,
    pub w_v_r: T,
}

/// `W_s` and `W'_s`; `right` is `None` when both sides share `W_s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticParams<T> {
    pub w_s: T,
    pub w_s_r: Option<T>,
}

/// Position-wise map from a `d_v` row to one scalar: `tanh(Δ w + b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionFf<T> {
    pub w: T,
    pub b: T,
}

/// Per-side position-wise layers (`right: None` means shared), then mean
/// consolidation and a scalar affine map to the logit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadParams<T> {
    pub left: PositionFf<T>,
    pub right: Option<PositionFf<T>>,
    pub out_w: T,
    pub out_b: T,
}

pub struct JointOutput {
    pub left: Var,
    pub right: Var,
    /// `(k + k') × (k + k')` weights; row `i` holds `α_{i·}` then `β_{i·}`
    /// for left rows, `γ_{i'·}` then `α'_{i'·}` for right rows.
    pub weights: Var,
}

pub struct CrossOutput {
    pub left: Var,
    pub right: Var,
    /// `k × k'` weights `β`.
    pub beta: Var,
    /// `k' × k` weights `γ`.
    pub gamma: Var,
}

fn logits(g: &mut Graph, q_in: Var, w_q: Var, k_in: Var, w_k: Var) -> Result<Var> {
    let q = g.matmul(q_in, w_q)?;
    let k = g.matmul(k_in, w_k)?;
    let kt = g.transpose(k)?;
    Ok(g.matmul(q, kt)?)
}

fn attend(g: &mut Graph, weights: Var, v_in: Var, w_v: Var) -> Result<Var> {
    let v = g.matmul(v_in, w_v)?;
    let mixed = g.matmul(weights, v)?;
    Ok(g.tanh(mixed)?)
}

/// One self-attention block over the union `f ∪ f'` with shared weights:
/// every node normalises over all `k + k'` logits.
pub fn joint_self_attention(
    g: &mut Graph,
    x: Var,
    x2: Var,
    p: &SatParams<Var>,
) -> Result<JointOutput> {
    let k = g.shape(x)[0];
    let z = g.concat_rows(&[x, x2])?;
    let n = g.shape(z)[0];
    let a = logits(g, z, p.w_q, z, p.w_k)?;
    let weights = g.softmax_rows(a)?;
    let out = attend(g, weights, z, p.w_v)?;
    Ok(JointOutput {
        left: g.slice_rows(out, 0, k)?,
        right: g.slice_rows(out, k, n)?,
        weights,
    })
}

/// Self-attention within one set; returns the outputs and the weights.
pub fn side_self_attention(g: &mut Graph, x: Var, p: &SatParams<Var>) -> Result<(Var, Var)> {
    let a = logits(g, x, p.w_q, x, p.w_k)?;
    let weights = g.softmax_rows(a)?;
    Ok((attend(g, weights, x, p.w_v)?, weights))
}

/// Left rows attend only to right rows and vice versa.
pub fn cross_attention(g: &mut Graph, x: Var, x2: Var, p: &CatParams<Var>) -> Result<CrossOutput> {
    let b = logits(g, x, p.w_q, x2, p.w_k_r)?;
    let beta = g.softmax_rows(b)?;
    let c = logits(g, x2, p.w_q_r, x, p.w_k)?;
    let gamma = g.softmax_rows(c)?;
    Ok(CrossOutput {
        left: attend(g, beta, x2, p.w_v_r)?,
        right: attend(g, gamma, x, p.w_v)?,
        beta,
        gamma,
    })
}

/// `tanh(x W_s)` row-wise.
pub fn static_embedding(g: &mut Graph, x: Var, w_s: Var) -> Result<Var> {
    let s = g.matmul(x, w_s)?;
    Ok(g.tanh(s)?)
}

/// `(δ - s)^∘2`.
pub fn hadamard_square_delta(g: &mut Graph, dynamic: Var, stat: Var) -> Result<Var> {
    let diff = g.sub(dynamic, stat)?;
    Ok(g.square(diff)?)
}

/// One scalar per row of `delta`: `tanh(Δ w + b)`.
pub fn position_ff(g: &mut Graph, delta: Var, ff: &PositionFf<Var>) -> Result<Var> {
    let h = g.affine(delta, ff.w, ff.b)?;
    Ok(g.tanh(h)?)
}

/// Mean of the per-position scalars, then `out_w * m + out_b`.
pub fn consolidate(g: &mut Graph, scalars: &[Var], head: &HeadParams<Var>) -> Result<Var> {
    let all = g.concat_rows(scalars)?;
    let m = g.mean(all, Axis::Rows)?;
    Ok(g.affine(m, head.out_w, head.out_b)?)
}
