//! Set-matching scorers: the cross-attention variants `X`, `SX`, `SXS` and
//! the joint self-attention baseline.

pub mod blocks;

pub use blocks::{
    consolidate, cross_attention, hadamard_square_delta, joint_self_attention, position_ff,
    side_self_attention, static_embedding, CatParams, CrossOutput, HeadParams, JointOutput,
    PositionFf, SatPair, SatParams, StaticParams,
};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use setmatch_tensor::{Graph, Tensor, Var};

use crate::embeddings::EmbeddingTable;
use crate::hypergraph::{BipartiteHyperedge, Side};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arch {
    /// Cross-attention only.
    #[serde(rename = "X")]
    X,
    /// Self-attention pair, then cross-attention.
    #[serde(rename = "SX")]
    Sx,
    /// Self-attention pair, cross-attention, self-attention pair.
    #[serde(rename = "SXS")]
    Sxs,
    /// Joint self-attention over `f ∪ f'` with shared weights.
    #[serde(rename = "hyper-sagnn")]
    HyperSagnn,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::X, Arch::Sx, Arch::Sxs, Arch::HyperSagnn];
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::X => "X",
            Arch::Sx => "SX",
            Arch::Sxs => "SXS",
            Arch::HyperSagnn => "hyper-sagnn",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Arch::X),
            "sx" => Ok(Arch::Sx),
            "sxs" => Ok(Arch::Sxs),
            "hyper-sagnn" | "hypersagnn" | "hs" => Ok(Arch::HyperSagnn),
            _ => Err(Error::InvalidConfig(format!("unknown model variant {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Input feature dimension.
    pub d: usize,
    pub d_k: usize,
    /// Also the static-embedding dimension, since `Δ = (δ - s)^∘2`.
    pub d_v: usize,
}

impl Dims {
    pub fn square(d: usize) -> Self {
        Self { d, d_k: d, d_v: d }
    }

    pub fn validate(&self, arch: Arch) -> Result<()> {
        if self.d == 0 || self.d_k == 0 || self.d_v == 0 {
            return Err(Error::InvalidConfig("dimensions must be positive".into()));
        }
        // Stacked blocks feed d_v outputs into d-input blocks.
        if matches!(arch, Arch::Sx | Arch::Sxs) && self.d_v != self.d {
            return Err(Error::InvalidConfig(format!(
                "{arch} stacks blocks and needs d_v == d, got d_v={} d={}",
                self.d_v, self.d
            )));
        }
        Ok(())
    }
}

impl Default for Dims {
    fn default() -> Self {
        Self::square(16)
    }
}

/// Every parameter of one architecture, in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub joint: Option<SatParams<T>>,
    pub sat_in: Option<SatPair<T>>,
    pub cat: Option<CatParams<T>>,
    pub sat_out: Option<SatPair<T>>,
    pub statics: StaticParams<T>,
    pub head: HeadParams<T>,
}

/// Builds a network by requesting each parameter, in order, from `next`
/// with its name and shape. Initialisation, binding to a tape and
/// checkpoint validation all go through here, so the order is defined once.
pub fn build_network<T>(
    arch: Arch,
    dims: Dims,
    next: &mut impl FnMut(&str, usize, usize) -> T,
) -> Network<T> {
    let Dims { d, d_k, d_v } = dims;
    let sat = |prefix: &str, next: &mut dyn FnMut(&str, usize, usize) -> T| SatParams {
        w_q: next(&format!("{prefix}.w_q"), d, d_k),
        w_k: next(&format!("{prefix}.w_k"), d, d_k),
        w_v: next(&format!("{prefix}.w_v"), d, d_v),
    };
    let pair = |prefix: &str, next: &mut dyn FnMut(&str, usize, usize) -> T| SatPair {
        left: sat(&format!("{prefix}.left"), next),
        right: sat(&format!("{prefix}.right"), next),
    };
    let shared = arch == Arch::HyperSagnn;
    let joint = shared.then(|| sat("joint", next));
    let sat_in = matches!(arch, Arch::Sx | Arch::Sxs).then(|| pair("sat_in", next));
    let cat = (!shared).then(|| CatParams {
        w_q: next("cat.w_q", d, d_k),
        w_k: next("cat.w_k", d, d_k),
        w_v: next("cat.w_v", d, d_v),
        w_q_r: next("cat.w_q_r", d, d_k),
        w_k_r: next("cat.w_k_r", d, d_k),
        w_v_r: next("cat.w_v_r", d, d_v),
    });
    let sat_out = (arch == Arch::Sxs).then(|| pair("sat_out", next));
    let statics = StaticParams {
        w_s: next("static.w_s", d, d_v),
        w_s_r: (!shared).then(|| next("static.w_s_r", d, d_v)),
    };
    let head = HeadParams {
        left: PositionFf {
            w: next("head.left.w", d_v, 1),
            b: next("head.left.b", 1, 1),
        },
        right: (!shared).then(|| PositionFf {
            w: next("head.right.w", d_v, 1),
            b: next("head.right.b", 1, 1),
        }),
        out_w: next("head.out.w", 1, 1),
        out_b: next("head.out.b", 1, 1),
    };
    Network {
        joint,
        sat_in,
        cat,
        sat_out,
        statics,
        head,
    }
}

/// `(name, rows, cols)` for each parameter, in order.
pub fn parameter_layout(arch: Arch, dims: Dims) -> Vec<(String, usize, usize)> {
    let mut out = Vec::new();
    build_network(arch, dims, &mut |name, r, c| {
        out.push((name.to_owned(), r, c))
    });
    out
}

impl Network<Var> {
    /// Logit (`1 × 1`) for one left set `x` (`k × d`) and right set `x2`.
    pub fn logit(&self, g: &mut Graph, x: Var, x2: Var) -> Result<Var> {
        if let Some(joint) = &self.joint {
            let out = joint_self_attention(g, x, x2, joint)?;
            let z = g.concat_rows(&[x, x2])?;
            let dynamic = g.concat_rows(&[out.left, out.right])?;
            let stat = static_embedding(g, z, self.statics.w_s)?;
            let delta = hadamard_square_delta(g, dynamic, stat)?;
            let h = position_ff(g, delta, &self.head.left)?;
            return consolidate(g, &[h], &self.head);
        }
        let integrity = |what: &str| Error::ModelIntegrity(format!("missing {what} parameters"));
        let (mut y, mut y2) = (x, x2);
        if let Some(p) = &self.sat_in {
            y = side_self_attention(g, y, &p.left)?.0;
            y2 = side_self_attention(g, y2, &p.right)?.0;
        }
        let cat = self
            .cat
            .as_ref()
            .ok_or_else(|| integrity("cross-attention"))?;
        let out = cross_attention(g, y, y2, cat)?;
        let (mut delta, mut delta2) = (out.left, out.right);
        if let Some(p) = &self.sat_out {
            delta = side_self_attention(g, delta, &p.left)?.0;
            delta2 = side_self_attention(g, delta2, &p.right)?.0;
        }
        let w_s_r = self
            .statics
            .w_s_r
            .ok_or_else(|| integrity("right static"))?;
        let s = static_embedding(g, x, self.statics.w_s)?;
        let s2 = static_embedding(g, x2, w_s_r)?;
        let d = hadamard_square_delta(g, delta, s)?;
        let d2 = hadamard_square_delta(g, delta2, s2)?;
        let right_ff = self
            .head
            .right
            .as_ref()
            .ok_or_else(|| integrity("right head"))?;
        let h = position_ff(g, d, &self.head.left)?;
        let h2 = position_ff(g, d2, right_ff)?;
        consolidate(g, &[h, h2], &self.head)
    }
}

/// A trained or freshly initialised scorer: architecture, dimensions and
/// the flat parameter list in layout order.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    arch: Arch,
    dims: Dims,
    params: Vec<Tensor>,
}

impl Model {
    /// Uniform initialisation in `[-1/√d, 1/√d]`.
    pub fn init(arch: Arch, dims: Dims, rng: &mut Rng) -> Result<Self> {
        dims.validate(arch)?;
        let bound = 1.0 / (dims.d as f64).sqrt();
        let mut params = Vec::new();
        build_network(arch, dims, &mut |_, r, c| {
            params.push(Tensor::from_fn(r, c, |_, _| rng.gen_range(-bound..=bound)))
        });
        Ok(Self { arch, dims, params })
    }

    pub fn zeros(arch: Arch, dims: Dims) -> Result<Self> {
        dims.validate(arch)?;
        let mut params = Vec::new();
        build_network(arch, dims, &mut |_, r, c| params.push(Tensor::zeros(r, c)));
        Ok(Self { arch, dims, params })
    }

    /// Checks `params` against the layout of `arch` and `dims`.
    pub fn from_parameters(arch: Arch, dims: Dims, params: Vec<Tensor>) -> Result<Self> {
        dims.validate(arch)
            .map_err(|e| Error::ModelIntegrity(e.to_string()))?;
        let layout = parameter_layout(arch, dims);
        if layout.len() != params.len() {
            return Err(Error::ModelIntegrity(format!(
                "{arch} expects {} parameter matrices, got {}",
                layout.len(),
                params.len()
            )));
        }
        for ((name, r, c), t) in layout.iter().zip(&params) {
            if t.shape() != [*r, *c] {
                return Err(Error::ModelIntegrity(format!(
                    "{name} should be {r}x{c}, got {}x{}",
                    t.rows(),
                    t.cols()
                )));
            }
            if !t.is_finite() {
                return Err(Error::ModelIntegrity(format!(
                    "{name} has non-finite entries"
                )));
            }
        }
        Ok(Self { arch, dims, params })
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn parameters(&self) -> &[Tensor] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Adds every parameter to `g` as a leaf.
    pub fn bind(&self, g: &mut Graph) -> (Network<Var>, Vec<Var>) {
        let vars: Vec<Var> = self.params.iter().map(|t| g.leaf(t.clone())).collect();
        (network_from_vars(self.arch, self.dims, &vars), vars)
    }

    /// Probability that `b` is a match.
    pub fn score(&self, features: &EmbeddingTable, b: &BipartiteHyperedge) -> Result<f64> {
        let mut g = Graph::new();
        let (net, _) = self.bind(&mut g);
        let (x, x2) = gather(&mut g, features, b, self.dims.d)?;
        let z = net.logit(&mut g, x, x2)?;
        let p = g.sigmoid(z)?;
        Ok(g.value(p).item()?)
    }

    pub fn save(&self, path: &Path, features: Option<&EmbeddingTable>) -> Result<()> {
        let json = serde_json::to_string(&Checkpoint::new(self, features))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, Option<EmbeddingTable>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str::<Checkpoint>(&text)?.into_model()
    }
}

/// Rebuilds the structured view over already-bound parameter leaves.
pub fn network_from_vars(arch: Arch, dims: Dims, vars: &[Var]) -> Network<Var> {
    let mut it = vars.iter().copied();
    build_network(arch, dims, &mut |name, _, _| {
        it.next()
            .unwrap_or_else(|| panic!("no variable for {name}"))
    })
}

/// Feature rows of `f` and `f'` as `k × d` and `k' × d` leaves.
pub fn gather(
    g: &mut Graph,
    features: &EmbeddingTable,
    b: &BipartiteHyperedge,
    d: usize,
) -> Result<(Var, Var)> {
    if features.dim() != d {
        return Err(Error::ModelIntegrity(format!(
            "features have dimension {}, model expects {d}",
            features.dim()
        )));
    }
    features.check_covers(b)?;
    let rows = |side: Side, members: &[usize]| {
        let table = features.side(side);
        let mut data = Vec::with_capacity(members.len() * d);
        members
            .iter()
            .for_each(|&m| data.extend_from_slice(&table[m]));
        Tensor::new(members.len(), d, data)
    };
    let x = rows(Side::Left, b.left().members())?;
    let x2 = rows(Side::Right, b.right().members())?;
    Ok((g.leaf(x), g.leaf(x2)))
}

const CHECKPOINT_FORMAT: &str = "setmatch-model";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    arch: Arch,
    dims: Dims,
    params: Vec<NamedTensor>,
    #[serde(default)]
    features: Option<EmbeddingTable>,
}

impl Checkpoint {
    fn new(model: &Model, features: Option<&EmbeddingTable>) -> Self {
        let layout = parameter_layout(model.arch, model.dims);
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            arch: model.arch,
            dims: model.dims,
            params: layout
                .into_iter()
                .zip(&model.params)
                .map(|((name, rows, cols), t)| NamedTensor {
                    name,
                    rows,
                    cols,
                    data: t.data().to_vec(),
                })
                .collect(),
            features: features.cloned(),
        }
    }

    fn into_model(self) -> Result<(Model, Option<EmbeddingTable>)> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::ModelIntegrity(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let layout = parameter_layout(self.arch, self.dims);
        for ((name, ..), p) in layout.iter().zip(&self.params) {
            if *name != p.name {
                return Err(Error::ModelIntegrity(format!(
                    "expected parameter {name}, found {}",
                    p.name
                )));
            }
        }
        let params = self
            .params
            .into_iter()
            .map(|p| Tensor::new(p.rows, p.cols, p.data))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let model = Model::from_parameters(self.arch, self.dims, params)?;
        if let Some(f) = &self.features {
            f.validate()?;
            if f.dim() != self.dims.d {
                return Err(Error::ModelIntegrity(format!(
                    "feature dimension {} does not match model dimension {}",
                    f.dim(),
                    self.dims.d
                )));
            }
        }
        Ok((model, self.features))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::{join_sigma_inverse, Hyperedge};
    use crate::rng::rng_from;

    fn pair(l: &[usize], r: &[usize]) -> BipartiteHyperedge {
        join_sigma_inverse(
            &Hyperedge::new(Side::Left, l.to_vec()).unwrap(),
            &Hyperedge::new(Side::Right, r.to_vec()).unwrap(),
        )
        .unwrap()
    }

    fn features(d: usize) -> EmbeddingTable {
        let mut r = rng_from(5);
        let mut rows = |n| {
            (0..n)
                .map(|_| (0..d).map(|_| r.gen_range(-1.0..1.0)).collect())
                .collect()
        };
        let left = rows(4);
        let right = rows(3);
        EmbeddingTable::new(d, left, right).unwrap()
    }

    #[test]
    fn zero_parameters_give_one_half() {
        let f = features(4);
        for arch in Arch::ALL {
            let m = Model::zeros(arch, Dims::square(4)).unwrap();
            assert_eq!(m.score(&f, &pair(&[0, 2], &[1])).unwrap(), 0.5);
        }
    }

    #[test]
    fn layouts_per_variant() {
        let count = |a| parameter_layout(a, Dims::square(4)).len();
        assert_eq!(count(Arch::X), 6 + 2 + 4 + 2);
        assert_eq!(count(Arch::Sx), count(Arch::X) + 6);
        assert_eq!(count(Arch::Sxs), count(Arch::X) + 12);
        assert_eq!(count(Arch::HyperSagnn), 3 + 1 + 2 + 2);
    }

    #[test]
    fn stacked_variants_need_square_dims() {
        let dims = Dims {
            d: 4,
            d_k: 3,
            d_v: 5,
        };
        assert!(Model::zeros(Arch::X, dims).is_ok());
        assert!(Model::zeros(Arch::Sx, dims).is_err());
    }

    #[test]
    fn probabilities_are_open_unit_interval() {
        let f = features(4);
        for arch in Arch::ALL {
            let m = Model::init(arch, Dims::square(4), &mut rng_from(1)).unwrap();
            let p = m.score(&f, &pair(&[0, 1, 3], &[0, 2])).unwrap();
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn checkpoint_round_trip_and_rejection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let f = features(4);
        let m = Model::init(Arch::Sxs, Dims::square(4), &mut rng_from(2)).unwrap();
        m.save(&path, Some(&f)).unwrap();
        let (back, feats) = Model::load(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(feats.unwrap(), f);

        let other = Model::init(Arch::X, Dims::square(4), &mut rng_from(2)).unwrap();
        assert!(matches!(
            Model::from_parameters(Arch::Sx, Dims::square(4), other.parameters().to_vec()),
            Err(Error::ModelIntegrity(_))
        ));
        let text = std::fs::read_to_string(&path).unwrap();
        let tampered = text.replacen("\"d\":4", "\"d\":5", 1);
        std::fs::write(&path, tampered).unwrap();
        assert!(matches!(Model::load(&path), Err(Error::ModelIntegrity(_))));
    }

    #[test]
    fn arch_names() {
        for a in Arch::ALL {
            assert_eq!(a.to_string().parse::<Arch>().unwrap(), a);
        }
    }
}
