//! Random-walk node embeddings, the expanded-graph view used by the n2v
//! baselines, and the n2v hyperedge scores.

mod skipgram;
mod walks;

pub use skipgram::{train_skipgram, SkipGramReport};
pub use walks::{
    alternating_hypergraph_walks, alternating_trace, node2vec_walks, Token, WalkGraph,
};

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::hypergraph::{BipartiteHyperedge, BipartiteHypergraph, NodeId, Side};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkConfig {
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub window: usize,
    pub negatives: usize,
    pub p: f64,
    pub q: f64,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            walks_per_node: 10,
            walk_length: 80,
            window: 10,
            negatives: 5,
            p: 1.0,
            q: 1.0,
            epochs: 5,
            lr: 0.025,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("walks_per_node", self.walks_per_node),
            ("walk_length", self.walk_length),
            ("window", self.window),
            ("negatives", self.negatives),
            ("epochs", self.epochs),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, c)| *c == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
        }
        for (name, v) in [("lr", self.lr), ("p", self.p), ("q", self.q)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// One vector per node of each side, all of dimension `d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    dim: usize,
    left: Vec<Vec<f64>>,
    right: Vec<Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, left: Vec<Vec<f64>>, right: Vec<Vec<f64>>) -> Result<Self> {
        let table = Self { dim, left, right };
        table.validate()?;
        Ok(table)
    }

    pub fn zeros(dim: usize, left_size: usize, right_size: usize) -> Self {
        Self {
            dim,
            left: vec![vec![0.0; dim]; left_size],
            right: vec![vec![0.0; dim]; right_size],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for v in self.left.iter().chain(&self.right) {
            if v.len() != self.dim {
                return Err(Error::ModelIntegrity(format!(
                    "embedding of length {} in a table of dimension {}",
                    v.len(),
                    self.dim
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::ModelIntegrity("non-finite embedding".into()));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self, side: Side) -> usize {
        match side {
            Side::Left => self.left.len(),
            Side::Right => self.right.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty() && self.right.is_empty()
    }

    pub fn get(&self, node: NodeId) -> Option<&[f64]> {
        match node.side {
            Side::Left => self.left.get(node.index),
            Side::Right => self.right.get(node.index),
        }
        .map(Vec::as_slice)
    }

    pub fn side(&self, side: Side) -> &[Vec<f64>] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// Fails unless every node of `b` has a vector.
    pub fn check_covers(&self, b: &BipartiteHyperedge) -> Result<()> {
        match b.union().into_iter().find(|&n| self.get(n).is_none()) {
            Some(n) => Err(Error::MissingEmbedding(format!(
                "{:?} node {}",
                n.side, n.index
            ))),
            None => Ok(()),
        }
    }

    /// `d`, then `side index v_1 ... v_d` per node.
    pub fn render(&self) -> String {
        let mut out = format!("{}\n", self.dim);
        for (side, rows) in [("left", &self.left), ("right", &self.right)] {
            for (i, v) in rows.iter().enumerate() {
                out.push_str(side);
                out.push(' ');
                out.push_str(&i.to_string());
                for x in v {
                    out.push_str(&format!(" {x:.10}"));
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.render().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |line: usize, message: String| Error::Parse {
            path: path.into(),
            line: line as u64,
            message,
        };
        let mut lines = text.lines().enumerate();
        let dim: usize = lines
            .next()
            .and_then(|(_, l)| l.trim().parse().ok())
            .ok_or_else(|| bad(1, "first line must be the dimension".into()))?;
        let mut left: Vec<Option<Vec<f64>>> = Vec::new();
        let mut right: Vec<Option<Vec<f64>>> = Vec::new();
        for (n, line) in lines {
            let line_no = n + 1;
            let mut tok = line.split_whitespace();
            let Some(side) = tok.next() else { continue };
            let rows = match side {
                "left" => &mut left,
                "right" => &mut right,
                other => return Err(bad(line_no, format!("unknown side {other:?}"))),
            };
            let index: usize = tok
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad(line_no, "missing node index".into()))?;
            let v = tok
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| bad(line_no, format!("bad value {t:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if v.len() != dim {
                return Err(bad(
                    line_no,
                    format!("expected {dim} values, found {}", v.len()),
                ));
            }
            if rows.len() <= index {
                rows.resize(index + 1, None);
            }
            rows[index] = Some(v);
        }
        let fill = |rows: Vec<Option<Vec<f64>>>| {
            rows.into_iter()
                .map(|r| r.unwrap_or_else(|| vec![0.0; dim]))
                .collect()
        };
        Self::new(dim, fill(left), fill(right))
    }
}

/// The three edge sets of one bipartite hyperedge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpandedEdges {
    /// `f × f'`.
    pub cross: Vec<(NodeId, NodeId)>,
    /// 2-subsets of `f`.
    pub left_self: Vec<(NodeId, NodeId)>,
    /// 2-subsets of `f'`.
    pub right_self: Vec<(NodeId, NodeId)>,
}

impl ExpandedEdges {
    pub fn all(&self) -> impl Iterator<Item = &(NodeId, NodeId)> {
        self.cross
            .iter()
            .chain(&self.left_self)
            .chain(&self.right_self)
    }
}

fn pairs_within(nodes: Vec<NodeId>) -> Vec<(NodeId, NodeId)> {
    let mut out = Vec::new();
    for (i, &a) in nodes.iter().enumerate() {
        for &b in &nodes[i + 1..] {
            out.push((a, b));
        }
    }
    out
}

pub fn expand_hyperedge_edges(b: &BipartiteHyperedge) -> ExpandedEdges {
    let cross = b
        .left()
        .nodes()
        .flat_map(|v| b.right().nodes().map(move |w| (v, w)))
        .collect();
    ExpandedEdges {
        cross,
        left_self: pairs_within(b.left().nodes().collect()),
        right_self: pairs_within(b.right().nodes().collect()),
    }
}

/// Union of the expanded edges over every incidence of `h`.
pub fn expanded_graph(h: &BipartiteHypergraph) -> WalkGraph {
    let mut g = WalkGraph::empty(h.left_vocab_size(), h.right_vocab_size());
    for b in h.hyperedges() {
        for &(a, c) in expand_hyperedge_edges(&b).all() {
            g.add_edge(a, c);
        }
    }
    g.finish();
    g
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum N2vMode {
    CrossMean,
    FullMean,
    CrossMin,
    FullMin,
}

impl N2vMode {
    pub const ALL: [N2vMode; 4] = [
        N2vMode::CrossMean,
        N2vMode::FullMean,
        N2vMode::CrossMin,
        N2vMode::FullMin,
    ];
}

impl fmt::Display for N2vMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            N2vMode::CrossMean => "cross_mean",
            N2vMode::FullMean => "full_mean",
            N2vMode::CrossMin => "cross_min",
            N2vMode::FullMin => "full_min",
        })
    }
}

impl FromStr for N2vMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        N2vMode::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown n2v mode {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    #[default]
    Dot,
    Cosine,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn similarity(a: &[f64], b: &[f64], sim: Similarity) -> f64 {
    match sim {
        Similarity::Dot => dot(a, b),
        Similarity::Cosine => {
            let n = (dot(a, a) * dot(b, b)).sqrt();
            if n == 0.0 {
                0.0
            } else {
                dot(a, b) / n
            }
        }
    }
}

/// Mean or min of pairwise similarities over `f × f'` (cross) or over all
/// expanded edges (full).
pub fn n2v_score(
    emb: &EmbeddingTable,
    b: &BipartiteHyperedge,
    mode: N2vMode,
    sim: Similarity,
) -> Result<f64> {
    emb.check_covers(b)?;
    let edges = expand_hyperedge_edges(b);
    let score = |&(u, v): &(NodeId, NodeId)| {
        similarity(
            emb.get(u).expect("covered"),
            emb.get(v).expect("covered"),
            sim,
        )
    };
    let values: Vec<f64> = match mode {
        N2vMode::CrossMean | N2vMode::CrossMin => edges.cross.iter().map(score).collect(),
        N2vMode::FullMean | N2vMode::FullMin => edges.all().map(score).collect(),
    };
    Ok(match mode {
        N2vMode::CrossMean | N2vMode::FullMean => values.iter().sum::<f64>() / values.len() as f64,
        N2vMode::CrossMin | N2vMode::FullMin => {
            values.iter().copied().fold(f64::INFINITY, f64::min)
        }
    })
}

/// node2vec on the expanded graph of `h`.
pub fn node2vec_embeddings(
    h: &BipartiteHypergraph,
    cfg: &WalkConfig,
    dim: usize,
) -> Result<(EmbeddingTable, SkipGramReport)> {
    cfg.validate()?;
    let graph = expanded_graph(h);
    let corpus = node2vec_walks(&graph, cfg);
    train_skipgram(&corpus, graph.left_size(), graph.right_size(), dim, cfg)
}

/// Skip-gram over alternating node/hyperedge walks on `h`; these are the
/// attention models' input features.
pub fn hypergraph_walk_embeddings(
    h: &BipartiteHypergraph,
    cfg: &WalkConfig,
    dim: usize,
) -> Result<(EmbeddingTable, SkipGramReport)> {
    cfg.validate()?;
    let corpus = alternating_hypergraph_walks(h, cfg);
    train_skipgram(&corpus, h.left_vocab_size(), h.right_vocab_size(), dim, cfg)
}
