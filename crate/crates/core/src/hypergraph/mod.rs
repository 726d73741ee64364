//! Per-fixed bipartite hypergraphs.
//!
//! A hypergraph holds two node vocabularies (left and right), the fixed
//! left and right hyperedges `F` and `F'`, and the observed incidences
//! `B ⊆ F × F'`. Non-incidences are never materialised; samplers and
//! oracles derive them on demand.

mod filter;
pub(crate) mod io;

pub use filter::{apply_filters, FilterSpec};
pub use io::{load_dataset, load_vocab, render_dataset, save_dataset, DatasetFormat, LoadReport};

use std::collections::hash_map::Entry;
use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// A node of either side. Left and right indices live in separate
/// namespaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub side: Side,
    pub index: usize,
}

impl NodeId {
    pub fn left(index: usize) -> Self {
        Self {
            side: Side::Left,
            index,
        }
    }

    pub fn right(index: usize) -> Self {
        Self {
            side: Side::Right,
            index,
        }
    }
}

/// A non-empty set of same-side nodes, stored sorted and duplicate-free.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Hyperedge {
    side: Side,
    members: Vec<usize>,
}

impl Hyperedge {
    /// Canonicalises `members` (sort + dedup). Fails on an empty set.
    pub fn new(side: Side, mut members: Vec<usize>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidHyperedge(format!("empty {side:?} hyperedge")));
        }
        members.sort_unstable();
        members.dedup();
        Ok(Self { side, members })
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.members.binary_search(&index).is_ok()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        let side = self.side;
        self.members
            .iter()
            .map(move |&index| NodeId { side, index })
    }
}

impl fmt::Display for Hyperedge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for m in &self.members {
            if !first {
                f.write_str(" ")?;
            }
            write!(f, "{m}")?;
            first = false;
        }
        Ok(())
    }
}

/// A bipartite hyperedge `b = f ∪ f'`, kept as its matched pair `(f, f')`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BipartiteHyperedge {
    left: Hyperedge,
    right: Hyperedge,
}

impl BipartiteHyperedge {
    pub fn left(&self) -> &Hyperedge {
        &self.left
    }

    pub fn right(&self) -> &Hyperedge {
        &self.right
    }

    /// Builds `b` from a raw union of side-tagged nodes.
    pub fn from_union(nodes: &[NodeId]) -> Result<Self> {
        let pick = |side| {
            nodes
                .iter()
                .filter(|n| n.side == side)
                .map(|n| n.index)
                .collect::<Vec<_>>()
        };
        join_sigma_inverse(
            &Hyperedge::new(Side::Left, pick(Side::Left))?,
            &Hyperedge::new(Side::Right, pick(Side::Right))?,
        )
    }

    /// The union set `f ∪ f'`, sorted (left nodes first).
    pub fn union(&self) -> Vec<NodeId> {
        self.left.nodes().chain(self.right.nodes()).collect()
    }

    pub fn len(&self) -> usize {
        self.left.len() + self.right.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// `σ(b) = (b ∩ V, b ∩ V')`.
pub fn split_sigma(b: &BipartiteHyperedge) -> (Hyperedge, Hyperedge) {
    let union = b.union();
    let side = |s| Hyperedge {
        side: s,
        members: union
            .iter()
            .filter(|n| n.side == s)
            .map(|n| n.index)
            .collect(),
    };
    (side(Side::Left), side(Side::Right))
}

/// `σ⁻¹(f, f') = f ∪ f'`.
pub fn join_sigma_inverse(left: &Hyperedge, right: &Hyperedge) -> Result<BipartiteHyperedge> {
    if left.side != Side::Left || right.side != Side::Right {
        return Err(Error::InvalidHyperedge(format!(
            "join expects (Left, Right), got ({:?}, {:?})",
            left.side, right.side
        )));
    }
    if left.is_empty() || right.is_empty() {
        return Err(Error::InvalidHyperedge("join with an empty side".into()));
    }
    Ok(BipartiteHyperedge {
        left: left.clone(),
        right: right.clone(),
    })
}

/// `H = (V, V', F, F', B)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BipartiteHypergraph {
    left_vocab_size: usize,
    right_vocab_size: usize,
    left_hyperedges: Vec<Hyperedge>,
    right_hyperedges: Vec<Hyperedge>,
    incidences: Vec<(usize, usize)>,
    timestamps: Option<Vec<i64>>,
    left_labels: Option<Vec<String>>,
    right_labels: Option<Vec<String>>,
}

/// One raw incidence before canonicalisation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawIncidence {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub timestamp: Option<i64>,
}

impl RawIncidence {
    pub fn new(left: Vec<usize>, right: Vec<usize>) -> Self {
        Self {
            left,
            right,
            timestamp: None,
        }
    }
}

impl BipartiteHypergraph {
    /// Builds the canonical form of a list of incidences.
    ///
    /// `F` and `F'` become the distinct observed left/right hyperedges in
    /// lexicographic order, and `B` is sorted. Repeated incidences are
    /// collapsed onto their first occurrence; the number collapsed is
    /// returned alongside the graph. Timestamps are kept only when every
    /// incidence carries one.
    pub fn from_incidences(
        left_vocab_size: usize,
        right_vocab_size: usize,
        raw: Vec<RawIncidence>,
    ) -> Result<(Self, usize)> {
        let timed = !raw.is_empty() && raw.iter().all(|r| r.timestamp.is_some());
        let mut pairs = Vec::with_capacity(raw.len());
        for r in raw {
            let f = Hyperedge::new(Side::Left, r.left)?;
            let g = Hyperedge::new(Side::Right, r.right)?;
            if let Some(&m) = f.members.last() {
                if m >= left_vocab_size {
                    return Err(Error::InvalidHyperedge(format!(
                        "left node {m} outside vocabulary of {left_vocab_size}"
                    )));
                }
            }
            if let Some(&m) = g.members.last() {
                if m >= right_vocab_size {
                    return Err(Error::InvalidHyperedge(format!(
                        "right node {m} outside vocabulary of {right_vocab_size}"
                    )));
                }
            }
            pairs.push((f, g, r.timestamp));
        }

        let left_set: BTreeSet<&Hyperedge> = pairs.iter().map(|p| &p.0).collect();
        let right_set: BTreeSet<&Hyperedge> = pairs.iter().map(|p| &p.1).collect();
        let left_hyperedges: Vec<Hyperedge> = left_set.into_iter().cloned().collect();
        let right_hyperedges: Vec<Hyperedge> = right_set.into_iter().cloned().collect();
        let left_pos: HashMap<&Hyperedge, usize> = left_hyperedges
            .iter()
            .enumerate()
            .map(|(i, h)| (h, i))
            .collect();
        let right_pos: HashMap<&Hyperedge, usize> = right_hyperedges
            .iter()
            .enumerate()
            .map(|(i, h)| (h, i))
            .collect();

        let mut seen = HashMap::new();
        let mut duplicates = 0;
        for (f, g, t) in &pairs {
            let key = (left_pos[f], right_pos[g]);
            match seen.entry(key) {
                Entry::Occupied(_) => duplicates += 1,
                Entry::Vacant(slot) => {
                    slot.insert(*t);
                }
            }
        }
        let mut incidences: Vec<((usize, usize), Option<i64>)> = seen.into_iter().collect();
        incidences.sort_unstable_by_key(|(k, _)| *k);
        let timestamps = timed.then(|| incidences.iter().map(|(_, t)| t.unwrap_or(0)).collect());

        Ok((
            Self {
                left_vocab_size,
                right_vocab_size,
                left_hyperedges,
                right_hyperedges,
                incidences: incidences.into_iter().map(|(k, _)| k).collect(),
                timestamps,
                left_labels: None,
                right_labels: None,
            },
            duplicates,
        ))
    }

    /// Like [`from_incidences`](Self::from_incidences) with vocabularies
    /// sized to the largest index seen.
    pub fn from_pairs(pairs: Vec<(Vec<usize>, Vec<usize>)>) -> Result<Self> {
        let left = pairs
            .iter()
            .flat_map(|p| p.0.iter())
            .max()
            .map_or(0, |m| m + 1);
        let right = pairs
            .iter()
            .flat_map(|p| p.1.iter())
            .max()
            .map_or(0, |m| m + 1);
        let raw = pairs
            .into_iter()
            .map(|(l, r)| RawIncidence::new(l, r))
            .collect();
        Ok(Self::from_incidences(left, right, raw)?.0)
    }

    pub fn with_labels(
        mut self,
        left: Option<Vec<String>>,
        right: Option<Vec<String>>,
    ) -> Result<Self> {
        if let Some(l) = &left {
            if l.len() != self.left_vocab_size {
                return Err(Error::InvalidConfig(format!(
                    "{} left labels for a vocabulary of {}",
                    l.len(),
                    self.left_vocab_size
                )));
            }
        }
        if let Some(r) = &right {
            if r.len() != self.right_vocab_size {
                return Err(Error::InvalidConfig(format!(
                    "{} right labels for a vocabulary of {}",
                    r.len(),
                    self.right_vocab_size
                )));
            }
        }
        self.left_labels = left;
        self.right_labels = right;
        Ok(self)
    }

    pub fn left_vocab_size(&self) -> usize {
        self.left_vocab_size
    }

    pub fn right_vocab_size(&self) -> usize {
        self.right_vocab_size
    }

    pub fn vocab_size(&self, side: Side) -> usize {
        match side {
            Side::Left => self.left_vocab_size,
            Side::Right => self.right_vocab_size,
        }
    }

    /// `F`.
    pub fn left_hyperedges(&self) -> &[Hyperedge] {
        &self.left_hyperedges
    }

    /// `F'`.
    pub fn right_hyperedges(&self) -> &[Hyperedge] {
        &self.right_hyperedges
    }

    /// `B`, as index pairs into `F × F'`.
    pub fn incidences(&self) -> &[(usize, usize)] {
        &self.incidences
    }

    pub fn timestamps(&self) -> Option<&[i64]> {
        self.timestamps.as_deref()
    }

    pub fn left_labels(&self) -> Option<&[String]> {
        self.left_labels.as_deref()
    }

    pub fn right_labels(&self) -> Option<&[String]> {
        self.right_labels.as_deref()
    }

    pub fn num_incidences(&self) -> usize {
        self.incidences.len()
    }

    /// The bipartite hyperedge for incidence `i`.
    pub fn hyperedge(&self, i: usize) -> BipartiteHyperedge {
        let (f, g) = self.incidences[i];
        self.pair(f, g)
    }

    /// `f_i ∪ f'_j` for indices into `F` and `F'`.
    pub fn pair(&self, f: usize, g: usize) -> BipartiteHyperedge {
        BipartiteHyperedge {
            left: self.left_hyperedges[f].clone(),
            right: self.right_hyperedges[g].clone(),
        }
    }

    pub fn hyperedges(&self) -> impl Iterator<Item = BipartiteHyperedge> + '_ {
        (0..self.incidences.len()).map(|i| self.hyperedge(i))
    }

    /// Re-runs canonicalisation; a no-op on any graph this crate produced.
    pub fn canonicalize(&self) -> Result<Self> {
        let raw = self
            .incidences
            .iter()
            .enumerate()
            .map(|(i, &(f, g))| RawIncidence {
                left: self.left_hyperedges[f].members.clone(),
                right: self.right_hyperedges[g].members.clone(),
                timestamp: self.timestamps.as_ref().map(|t| t[i]),
            })
            .collect();
        let (h, _) = Self::from_incidences(self.left_vocab_size, self.right_vocab_size, raw)?;
        h.with_labels(self.left_labels.clone(), self.right_labels.clone())
    }

    /// Number of incidences in `B` containing each node, per side.
    pub fn occurrence_counts(&self) -> (Vec<usize>, Vec<usize>) {
        let mut left = vec![0; self.left_vocab_size];
        let mut right = vec![0; self.right_vocab_size];
        for &(f, g) in &self.incidences {
            for &v in &self.left_hyperedges[f].members {
                left[v] += 1;
            }
            for &v in &self.right_hyperedges[g].members {
                right[v] += 1;
            }
        }
        (left, right)
    }

    /// `(F, F', B)` viewed as a bipartite graph between hyperedges.
    pub fn hyperedge_level_graph(&self) -> HyperedgeGraph {
        let mut left_adj = vec![Vec::new(); self.left_hyperedges.len()];
        let mut right_adj = vec![Vec::new(); self.right_hyperedges.len()];
        for &(f, g) in &self.incidences {
            left_adj[f].push(g);
            right_adj[g].push(f);
        }
        HyperedgeGraph {
            left_adj,
            right_adj,
            edges: self.incidences.clone(),
        }
    }

    /// The induced node-level bipartite graph with edges
    /// `{(v, v') | some b ∈ B contains both}`.
    pub fn node_level_graph(&self) -> NodeGraph {
        let edges: BTreeSet<(usize, usize)> = self
            .incidences
            .iter()
            .flat_map(|&(f, g)| {
                let right = &self.right_hyperedges[g].members;
                self.left_hyperedges[f]
                    .members
                    .iter()
                    .flat_map(move |&v| right.iter().map(move |&w| (v, w)))
            })
            .collect();
        NodeGraph {
            left_size: self.left_vocab_size,
            right_size: self.right_vocab_size,
            edges: edges.into_iter().collect(),
        }
    }

    /// Every pair of `F × F'`, i.e. all potential bipartite hyperedges.
    pub fn enumerate_potential(&self, cap: u128) -> Result<impl Iterator<Item = (usize, usize)>> {
        let (nf, ng) = (self.left_hyperedges.len(), self.right_hyperedges.len());
        let pairs = nf as u128 * ng as u128;
        if pairs > cap {
            return Err(Error::CapExceeded { pairs, cap });
        }
        Ok((0..nf).flat_map(move |f| (0..ng).map(move |g| (f, g))))
    }

    /// Membership test over `B`.
    pub fn incidence_set(&self) -> std::collections::HashSet<(usize, usize)> {
        self.incidences.iter().copied().collect()
    }

    /// Restricts to the given incidences (indices into `B`), keeping
    /// vocabularies and the full `F`, `F'` so indices stay valid.
    pub fn with_incidence_subset(&self, keep: &[usize]) -> Self {
        let mut out = self.clone();
        out.incidences = keep.iter().map(|&i| self.incidences[i]).collect();
        out.timestamps = self
            .timestamps
            .as_ref()
            .map(|t| keep.iter().map(|&i| t[i]).collect());
        out
    }
}

/// Bipartite graph over hyperedges: `F` on one side, `F'` on the other.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperedgeGraph {
    pub left_adj: Vec<Vec<usize>>,
    pub right_adj: Vec<Vec<usize>>,
    pub edges: Vec<(usize, usize)>,
}

impl HyperedgeGraph {
    pub fn num_vertices(&self) -> usize {
        self.left_adj.len() + self.right_adj.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }
}

/// Simple bipartite graph over `V` and `V'`; edges sorted and unique.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeGraph {
    pub left_size: usize,
    pub right_size: usize,
    pub edges: Vec<(usize, usize)>,
}
