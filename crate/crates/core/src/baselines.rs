//! Bipartite common-neighbour and Adamic-Adar scores, lifted from node pairs
//! to hyperedge pairs by min, max or mean.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::hypergraph::{BipartiteHyperedge, NodeGraph};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Cn,
    Aa,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Min,
    Max,
    Avg,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Cn => "cn",
            Algo::Aa => "aa",
        })
    }
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregate::Min => "min",
            Aggregate::Max => "max",
            Aggregate::Avg => "avg",
        })
    }
}

impl FromStr for Algo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cn" => Ok(Algo::Cn),
            "aa" => Ok(Algo::Aa),
            _ => Err(Error::InvalidConfig(format!("unknown algorithm {s:?}"))),
        }
    }
}

impl FromStr for Aggregate {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "min" => Ok(Aggregate::Min),
            "max" => Ok(Aggregate::Max),
            "avg" | "mean" => Ok(Aggregate::Avg),
            _ => Err(Error::InvalidConfig(format!("unknown aggregate {s:?}"))),
        }
    }
}

impl Aggregate {
    pub fn apply(self, values: impl IntoIterator<Item = f64>) -> f64 {
        let mut n = 0usize;
        let mut acc = match self {
            Aggregate::Min => f64::INFINITY,
            Aggregate::Max => f64::NEG_INFINITY,
            Aggregate::Avg => 0.0,
        };
        for v in values {
            n += 1;
            acc = match self {
                Aggregate::Min => acc.min(v),
                Aggregate::Max => acc.max(v),
                Aggregate::Avg => acc + v,
            };
        }
        assert!(n > 0, "aggregate over an empty set");
        match self {
            Aggregate::Avg => acc / n as f64,
            _ => acc,
        }
    }
}

/// Neighbour lists of the node-level bipartite graph, sorted ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct BipartiteAdjacency {
    left: Vec<Vec<usize>>,
    right: Vec<Vec<usize>>,
}

impl BipartiteAdjacency {
    pub fn new(graph: &NodeGraph) -> Self {
        let mut left = vec![Vec::new(); graph.left_size];
        let mut right = vec![Vec::new(); graph.right_size];
        for &(v, w) in &graph.edges {
            left[v].push(w);
            right[w].push(v);
        }
        for list in left.iter_mut().chain(right.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        Self { left, right }
    }

    /// `Γ(v)` for a left node.
    pub fn left_neighbors(&self, v: usize) -> &[usize] {
        self.left.get(v).map_or(&[], Vec::as_slice)
    }

    /// `Γ(v')` for a right node.
    pub fn right_neighbors(&self, w: usize) -> &[usize] {
        self.right.get(w).map_or(&[], Vec::as_slice)
    }

    pub fn left_size(&self) -> usize {
        self.left.len()
    }

    pub fn right_size(&self) -> usize {
        self.right.len()
    }

    /// One half of the pair score: nodes `w` of `two_hop(a) \ {a}` that are
    /// also in `Γ(c) \ {a}`, where `a` and `c` sit on opposite sides.
    fn half(
        &self,
        a: usize,
        near: &[Vec<usize>],
        far: &[Vec<usize>],
        c_neighbors: &[usize],
        algo: Algo,
    ) -> f64 {
        let mut hop = Vec::new();
        for &m in near.get(a).map_or(&[][..], Vec::as_slice) {
            hop.extend_from_slice(&far[m]);
        }
        hop.sort_unstable();
        hop.dedup();
        let mut score = 0.0;
        for &w in c_neighbors {
            if w != a && hop.binary_search(&w).is_ok() {
                score += match algo {
                    Algo::Cn => 1.0,
                    Algo::Aa => 1.0 / (1.0 + near[w].len() as f64).ln(),
                };
            }
        }
        score
    }

    /// `(L(v, v') + R(v, v')) / 2`.
    pub fn pair_score(&self, v: usize, w: usize, algo: Algo) -> f64 {
        let l = self.half(v, &self.left, &self.right, self.right_neighbors(w), algo);
        let r = self.half(w, &self.right, &self.left, self.left_neighbors(v), algo);
        (l + r) / 2.0
    }

    pub fn hyperedge_score(&self, b: &BipartiteHyperedge, algo: Algo, agg: Aggregate) -> f64 {
        let left = b.left().members();
        let right = b.right().members();
        agg.apply(
            left.iter()
                .flat_map(|&v| right.iter().map(move |&w| self.pair_score(v, w, algo))),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::BipartiteHypergraph;

    fn path() -> BipartiteAdjacency {
        // a=0, b=1 on the left, x=0 on the right.
        BipartiteAdjacency::new(&NodeGraph {
            left_size: 2,
            right_size: 1,
            edges: vec![(0, 0), (1, 0)],
        })
    }

    #[test]
    fn path_graph() {
        let adj = path();
        assert_eq!(adj.pair_score(0, 0, Algo::Cn), 0.5);
        assert!((adj.pair_score(0, 0, Algo::Aa) - 0.5 / 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn disconnected_pairs_score_zero() {
        let adj = BipartiteAdjacency::new(&NodeGraph {
            left_size: 2,
            right_size: 2,
            edges: vec![(0, 0), (1, 1)],
        });
        assert_eq!(adj.pair_score(0, 1, Algo::Cn), 0.0);
        assert_eq!(adj.pair_score(0, 1, Algo::Aa), 0.0);
    }

    #[test]
    fn aggregates_order() {
        let h = BipartiteHypergraph::from_pairs(vec![
            (vec![0, 1], vec![0, 1]),
            (vec![1, 2], vec![1]),
            (vec![2], vec![2]),
        ])
        .unwrap();
        let adj = BipartiteAdjacency::new(&h.node_level_graph());
        let b = h.pair(0, 1);
        for algo in [Algo::Cn, Algo::Aa] {
            let lo = adj.hyperedge_score(&b, algo, Aggregate::Min);
            let mid = adj.hyperedge_score(&b, algo, Aggregate::Avg);
            let hi = adj.hyperedge_score(&b, algo, Aggregate::Max);
            assert!(lo <= mid && mid <= hi);
        }
        let single = h.pair(2, 2);
        let p = adj.pair_score(2, 2, Algo::Cn);
        for agg in [Aggregate::Min, Aggregate::Max, Aggregate::Avg] {
            assert_eq!(adj.hyperedge_score(&single, Algo::Cn, agg), p);
        }
    }

    #[test]
    fn names_parse() {
        assert_eq!("AA".parse::<Algo>().unwrap(), Algo::Aa);
        assert_eq!("avg".parse::<Aggregate>().unwrap(), Aggregate::Avg);
        assert!("katz".parse::<Algo>().is_err());
    }
}
