//! Walk corpora. Nodes of both sides share one index space: left node `i`
//! is `i`, right node `j` is `left_size + j`.

use rand::Rng as _;
use rayon::prelude::*;

use super::WalkConfig;
use crate::hypergraph::{BipartiteHypergraph, NodeId, Side};
use crate::rng::{derive_path, rng_from, stream, Rng};

/// Simple undirected graph over the unified node space.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkGraph {
    left_size: usize,
    right_size: usize,
    adj: Vec<Vec<usize>>,
}

impl WalkGraph {
    pub fn empty(left_size: usize, right_size: usize) -> Self {
        Self {
            left_size,
            right_size,
            adj: vec![Vec::new(); left_size + right_size],
        }
    }

    pub fn index(&self, n: NodeId) -> usize {
        match n.side {
            Side::Left => n.index,
            Side::Right => self.left_size + n.index,
        }
    }

    pub fn node(&self, u: usize) -> NodeId {
        if u < self.left_size {
            NodeId::left(u)
        } else {
            NodeId::right(u - self.left_size)
        }
    }

    pub fn add_edge(&mut self, a: NodeId, b: NodeId) {
        let (a, b) = (self.index(a), self.index(b));
        if a != b {
            self.adj[a].push(b);
            self.adj[b].push(a);
        }
    }

    /// Sorts and deduplicates neighbour lists; call after the last
    /// `add_edge`.
    pub fn finish(&mut self) {
        for l in &mut self.adj {
            l.sort_unstable();
            l.dedup();
        }
    }

    pub fn left_size(&self) -> usize {
        self.left_size
    }

    pub fn right_size(&self) -> usize {
        self.right_size
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adj[u]
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }
}

fn walk_rng(cfg: &WalkConfig, round: usize, start: usize) -> Rng {
    rng_from(derive_path(
        cfg.seed,
        &[stream::WALKS, round as u64, start as u64],
    ))
}

fn node2vec_walk(g: &WalkGraph, start: usize, cfg: &WalkConfig, rng: &mut Rng) -> Vec<usize> {
    let mut walk = vec![start];
    let uniform = cfg.p == 1.0 && cfg.q == 1.0;
    let mut weights = Vec::new();
    while walk.len() < cfg.walk_length {
        let cur = *walk.last().expect("non-empty");
        let nbrs = g.neighbors(cur);
        if nbrs.is_empty() {
            break;
        }
        let next = if uniform || walk.len() == 1 {
            nbrs[rng.gen_range(0..nbrs.len())]
        } else {
            let prev = walk[walk.len() - 2];
            let prev_nbrs = g.neighbors(prev);
            weights.clear();
            weights.extend(nbrs.iter().map(|&x| {
                if x == prev {
                    1.0 / cfg.p
                } else if prev_nbrs.binary_search(&x).is_ok() {
                    1.0
                } else {
                    1.0 / cfg.q
                }
            }));
            let total: f64 = weights.iter().sum();
            let mut r = rng.gen::<f64>() * total;
            let mut pick = nbrs.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if r < *w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            nbrs[pick]
        };
        walk.push(next);
    }
    walk
}

/// `walks_per_node` rounds of biased second-order walks from every node,
/// ordered by round then start node.
pub fn node2vec_walks(g: &WalkGraph, cfg: &WalkConfig) -> Vec<Vec<usize>> {
    let n = g.len();
    (0..cfg.walks_per_node * n)
        .into_par_iter()
        .map(|k| {
            let (round, start) = (k / n, k % n);
            node2vec_walk(g, start, cfg, &mut walk_rng(cfg, round, start))
        })
        .collect()
}

/// One step of an alternating walk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Token {
    Node(usize),
    /// Incidence index into `B`.
    Hyperedge(usize),
}

struct Incidence {
    members: Vec<Vec<usize>>,
    of_node: Vec<Vec<usize>>,
}

fn incidence_structure(h: &BipartiteHypergraph) -> Incidence {
    let ls = h.left_vocab_size();
    let mut of_node = vec![Vec::new(); ls + h.right_vocab_size()];
    let members: Vec<Vec<usize>> = h
        .hyperedges()
        .map(|b| {
            b.left()
                .members()
                .iter()
                .copied()
                .chain(b.right().members().iter().map(|&j| ls + j))
                .collect()
        })
        .collect();
    for (i, m) in members.iter().enumerate() {
        for &u in m {
            of_node[u].push(i);
        }
    }
    Incidence { members, of_node }
}

fn alternating_walk(inc: &Incidence, start: usize, len: usize, rng: &mut Rng) -> Vec<Token> {
    let mut trace = vec![Token::Node(start)];
    let mut cur = start;
    for _ in 1..len {
        let edges = &inc.of_node[cur];
        if edges.is_empty() {
            break;
        }
        let e = edges[rng.gen_range(0..edges.len())];
        let members = &inc.members[e];
        // Uniform over the other members of the hyperedge.
        let mut k = rng.gen_range(0..members.len() - 1);
        if members[k] == cur || members[..k].contains(&cur) {
            k += 1;
        }
        cur = members[k];
        trace.push(Token::Hyperedge(e));
        trace.push(Token::Node(cur));
    }
    trace
}

/// Raw trace of one alternating walk, including hyperedge tokens.
pub fn alternating_trace(
    h: &BipartiteHypergraph,
    start: NodeId,
    len: usize,
    seed: u64,
) -> Vec<Token> {
    let inc = incidence_structure(h);
    let start = match start.side {
        Side::Left => start.index,
        Side::Right => h.left_vocab_size() + start.index,
    };
    alternating_walk(&inc, start, len, &mut rng_from(seed))
}

/// Node → incident hyperedge → other member → ... walks on `h`; only the
/// node visits are kept.
pub fn alternating_hypergraph_walks(h: &BipartiteHypergraph, cfg: &WalkConfig) -> Vec<Vec<usize>> {
    let inc = incidence_structure(h);
    let n = inc.of_node.len();
    (0..cfg.walks_per_node * n)
        .into_par_iter()
        .map(|k| {
            let (round, start) = (k / n, k % n);
            alternating_walk(
                &inc,
                start,
                cfg.walk_length,
                &mut walk_rng(cfg, round, start),
            )
            .into_iter()
            .filter_map(|t| match t {
                Token::Node(u) => Some(u),
                Token::Hyperedge(_) => None,
            })
            .collect()
        })
        .collect()
}
