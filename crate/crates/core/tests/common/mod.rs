#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use setmatch_core::hypergraph::{BipartiteHypergraph, RawIncidence};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn subset(r: &mut ChaCha8Rng, n: usize, max: usize) -> Vec<usize> {
    let k = r.gen_range(1..=max.min(n));
    rand::seq::index::sample(r, n, k).into_vec()
}

/// Random graph with vocabularies up to `nv` and `nw` and up to `rows`
/// incidences.
pub fn random_graph(seed: u64, nv: usize, nw: usize, rows: usize) -> BipartiteHypergraph {
    let mut r = rng(seed);
    let lv = r.gen_range(1..=nv);
    let rv = r.gen_range(1..=nw);
    let m = r.gen_range(1..=rows);
    let timed = r.gen_bool(0.5);
    let raw = (0..m)
        .map(|_| RawIncidence {
            left: subset(&mut r, lv, 3),
            right: subset(&mut r, rv, 3),
            timestamp: timed.then(|| r.gen_range(1990..2020)),
        })
        .collect();
    BipartiteHypergraph::from_incidences(lv, rv, raw).unwrap().0
}
