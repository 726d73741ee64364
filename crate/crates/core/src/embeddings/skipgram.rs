//! Skip-gram with negative sampling, trained by plain SGD with a linearly
//! decaying learning rate. Single-threaded and seed-deterministic.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{EmbeddingTable, WalkConfig};
use crate::rng::{derive_path, rng_from, stream};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkipGramReport {
    /// Mean loss per positive context pair, one entry per epoch.
    pub epoch_loss: Vec<f64>,
    pub pairs_per_epoch: usize,
    /// Nodes that never co-occur with another node; their vectors are zero.
    pub isolated: usize,
}

fn sigmoid(x: f64) -> f64 {
    setmatch_tensor::sigmoid(x)
}

const NOISE_TABLE: usize = 1 << 16;

/// Unigram table for `count^0.75` noise: each node fills a run of slots
/// proportional to its weight, so a uniform slot is a weighted draw.
fn noise_table(counts: &[u64]) -> Vec<u32> {
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let total: f64 = weights.iter().sum();
    let mut table = Vec::with_capacity(NOISE_TABLE);
    let mut cum = 0.0;
    for (u, w) in weights.iter().enumerate() {
        cum += w;
        let end = ((cum / total) * NOISE_TABLE as f64).round() as usize;
        while table.len() < end.min(NOISE_TABLE) {
            table.push(u as u32);
        }
    }
    let last = weights
        .iter()
        .rposition(|&w| w > 0.0)
        .expect("at least one positive count");
    table.resize(NOISE_TABLE, last as u32);
    table
}

/// Trains input vectors over the unified node space of `corpus` and splits
/// them back into left and right tables.
pub fn train_skipgram(
    corpus: &[Vec<usize>],
    left_size: usize,
    right_size: usize,
    dim: usize,
    cfg: &WalkConfig,
) -> Result<(EmbeddingTable, SkipGramReport)> {
    cfg.validate()?;
    if dim == 0 {
        return Err(Error::InvalidConfig(
            "embedding dimension must be at least 1".into(),
        ));
    }
    let n = left_size + right_size;
    let mut counts = vec![0u64; n];
    for walk in corpus.iter().filter(|w| w.len() > 1) {
        for &u in walk {
            counts[u] += 1;
        }
    }
    let isolated = counts.iter().filter(|&&c| c == 0).count();
    if isolated > 0 {
        log::warn!("{isolated} nodes have no walk context; their embeddings stay zero");
    }
    if isolated == n {
        return Err(Error::InvalidConfig(
            "walk corpus has no context pairs".into(),
        ));
    }

    let mut rng = rng_from(derive_path(cfg.seed, &[stream::SKIPGRAM]));
    let mut input: Vec<f64> = (0..n * dim)
        .map(|k| {
            if counts[k / dim] == 0 {
                0.0
            } else {
                (rng.gen::<f64>() - 0.5) / dim as f64
            }
        })
        .collect();
    let mut output = vec![0.0; n * dim];
    let noise = noise_table(&counts);

    let tokens: usize = corpus.iter().filter(|w| w.len() > 1).map(Vec::len).sum();
    let total_steps = (tokens * cfg.epochs).max(1) as f64;
    let mut step = 0usize;
    let mut grad = vec![0.0; dim];
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut pairs_per_epoch = 0;

    for _ in 0..cfg.epochs {
        let mut loss = 0.0;
        let mut pairs = 0usize;
        for walk in corpus.iter().filter(|w| w.len() > 1) {
            for i in 0..walk.len() {
                let lr = cfg.lr * (1.0 - step as f64 / total_steps).max(1e-4);
                step += 1;
                let center = walk[i];
                let span = rng.gen_range(1..=cfg.window);
                let lo = i.saturating_sub(span);
                let hi = (i + span).min(walk.len() - 1);
                for j in lo..=hi {
                    if j == i {
                        continue;
                    }
                    let ctx = walk[j];
                    pairs += 1;
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let vin = center * dim;
                    for k in 0..=cfg.negatives {
                        let (target, label) = if k == 0 {
                            (ctx, 1.0)
                        } else {
                            let t = noise[rng.gen_range(0..noise.len())] as usize;
                            if t == ctx {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let vout = target * dim;
                        let s: f64 = (0..dim).map(|d| input[vin + d] * output[vout + d]).sum();
                        let p = sigmoid(s);
                        loss -= if label == 1.0 {
                            p.max(1e-300).ln()
                        } else {
                            (1.0 - p).max(1e-300).ln()
                        };
                        let g = lr * (label - p);
                        for d in 0..dim {
                            grad[d] += g * output[vout + d];
                            output[vout + d] += g * input[vin + d];
                        }
                    }
                    for d in 0..dim {
                        input[vin + d] += grad[d];
                    }
                }
            }
        }
        let mean = if pairs == 0 { 0.0 } else { loss / pairs as f64 };
        log::debug!("skip-gram epoch loss {mean:.6}");
        epoch_loss.push(mean);
        pairs_per_epoch = pairs;
    }

    let row = |u: usize| input[u * dim..(u + 1) * dim].to_vec();
    let table = EmbeddingTable::new(
        dim,
        (0..left_size).map(row).collect(),
        (left_size..n).map(row).collect(),
    )?;
    Ok((
        table,
        SkipGramReport {
            epoch_loss,
            pairs_per_epoch,
            isolated,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isolated_nodes_stay_zero() {
        let corpus = vec![vec![0, 1, 0, 1], vec![2]];
        let cfg = WalkConfig {
            epochs: 2,
            ..WalkConfig::default()
        };
        let (emb, report) = train_skipgram(&corpus, 2, 1, 4, &cfg).unwrap();
        assert_eq!(report.isolated, 1);
        assert!(emb.side(crate::hypergraph::Side::Right)[0]
            .iter()
            .all(|&x| x == 0.0));
        assert!(emb.side(crate::hypergraph::Side::Left)[0]
            .iter()
            .any(|&x| x != 0.0));
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let cfg = WalkConfig::default();
        assert!(train_skipgram(&[vec![0]], 1, 1, 4, &cfg).is_err());
    }
}
