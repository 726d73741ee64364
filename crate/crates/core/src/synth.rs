//! Planted-matching generator for self-contained experiments.
//!
//! Each side's nodes are split into latent clusters laid out on a ring. A
//! positive picks a cluster and a ring position, then draws its left part
//! from the left ring and its right part from the right ring around that
//! same position. With probability `noise` each member is swapped for a
//! uniformly random node of its side.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::hypergraph::{BipartiteHypergraph, RawIncidence};
use crate::rng::{derive_path, rng_from, stream, Rng};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub clusters: usize,
    pub nodes_per_side: usize,
    pub positives: usize,
    /// Inclusive range of `|f|` and `|f'|`.
    pub size: (usize, usize),
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            clusters: 2,
            nodes_per_side: 200,
            positives: 400,
            size: (2, 4),
            noise: 0.05,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.clusters == 0 || self.nodes_per_side < self.clusters {
            return bad(format!(
                "need 1 <= clusters <= nodes per side, got {} and {}",
                self.clusters, self.nodes_per_side
            ));
        }
        let smallest = self.nodes_per_side / self.clusters;
        if self.size.0 == 0 || self.size.0 > self.size.1 || 2 * self.size.1 > smallest {
            return bad(format!(
                "size range [{}, {}] must satisfy 1 <= min <= max <= cluster size / 2 ({smallest})",
                self.size.0, self.size.1
            ));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return bad(format!("noise {} outside [0, 1]", self.noise));
        }
        if self.positives == 0 {
            return bad("positives must be at least 1".into());
        }
        Ok(())
    }

    fn cluster_range(&self, c: usize) -> std::ops::Range<usize> {
        let n = self.nodes_per_side;
        (c * n / self.clusters)..((c + 1) * n / self.clusters)
    }

    /// Members around ring position `pos` (a fraction in `[0, 1)`) of
    /// cluster `c`.
    fn draw_part(&self, c: usize, pos: f64, rng: &mut Rng) -> Vec<usize> {
        let range = self.cluster_range(c);
        let m = range.len();
        let k = rng.gen_range(self.size.0..=self.size.1);
        let window = 2 * k;
        let centre = (pos * m as f64) as usize;
        let start = centre + m - window / 2;
        let mut members: Vec<usize> = index::sample(rng, window, k)
            .into_iter()
            .map(|o| range.start + (start + o) % m)
            .collect();
        for i in 0..members.len() {
            if rng.gen::<f64>() < self.noise {
                let v = rng.gen_range(0..self.nodes_per_side);
                if !members.contains(&v) {
                    members[i] = v;
                }
            }
        }
        members
    }
}

/// Draws `spec.positives` distinct incidences.
pub fn planted_matching(spec: &SynthSpec) -> Result<BipartiteHypergraph> {
    spec.validate()?;
    let mut rng = rng_from(derive_path(spec.seed, &[stream::SYNTH]));
    let mut seen = HashSet::new();
    let mut raw = Vec::with_capacity(spec.positives);
    let budget = 100 * spec.positives as u64;
    let mut attempts = 0;
    while raw.len() < spec.positives {
        attempts += 1;
        if attempts > budget {
            return Err(Error::BudgetExhausted {
                attempts: budget,
                context: format!("planted matching with {} positives", spec.positives),
            });
        }
        let c = rng.gen_range(0..spec.clusters);
        let pos: f64 = rng.gen();
        let mut left = spec.draw_part(c, pos, &mut rng);
        let mut right = spec.draw_part(c, pos, &mut rng);
        left.sort_unstable();
        right.sort_unstable();
        if seen.insert((left.clone(), right.clone())) {
            raw.push(RawIncidence::new(left, right));
        }
    }
    let (h, _) =
        BipartiteHypergraph::from_incidences(spec.nodes_per_side, spec.nodes_per_side, raw)?;
    Ok(h)
}
