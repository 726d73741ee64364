//! Sequential preprocessing filters: time, then node occurrence, then
//! hyperedge size.

use serde::{Deserialize, Serialize};

use super::{BipartiteHypergraph, RawIncidence};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    /// Inclusive `[o_min, o_max]` on the number of incidences containing a
    /// node.
    pub occurrence: (usize, usize),
    /// Inclusive `[s_min, s_max]` applied to `|f|` and `|f'|` separately.
    pub size: (usize, usize),
    /// Inclusive `[t_min, t_max]`; ignored for data without timestamps.
    #[serde(default)]
    pub time: Option<(i64, i64)>,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self::identity()
    }
}

impl FilterSpec {
    pub fn identity() -> Self {
        Self {
            occurrence: (0, usize::MAX),
            size: (1, usize::MAX),
            time: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.occurrence.0 > self.occurrence.1 {
            return Err(Error::InvalidFilter(format!(
                "o_min {} > o_max {}",
                self.occurrence.0, self.occurrence.1
            )));
        }
        if self.size.0 < 1 || self.size.0 > self.size.1 {
            return Err(Error::InvalidFilter(format!(
                "size range [{}, {}] must satisfy 1 <= s_min <= s_max",
                self.size.0, self.size.1
            )));
        }
        if let Some((lo, hi)) = self.time {
            if lo > hi {
                return Err(Error::InvalidFilter(format!("t_min {lo} > t_max {hi}")));
            }
        }
        Ok(())
    }
}

pub fn apply_filters(h: &BipartiteHypergraph, spec: &FilterSpec) -> Result<BipartiteHypergraph> {
    spec.validate()?;

    let mut rows: Vec<RawIncidence> = h
        .incidences()
        .iter()
        .enumerate()
        .map(|(i, &(f, g))| RawIncidence {
            left: h.left_hyperedges()[f].members().to_vec(),
            right: h.right_hyperedges()[g].members().to_vec(),
            timestamp: h.timestamps().map(|t| t[i]),
        })
        .collect();

    if let (Some((lo, hi)), Some(_)) = (spec.time, h.timestamps()) {
        rows.retain(|r| r.timestamp.is_some_and(|t| t >= lo && t <= hi));
    }

    let (o_min, o_max) = spec.occurrence;
    let mut left_count = vec![0usize; h.left_vocab_size()];
    let mut right_count = vec![0usize; h.right_vocab_size()];
    for r in &rows {
        r.left.iter().for_each(|&v| left_count[v] += 1);
        r.right.iter().for_each(|&v| right_count[v] += 1);
    }
    let keep = |c: usize| c >= o_min && c <= o_max;
    for r in &mut rows {
        r.left.retain(|&v| keep(left_count[v]));
        r.right.retain(|&v| keep(right_count[v]));
    }
    rows.retain(|r| !r.left.is_empty() && !r.right.is_empty());

    let (s_min, s_max) = spec.size;
    rows.retain(|r| {
        (s_min..=s_max).contains(&r.left.len()) && (s_min..=s_max).contains(&r.right.len())
    });

    if rows.is_empty() {
        return Err(Error::EmptyResult);
    }

    // Dense, order-preserving re-indexing over the surviving nodes.
    let left_map = dense_map(h.left_vocab_size(), rows.iter().flat_map(|r| r.left.iter()));
    let right_map = dense_map(
        h.right_vocab_size(),
        rows.iter().flat_map(|r| r.right.iter()),
    );
    let left_size = left_map.iter().flatten().count();
    let right_size = right_map.iter().flatten().count();
    for r in &mut rows {
        r.left
            .iter_mut()
            .for_each(|v| *v = left_map[*v].expect("kept"));
        r.right
            .iter_mut()
            .for_each(|v| *v = right_map[*v].expect("kept"));
    }
    let relabel = |labels: Option<&[String]>, map: &[Option<usize>]| {
        labels.map(|l| {
            map.iter()
                .enumerate()
                .filter(|(_, m)| m.is_some())
                .map(|(old, _)| l[old].clone())
                .collect::<Vec<_>>()
        })
    };
    let left_labels = relabel(h.left_labels(), &left_map);
    let right_labels = relabel(h.right_labels(), &right_map);

    let (out, _) = BipartiteHypergraph::from_incidences(left_size, right_size, rows)?;
    out.with_labels(left_labels, right_labels)
}

fn dense_map<'a>(size: usize, used: impl Iterator<Item = &'a usize>) -> Vec<Option<usize>> {
    let mut present = vec![false; size];
    used.for_each(|&v| present[v] = true);
    let mut next = 0;
    present
        .into_iter()
        .map(|p| {
            p.then(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}
