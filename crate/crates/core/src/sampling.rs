//! Negative sampling (per-fixed and sized-random) and repeated stratified
//! splits.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::hypergraph::{io::join_ids, BipartiteHyperedge, BipartiteHypergraph, Hyperedge, Side};
use crate::rng::{derive_path, rng_from, stream, Rng};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn target(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Observed,
    PerFixedNeg,
    SizedRandomNeg,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Observed => "observed",
            Origin::PerFixedNeg => "per_fixed",
            Origin::SizedRandomNeg => "sized_random",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "observed" => Some(Origin::Observed),
            "per_fixed" => Some(Origin::PerFixedNeg),
            "sized_random" => Some(Origin::SizedRandomNeg),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeMode {
    PerFixed,
    SizedRandom,
}

impl fmt::Display for NegativeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NegativeMode::PerFixed => "per_fixed",
            NegativeMode::SizedRandom => "sized_random",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub pair: BipartiteHyperedge,
    pub label: Label,
    pub origin: Origin,
    /// `(f, f')` indices into `F` and `F'` when both parts are observed
    /// hyperedges.
    pub indices: Option<(usize, usize)>,
    /// Incidence index of the positive this sample came from (positives
    /// point at themselves; sized-random negatives at the `b` they copy
    /// sizes from).
    pub source: Option<usize>,
}

impl LabeledSample {
    pub fn target(&self) -> f64 {
        self.label.target()
    }
}

/// One positive per incidence, in incidence order.
pub fn positives(h: &BipartiteHypergraph) -> Vec<LabeledSample> {
    h.incidences()
        .iter()
        .enumerate()
        .map(|(i, &(f, g))| LabeledSample {
            pair: h.pair(f, g),
            label: Label::Positive,
            origin: Origin::Observed,
            indices: Some((f, g)),
            source: Some(i),
        })
        .collect()
}

pub fn negative_count(h: &BipartiteHypergraph, ratio: f64) -> usize {
    (ratio * h.num_incidences() as f64).floor() as usize
}

fn retry_budget(ratio: f64) -> u64 {
    (100.0 * ratio).ceil().max(1.0) as u64
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(Error::InfeasibleSampling(format!(
            "ratio must be positive, got {ratio}"
        )));
    }
    Ok(())
}

/// Pairs `(f, f')` of observed hyperedges that do not form an incidence.
pub fn sample_negatives_perfixed(
    h: &BipartiteHypergraph,
    ratio: f64,
    rng: &mut Rng,
) -> Result<Vec<LabeledSample>> {
    check_ratio(ratio)?;
    let nf = h.left_hyperedges().len();
    let ng = h.right_hyperedges().len();
    let want = negative_count(h, ratio);
    let available = (nf as u128 * ng as u128) - h.num_incidences() as u128;
    if available < want as u128 || available == 0 {
        return Err(Error::InfeasibleSampling(format!(
            "{want} negatives requested but only {available} non-incident pairs exist"
        )));
    }

    let positive = h.incidence_set();
    let mut drawn = HashSet::with_capacity(want);
    let mut out = Vec::with_capacity(want);
    let budget = retry_budget(ratio) * h.num_incidences() as u64;
    let mut attempts = 0u64;
    while out.len() < want {
        if attempts == budget {
            return Err(Error::BudgetExhausted {
                attempts,
                context: format!("after {} of {want} per-fixed negatives", out.len()),
            });
        }
        attempts += 1;
        let f = rng.gen_range(0..nf);
        let g = rng.gen_range(0..ng);
        if positive.contains(&(f, g)) || !drawn.insert((f, g)) {
            continue;
        }
        out.push(LabeledSample {
            pair: h.pair(f, g),
            label: Label::Negative,
            origin: Origin::PerFixedNeg,
            indices: Some((f, g)),
            source: None,
        });
    }
    Ok(out)
}

type Key = (Vec<usize>, Vec<usize>);

fn key(b: &BipartiteHyperedge) -> Key {
    (b.left().members().to_vec(), b.right().members().to_vec())
}

/// Random node subsets with the sizes of an observed incidence, cycling
/// through the incidences round-robin.
pub fn sample_negatives_sized_random(
    h: &BipartiteHypergraph,
    ratio: f64,
    rng: &mut Rng,
) -> Result<Vec<LabeledSample>> {
    check_ratio(ratio)?;
    let nv = h.left_vocab_size();
    let nw = h.right_vocab_size();
    let positives: Vec<BipartiteHyperedge> = h.hyperedges().collect();
    if let Some(b) = positives
        .iter()
        .find(|b| b.left().len() > nv || b.right().len() > nw)
    {
        return Err(Error::InfeasibleSampling(format!(
            "hyperedge {} | {} is larger than the vocabulary",
            b.left(),
            b.right()
        )));
    }

    let want = negative_count(h, ratio);
    let mut seen: HashSet<Key> = positives.iter().map(key).collect();
    let budget = retry_budget(ratio);
    let mut spent = vec![0u64; positives.len()];
    let mut out = Vec::with_capacity(want);
    let mut cursor = 0;
    while out.len() < want {
        let i = cursor % positives.len();
        cursor += 1;
        let b = &positives[i];
        loop {
            if spent[i] == budget {
                return Err(Error::BudgetExhausted {
                    attempts: budget,
                    context: format!("for hyperedge {} | {}", b.left(), b.right()),
                });
            }
            spent[i] += 1;
            let left = random_subset(rng, nv, b.left().len());
            let right = random_subset(rng, nw, b.right().len());
            let k = (left.clone(), right.clone());
            if !seen.insert(k) {
                continue;
            }
            let pair = crate::hypergraph::join_sigma_inverse(
                &Hyperedge::new(Side::Left, left)?,
                &Hyperedge::new(Side::Right, right)?,
            )?;
            out.push(LabeledSample {
                pair,
                label: Label::Negative,
                origin: Origin::SizedRandomNeg,
                indices: None,
                source: Some(i),
            });
            break;
        }
    }
    Ok(out)
}

fn random_subset(rng: &mut Rng, n: usize, k: usize) -> Vec<usize> {
    let mut v = index::sample(rng, n, k).into_vec();
    v.sort_unstable();
    v
}

pub fn sample_negatives(
    h: &BipartiteHypergraph,
    mode: NegativeMode,
    ratio: f64,
    rng: &mut Rng,
) -> Result<Vec<LabeledSample>> {
    match mode {
        NegativeMode::PerFixed => sample_negatives_perfixed(h, ratio, rng),
        NegativeMode::SizedRandom => sample_negatives_sized_random(h, ratio, rng),
    }
}

/// Positives followed by freshly drawn negatives for one repetition.
pub fn labeled_dataset(
    h: &BipartiteHypergraph,
    mode: NegativeMode,
    ratio: f64,
    seed: u64,
) -> Result<Vec<LabeledSample>> {
    let mut rng = rng_from(derive_seed_for_negatives(seed));
    let mut all = positives(h);
    all.extend(sample_negatives(h, mode, ratio, &mut rng)?);
    Ok(all)
}

fn derive_seed_for_negatives(seed: u64) -> u64 {
    derive_path(seed, &[stream::NEGATIVES])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    #[serde(default)]
    pub val: Option<f64>,
    pub test: f64,
    pub repetitions: usize,
    pub seed: u64,
}

impl SplitSpec {
    /// `[train, test]` or `[train, val, test]`.
    pub fn from_proportions(p: &[f64], repetitions: usize, seed: u64) -> Result<Self> {
        let spec = match *p {
            [train, test] => SplitSpec {
                train,
                val: None,
                test,
                repetitions,
                seed,
            },
            [train, val, test] => SplitSpec {
                train,
                val: Some(val),
                test,
                repetitions,
                seed,
            },
            _ => {
                return Err(Error::InvalidSplit(format!(
                    "expected 2 or 3 proportions, got {}",
                    p.len()
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn proportions(&self) -> Vec<f64> {
        let mut p = vec![self.train];
        p.extend(self.val);
        p.push(self.test);
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.proportions();
        if let Some(bad) = p.iter().find(|&&x| !(x > 0.0 && x < 1.0)) {
            return Err(Error::InvalidSplit(format!(
                "proportion {bad} is outside (0, 1)"
            )));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSplit(format!(
                "proportions sum to {total}, not 1"
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidSplit("repetitions must be at least 1".into()));
        }
        Ok(())
    }
}

/// Row indices per partition, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val: Option<Vec<usize>>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn partitions(&self) -> Vec<&[usize]> {
        let mut p: Vec<&[usize]> = vec![&self.train];
        if let Some(v) = &self.val {
            p.push(v);
        }
        p.push(&self.test);
        p
    }
}

/// Largest-remainder apportionment of `n` items.
pub(crate) fn apportion(n: usize, proportions: &[f64]) -> Vec<usize> {
    let ideal: Vec<f64> = proportions.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..ideal.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let short = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    counts
}

/// One stratified split per repetition: partition sizes follow the
/// proportions within one row, and positives are apportioned separately so
/// both classes appear in every partition in the same ratio.
pub fn make_splits(samples: &[LabeledSample], spec: &SplitSpec) -> Result<Vec<Split>> {
    spec.validate()?;
    (0..spec.repetitions)
        .map(|r| Ok(split_once(samples, spec, r as u64)))
        .collect()
}

/// The split of repetition `r` alone.
pub fn split_once(samples: &[LabeledSample], spec: &SplitSpec, r: u64) -> Split {
    let props = spec.proportions();
    let parts = props.len();
    let mut rng = rng_from(derive_path(spec.seed, &[stream::SPLIT, r]));

    let mut pos: Vec<usize> = Vec::new();
    let mut neg: Vec<usize> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        match s.label {
            Label::Positive => pos.push(i),
            Label::Negative => neg.push(i),
        }
    }
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let total = apportion(samples.len(), &props);
    let mut npos = apportion(pos.len(), &props);
    // Keep every partition's positive share within its total.
    for p in 0..parts {
        while npos[p] > total[p] {
            let q = (0..parts)
                .find(|&q| npos[q] < total[q])
                .expect("positives never exceed the total");
            npos[p] -= 1;
            npos[q] += 1;
        }
    }

    let mut out: Vec<Vec<usize>> = Vec::with_capacity(parts);
    let (mut pi, mut ni) = (0, 0);
    for p in 0..parts {
        let k = npos[p];
        let m = total[p] - k;
        let mut part: Vec<usize> = pos[pi..pi + k]
            .iter()
            .chain(&neg[ni..ni + m])
            .copied()
            .collect();
        pi += k;
        ni += m;
        part.sort_unstable();
        out.push(part);
    }
    let test = out.pop().expect("at least two partitions");
    let val = (parts == 3).then(|| out.pop().expect("three partitions"));
    let train = out.pop().expect("train partition");
    Split { train, val, test }
}

pub fn render_samples(samples: &[LabeledSample]) -> String {
    let mut out = String::from("left,right,label,origin\n");
    for s in samples {
        out.push_str(&format!(
            "\"{}\",\"{}\",{},{}\n",
            join_ids(s.pair.left().members()),
            join_ids(s.pair.right().members()),
            match s.label {
                Label::Positive => 1,
                Label::Negative => 0,
            },
            s.origin.as_str()
        ));
    }
    out
}

pub fn save_samples(samples: &[LabeledSample], path: &Path) -> Result<()> {
    std::fs::write(path, render_samples(samples)).map_err(|e| Error::io(path, e))
}

/// Reads a sample list. Observed-hyperedge indices are recovered from `h`
/// when given.
pub fn load_samples(path: &Path, h: Option<&BipartiteHypergraph>) -> Result<Vec<LabeledSample>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.into(),
            line: 0,
            message: e.to_string(),
        })?;
    let lookup = h.map(|h| {
        let left: std::collections::HashMap<&[usize], usize> = h
            .left_hyperedges()
            .iter()
            .enumerate()
            .map(|(i, e)| (e.members(), i))
            .collect();
        let right: std::collections::HashMap<&[usize], usize> = h
            .right_hyperedges()
            .iter()
            .enumerate()
            .map(|(i, e)| (e.members(), i))
            .collect();
        (left, right)
    });
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: path.into(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Parse {
            path: path.into(),
            line,
            message,
        };
        if record.len() != 4 {
            return Err(bad(format!("expected 4 cells, found {}", record.len())));
        }
        let ids = |cell: &str| -> Result<Vec<usize>> {
            cell.split_whitespace()
                .map(|t| {
                    t.parse()
                        .map_err(|_| bad(format!("non-integer token {t:?}")))
                })
                .collect()
        };
        let left = Hyperedge::new(Side::Left, ids(&record[0])?)?;
        let right = Hyperedge::new(Side::Right, ids(&record[1])?)?;
        let label = match &record[2] {
            "1" => Label::Positive,
            "0" => Label::Negative,
            other => return Err(bad(format!("label must be 0 or 1, got {other:?}"))),
        };
        let origin = Origin::parse(&record[3])
            .ok_or_else(|| bad(format!("unknown origin {:?}", &record[3])))?;
        if (label == Label::Positive) != (origin == Origin::Observed) {
            return Err(bad("label and origin disagree".into()));
        }
        let indices = lookup
            .as_ref()
            .and_then(|(l, r)| Some((*l.get(left.members())?, *r.get(right.members())?)));
        out.push(LabeledSample {
            pair: crate::hypergraph::join_sigma_inverse(&left, &right)?,
            label,
            origin,
            indices,
            source: None,
        });
    }
    Ok(out)
}
