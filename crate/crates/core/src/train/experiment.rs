use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use setmatch_tensor::Graph;

use super::metrics::{auc, mean_std, Adam};
use crate::baselines::{Aggregate, Algo, BipartiteAdjacency};
use crate::embeddings::{
    hypergraph_walk_embeddings, n2v_score, node2vec_embeddings, EmbeddingTable, N2vMode,
    Similarity, WalkConfig,
};
use crate::hypergraph::{join_sigma_inverse, split_sigma, BipartiteHyperedge, BipartiteHypergraph};
use crate::models::{gather, Arch, Dims, Model};
use crate::rng::{derive_path, rng_from, stream};
use crate::sampling::{
    labeled_dataset, split_once, Label, LabeledSample, NegativeMode, Split, SplitSpec,
};
use crate::{Error, Result};

/// Where the models' node features come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    /// Skip-gram over alternating walks on each repetition's training
    /// positives.
    Walks(WalkConfig),
    /// A fixed table shared by every repetition.
    Table(EmbeddingTable),
}

impl Default for FeatureSource {
    fn default() -> Self {
        FeatureSource::Walks(WalkConfig::default())
    }
}

/// Baselines scored alongside the trained model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSpec {
    #[serde(default)]
    pub graph: bool,
    /// Dimension of the node2vec embeddings; no node2vec baseline if absent.
    #[serde(default)]
    pub node2vec_dim: Option<usize>,
    #[serde(default)]
    pub walk: WalkConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub arch: Arch,
    pub dims: Dims,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mode: NegativeMode,
    pub ratio: f64,
    #[serde(default)]
    pub features: FeatureSource,
    #[serde(default)]
    pub baselines: BaselineSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: Arch::Sx,
            dims: Dims::default(),
            lr: 0.001,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            mode: NegativeMode::PerFixed,
            ratio: 5.0,
            features: FeatureSource::default(),
            baselines: BaselineSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if !(self.ratio > 0.0 && self.ratio.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "ratio must be positive, got {}",
                self.ratio
            )));
        }
        self.dims.validate(self.arch)?;
        match &self.features {
            FeatureSource::Walks(w) => w.validate()?,
            FeatureSource::Table(t) => {
                t.validate()?;
                if t.dim() != self.dims.d {
                    return Err(Error::InvalidConfig(format!(
                        "feature table has dimension {}, model expects {}",
                        t.dim(),
                        self.dims.d
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_auc: f64,
    pub test_auc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_auc: Option<f64>,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub sample: usize,
    pub score: f64,
    pub positive: bool,
}

/// Everything one repetition produced.
#[derive(Clone, Debug)]
pub struct RepetitionOutcome {
    pub repetition: usize,
    pub samples: Vec<LabeledSample>,
    pub train: Vec<usize>,
    pub val: Option<Vec<usize>>,
    pub test: Vec<usize>,
    pub features: EmbeddingTable,
    pub model: Model,
    pub curve: Vec<EpochRecord>,
    pub test_scores: Vec<ScoredSample>,
    /// Test samples whose score through the union form differed from the
    /// score through the set-match form.
    pub sigma_mismatches: usize,
    pub baselines: BTreeMap<String, f64>,
}

impl RepetitionOutcome {
    pub fn final_test_auc(&self) -> f64 {
        self.curve.last().map_or(f64::NAN, |e| e.test_auc)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionReport {
    pub repetition: usize,
    pub final_test_auc: f64,
    pub sigma_mismatches: usize,
    pub curve: Vec<EpochRecord>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub baselines: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub arch: Arch,
    pub mode: NegativeMode,
    pub test_auc: Summary,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub baselines: BTreeMap<String, Summary>,
    pub repetitions: Vec<RepetitionReport>,
}

impl ExperimentReport {
    pub fn from_outcomes(cfg: &TrainConfig, outcomes: &[RepetitionOutcome]) -> Self {
        let finals: Vec<f64> = outcomes
            .iter()
            .map(RepetitionOutcome::final_test_auc)
            .collect();
        let (mean, std) = mean_std(&finals);
        let mut baselines = BTreeMap::new();
        if let Some(first) = outcomes.first() {
            for name in first.baselines.keys() {
                let xs: Vec<f64> = outcomes.iter().map(|o| o.baselines[name]).collect();
                let (mean, std) = mean_std(&xs);
                baselines.insert(name.clone(), Summary { mean, std });
            }
        }
        Self {
            arch: cfg.arch,
            mode: cfg.mode,
            test_auc: Summary { mean, std },
            baselines,
            repetitions: outcomes
                .iter()
                .map(|o| RepetitionReport {
                    repetition: o.repetition,
                    final_test_auc: o.final_test_auc(),
                    sigma_mismatches: o.sigma_mismatches,
                    curve: o.curve.clone(),
                    baselines: o.baselines.clone(),
                })
                .collect(),
        }
    }

    /// `repetition,epoch,train_auc,test_auc,loss`
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("repetition,epoch,train_auc,test_auc,loss\n");
        for r in &self.repetitions {
            for e in &r.curve {
                out.push_str(&format!(
                    "{},{},{:.10},{:.10},{:.10}\n",
                    r.repetition, e.epoch, e.train_auc, e.test_auc, e.loss
                ));
            }
        }
        out
    }

    /// Mean test AUC over the last `n` epochs, averaged over repetitions.
    pub fn tail_test_auc(&self, n: usize) -> f64 {
        let per_rep: Vec<f64> = self
            .repetitions
            .iter()
            .map(|r| {
                let tail = &r.curve[r.curve.len().saturating_sub(n)..];
                tail.iter().map(|e| e.test_auc).sum::<f64>() / tail.len() as f64
            })
            .collect();
        mean_std(&per_rep).0
    }
}

const SCORE_CHUNK: usize = 256;

/// Match probabilities for `pairs` under `model`.
pub fn predict(
    model: &Model,
    features: &EmbeddingTable,
    pairs: &[&BipartiteHyperedge],
) -> Result<Vec<f64>> {
    let d = model.dims().d;
    let mut out = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(SCORE_CHUNK) {
        let mut g = Graph::new();
        let (net, _) = model.bind(&mut g);
        for b in chunk {
            let (x, x2) = gather(&mut g, features, b, d)?;
            let z = net.logit(&mut g, x, x2)?;
            let p = g.sigmoid(z)?;
            out.push(g.value(p).item()?);
        }
    }
    Ok(out)
}

fn score_indices(
    model: &Model,
    features: &EmbeddingTable,
    samples: &[LabeledSample],
    idx: &[usize],
) -> Result<Vec<f64>> {
    let pairs: Vec<&BipartiteHyperedge> = idx.iter().map(|&i| &samples[i].pair).collect();
    predict(model, features, &pairs)
}

fn labels_of(samples: &[LabeledSample], idx: &[usize]) -> Vec<bool> {
    idx.iter()
        .map(|&i| samples[i].label == Label::Positive)
        .collect()
}

/// One optimisation pass over `order` in mini-batches; returns the mean loss.
fn train_epoch(
    model: &mut Model,
    opt: &mut Adam,
    features: &EmbeddingTable,
    samples: &[LabeledSample],
    order: &[usize],
    batch_size: usize,
) -> Result<f64> {
    let d = model.dims().d;
    let mut total = 0.0;
    for batch in order.chunks(batch_size) {
        let mut g = Graph::new();
        let (net, vars) = model.bind(&mut g);
        let mut logits = Vec::with_capacity(batch.len());
        let mut labels = Vec::with_capacity(batch.len());
        for &i in batch {
            let (x, x2) = gather(&mut g, features, &samples[i].pair, d)?;
            logits.push(net.logit(&mut g, x, x2)?);
            labels.push(samples[i].target());
        }
        let z = g.concat_rows(&logits)?;
        let loss = g.bce_with_logits(z, &labels)?;
        total += g.value(loss).item()? * batch.len() as f64;
        let grads = g.backward(loss)?;
        let grads: Vec<_> = vars.iter().map(|&v| grads.get(v)).collect();
        opt.step(model.parameters_mut(), &grads)?;
    }
    Ok(total / order.len() as f64)
}

/// Trains `model` on `train` and records per-epoch AUCs on every partition.
#[allow(clippy::too_many_arguments)]
pub fn train_model(
    model: &mut Model,
    features: &EmbeddingTable,
    samples: &[LabeledSample],
    train: &[usize],
    val: Option<&[usize]>,
    test: &[usize],
    cfg: &TrainConfig,
    shuffle_seed: u64,
) -> Result<Vec<EpochRecord>> {
    let mut opt = Adam::new(cfg.lr);
    let train_labels = labels_of(samples, train);
    let test_labels = labels_of(samples, test);
    let val_labels = val.map(|v| labels_of(samples, v));
    let mut order = train.to_vec();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut rng = rng_from(derive_path(shuffle_seed, &[epoch as u64]));
        order.shuffle(&mut rng);
        let loss = train_epoch(model, &mut opt, features, samples, &order, cfg.batch_size)?;
        let train_auc = auc(
            &score_indices(model, features, samples, train)?,
            &train_labels,
        )?;
        let test_auc = auc(
            &score_indices(model, features, samples, test)?,
            &test_labels,
        )?;
        let val_auc = match (val, &val_labels) {
            (Some(v), Some(l)) => Some(auc(&score_indices(model, features, samples, v)?, l)?),
            _ => None,
        };
        log::debug!("epoch {epoch}: loss {loss:.4} train {train_auc:.4} test {test_auc:.4}");
        curve.push(EpochRecord {
            epoch,
            train_auc,
            test_auc,
            val_auc,
            loss,
        });
    }
    Ok(curve)
}

/// Scores through `b` directly and through its σ-decomposition; counts the
/// samples where the two differ.
fn sigma_mismatches(
    model: &Model,
    features: &EmbeddingTable,
    samples: &[LabeledSample],
    test: &[usize],
    direct: &[f64],
) -> Result<usize> {
    let rebuilt: Vec<BipartiteHyperedge> = test
        .iter()
        .map(|&i| {
            let b = BipartiteHyperedge::from_union(&samples[i].pair.union())?;
            let (f, f2) = split_sigma(&b);
            join_sigma_inverse(&f, &f2)
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&BipartiteHyperedge> = rebuilt.iter().collect();
    let via_sigma = predict(model, features, &refs)?;
    Ok(direct
        .iter()
        .zip(&via_sigma)
        .filter(|(a, b)| a.to_bits() != b.to_bits())
        .count())
}

/// Test-set scores of every requested baseline, keyed `algo-agg` or
/// `n2v-mode`.
pub fn baseline_scores(
    train_graph: &BipartiteHypergraph,
    samples: &[LabeledSample],
    test: &[usize],
    spec: &BaselineSpec,
    seed: u64,
) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut out = BTreeMap::new();
    if spec.graph {
        let adj = BipartiteAdjacency::new(&train_graph.node_level_graph());
        for algo in [Algo::Cn, Algo::Aa] {
            for agg in [Aggregate::Min, Aggregate::Max, Aggregate::Avg] {
                let scores = test
                    .iter()
                    .map(|&i| adj.hyperedge_score(&samples[i].pair, algo, agg))
                    .collect();
                out.insert(format!("{algo}-{agg}"), scores);
            }
        }
    }
    if let Some(dim) = spec.node2vec_dim {
        let walk = WalkConfig {
            seed,
            ..spec.walk.clone()
        };
        let (emb, _) = node2vec_embeddings(train_graph, &walk, dim)?;
        for mode in N2vMode::ALL {
            let scores = test
                .iter()
                .map(|&i| n2v_score(&emb, &samples[i].pair, mode, Similarity::Dot))
                .collect::<Result<_>>()?;
            out.insert(format!("n2v-{mode}"), scores);
        }
    }
    Ok(out)
}

/// Samples, split and training-positive graph of repetition `r`.
pub struct RepetitionData {
    pub samples: Vec<LabeledSample>,
    pub split: Split,
    pub train_graph: BipartiteHypergraph,
}

pub fn repetition_data(
    h: &BipartiteHypergraph,
    cfg: &TrainConfig,
    split: &SplitSpec,
    r: usize,
) -> Result<RepetitionData> {
    let rep = r as u64;
    let samples = labeled_dataset(h, cfg.mode, cfg.ratio, derive_path(cfg.seed, &[rep]))?;
    let parts = split_once(&samples, split, rep);
    let train_pos: Vec<usize> = parts
        .train
        .iter()
        .filter(|&&i| samples[i].label == Label::Positive)
        .filter_map(|&i| samples[i].source)
        .collect();
    let train_graph = h.with_incidence_subset(&train_pos);
    Ok(RepetitionData {
        samples,
        split: parts,
        train_graph,
    })
}

/// Seed of repetition `r`'s node2vec baseline.
pub fn baseline_seed(seed: u64, r: usize) -> u64 {
    derive_path(seed, &[stream::WALKS, r as u64, 1])
}

/// Repetition `r`: fresh negatives, fresh split, features from the training
/// positives, fresh initialisation, training and test scoring.
pub fn run_repetition(
    h: &BipartiteHypergraph,
    cfg: &TrainConfig,
    split: &SplitSpec,
    r: usize,
) -> Result<RepetitionOutcome> {
    let rep = r as u64;
    let RepetitionData {
        samples,
        split: parts,
        train_graph,
    } = repetition_data(h, cfg, split, r)?;

    let features = match &cfg.features {
        FeatureSource::Table(t) => t.clone(),
        FeatureSource::Walks(w) => {
            let walk = WalkConfig {
                seed: derive_path(cfg.seed, &[stream::WALKS, rep]),
                ..w.clone()
            };
            hypergraph_walk_embeddings(&train_graph, &walk, cfg.dims.d)?.0
        }
    };

    let mut model = Model::init(
        cfg.arch,
        cfg.dims,
        &mut rng_from(derive_path(cfg.seed, &[stream::INIT, rep])),
    )?;
    let curve = train_model(
        &mut model,
        &features,
        &samples,
        &parts.train,
        parts.val.as_deref(),
        &parts.test,
        cfg,
        derive_path(cfg.seed, &[stream::SHUFFLE, rep]),
    )?;

    let direct = score_indices(&model, &features, &samples, &parts.test)?;
    let sigma_mismatches = sigma_mismatches(&model, &features, &samples, &parts.test, &direct)?;
    let test_scores = parts
        .test
        .iter()
        .zip(&direct)
        .map(|(&i, &score)| ScoredSample {
            sample: i,
            score,
            positive: samples[i].label == Label::Positive,
        })
        .collect();
    let test_labels = labels_of(&samples, &parts.test);
    let baselines = baseline_scores(
        &train_graph,
        &samples,
        &parts.test,
        &cfg.baselines,
        baseline_seed(cfg.seed, r),
    )?
    .into_iter()
    .map(|(name, scores)| Ok((name, auc(&scores, &test_labels)?)))
    .collect::<Result<_>>()?;

    Ok(RepetitionOutcome {
        repetition: r,
        samples,
        train: parts.train,
        val: parts.val,
        test: parts.test,
        features,
        model,
        curve,
        test_scores,
        sigma_mismatches,
        baselines,
    })
}

/// All repetitions, run concurrently and returned in repetition order.
pub fn run_experiment(
    h: &BipartiteHypergraph,
    cfg: &TrainConfig,
    split: &SplitSpec,
) -> Result<(ExperimentReport, Vec<RepetitionOutcome>)> {
    cfg.validate()?;
    split.validate()?;
    let outcomes: Vec<RepetitionOutcome> = (0..split.repetitions)
        .into_par_iter()
        .map(|r| run_repetition(h, cfg, split, r))
        .collect::<Result<_>>()?;
    Ok((ExperimentReport::from_outcomes(cfg, &outcomes), outcomes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub d: usize,
    pub lr: f64,
    pub test_auc: Summary,
}

/// One experiment per `(d, lr)` cell with square dimensions.
pub fn run_grid(
    h: &BipartiteHypergraph,
    base: &TrainConfig,
    split: &SplitSpec,
    dims: &[usize],
    lrs: &[f64],
) -> Result<Vec<GridCell>> {
    let mut out = Vec::with_capacity(dims.len() * lrs.len());
    for &d in dims {
        for &lr in lrs {
            let mut cfg = base.clone();
            cfg.dims = Dims::square(d);
            cfg.lr = lr;
            if let FeatureSource::Table(t) = &cfg.features {
                if t.dim() != d {
                    return Err(Error::InvalidConfig(format!(
                        "grid dimension {d} does not match the fixed feature table ({})",
                        t.dim()
                    )));
                }
            }
            let (report, _) = run_experiment(h, &cfg, split)?;
            out.push(GridCell {
                d,
                lr,
                test_auc: report.test_auc,
            });
        }
    }
    Ok(out)
}
