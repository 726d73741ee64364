use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use setmatch_core::baselines::{Aggregate, Algo, BipartiteAdjacency};
use setmatch_core::embeddings::{
    n2v_score, node2vec_embeddings, EmbeddingTable, N2vMode, Similarity, WalkConfig,
};
use setmatch_core::hypergraph::{
    apply_filters, load_dataset, save_dataset, BipartiteHyperedge, BipartiteHypergraph,
    DatasetFormat, FilterSpec,
};
use setmatch_core::models::{Dims, Model};
use setmatch_core::sampling::{
    labeled_dataset, load_samples, make_splits, render_samples, save_samples, Label, LabeledSample,
    SplitSpec,
};
use setmatch_core::synth::{planted_matching, SynthSpec};
use setmatch_core::train::{
    auc, baseline_scores, baseline_seed, mean_std, predict, repetition_data, run_experiment,
    run_grid, BaselineSpec, ExperimentReport, FeatureSource, Summary,
};

use crate::config::RunConfig;
use crate::{
    BaselineArgs, Cli, Command, CurvesArgs, EvalArgs, ExperimentArgs, GridArgs, PrepareArgs,
    SampleArgs, SplitArgs, SynthArgs,
};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Prepare(a) => prepare(a),
        Command::Synth(a) => synth(a, cli.seed.unwrap_or(0)),
        Command::Sample(a) => sample(a, cli.seed.unwrap_or(0)),
        Command::Split(a) => split(a, cli.seed.unwrap_or(0)),
        Command::Baseline(a) => baseline(a, cli.seed),
        Command::Train(a) => train(a, cli.seed),
        Command::Eval(a) => eval(a),
        Command::Curves(a) => curves(a),
        Command::Grid(a) => grid(a, cli.seed),
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

fn refuse_overwrite(input: &Path, output: &Path) -> Result<()> {
    if let (Ok(a), Ok(b)) = (input.canonicalize(), output.canonicalize()) {
        if a == b {
            bail!("output {} would overwrite the input", output.display());
        }
    }
    Ok(())
}

fn ids(members: &[usize]) -> String {
    members
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

fn label_digit(label: Label) -> u8 {
    match label {
        Label::Positive => 1,
        Label::Negative => 0,
    }
}

#[derive(Serialize)]
struct DatasetSummary {
    incidences: usize,
    left_nodes: usize,
    right_nodes: usize,
    left_hyperedges: usize,
    right_hyperedges: usize,
}

impl DatasetSummary {
    fn of(h: &BipartiteHypergraph) -> Self {
        let (lc, rc) = h.occurrence_counts();
        Self {
            incidences: h.num_incidences(),
            left_nodes: lc.iter().filter(|&&c| c > 0).count(),
            right_nodes: rc.iter().filter(|&&c| c > 0).count(),
            left_hyperedges: h.left_hyperedges().len(),
            right_hyperedges: h.right_hyperedges().len(),
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn prepare(a: &PrepareArgs) -> Result<()> {
    refuse_overwrite(&a.input, &a.out)?;
    let format = DatasetFormat {
        left_labels: a.left_labels.clone(),
        right_labels: a.right_labels.clone(),
    };
    let loaded = load_dataset(&a.input, &format)?;
    let mut spec = match &a.filter {
        Some(p) => serde_json::from_str::<FilterSpec>(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )
        .with_context(|| format!("parsing filter {}", p.display()))?,
        None => FilterSpec::identity(),
    };
    if let Some(v) = a.min_occurrence {
        spec.occurrence.0 = v;
    }
    if let Some(v) = a.max_occurrence {
        spec.occurrence.1 = v;
    }
    if let Some(v) = a.min_size {
        spec.size.0 = v;
    }
    if let Some(v) = a.max_size {
        spec.size.1 = v;
    }
    if let (Some(lo), Some(hi)) = (a.t_min, a.t_max) {
        spec.time = Some((lo, hi));
    }
    let h = apply_filters(&loaded.graph, &spec)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    save_dataset(&h, &a.out)?;
    #[derive(Serialize)]
    struct Out {
        rows_read: usize,
        duplicates_collapsed: usize,
        #[serde(flatten)]
        summary: DatasetSummary,
    }
    print_json(&Out {
        rows_read: loaded.rows,
        duplicates_collapsed: loaded.duplicates_collapsed,
        summary: DatasetSummary::of(&h),
    })
}

fn synth(a: &SynthArgs, seed: u64) -> Result<()> {
    let spec = SynthSpec {
        clusters: a.clusters,
        nodes_per_side: a.nodes,
        positives: a.positives,
        size: (a.min_size, a.max_size),
        noise: a.noise,
        seed,
    };
    let h = planted_matching(&spec)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    save_dataset(&h, &a.out)?;
    print_json(&DatasetSummary::of(&h))
}

fn load_graph(path: &Path) -> Result<BipartiteHypergraph> {
    Ok(load_dataset(path, &DatasetFormat::default())?.graph)
}

fn sample(a: &SampleArgs, seed: u64) -> Result<()> {
    refuse_overwrite(&a.dataset, &a.out)?;
    let h = load_graph(&a.dataset)?;
    let samples = labeled_dataset(&h, a.mode, a.ratio, seed)?;
    write(&a.out, &render_samples(&samples))?;
    let positives = samples
        .iter()
        .filter(|s| s.label == Label::Positive)
        .count();
    print_json(&serde_json::json!({
        "positives": positives,
        "negatives": samples.len() - positives,
    }))
}

fn split(a: &SplitArgs, seed: u64) -> Result<()> {
    refuse_overwrite(&a.samples, &a.out)?;
    let samples = load_samples(&a.samples, None)?;
    let spec = SplitSpec::from_proportions(&a.proportions, a.repetitions, seed)?;
    let splits = make_splits(&samples, &spec)?;
    write_json(&a.out, &splits)
}

/// Loads the config file if any, applies flag overrides and the seed.
fn resolve(a: &ExperimentArgs, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(p) = &a.dataset {
        cfg.dataset = Some(p.clone());
    }
    if let Some(p) = &a.out_dir {
        cfg.out_dir = Some(p.clone());
    }
    let t = &mut cfg.train;
    if let Some(v) = a.arch {
        t.arch = v;
    }
    if let Some(d) = a.d {
        t.dims = Dims::square(d);
    }
    if let Some(v) = a.lr {
        t.lr = v;
    }
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.mode {
        t.mode = v;
    }
    if let Some(v) = a.ratio {
        t.ratio = v;
    }
    if let Some(p) = &a.features {
        t.features = FeatureSource::Table(EmbeddingTable::load(p)?);
    }
    if let FeatureSource::Walks(w) = &mut t.features {
        if let Some(v) = a.walks_per_node {
            w.walks_per_node = v;
        }
        if let Some(v) = a.walk_length {
            w.walk_length = v;
        }
        if let Some(v) = a.walk_epochs {
            w.epochs = v;
        }
    }
    if a.graph_baselines {
        t.baselines.graph = true;
    }
    if let Some(v) = &a.proportions {
        cfg.proportions = v.clone();
    }
    if let Some(v) = a.repetitions {
        cfg.repetitions = v;
    }
    cfg.sync_seed();
    Ok(cfg)
}

fn experiment_graph(cfg: &RunConfig) -> Result<BipartiteHypergraph> {
    let h = load_graph(cfg.dataset()?)?;
    Ok(apply_filters(&h, &cfg.filter)?)
}

fn scores_csv(samples: &[LabeledSample], idx: &[usize], scores: &[f64]) -> String {
    let mut out = String::from("left,right,label,score\n");
    for (&i, s) in idx.iter().zip(scores) {
        let b = &samples[i];
        out.push_str(&format!(
            "\"{}\",\"{}\",{},{s:.17e}\n",
            ids(b.pair.left().members()),
            ids(b.pair.right().members()),
            label_digit(b.label)
        ));
    }
    out
}

fn subset(samples: &[LabeledSample], idx: &[usize]) -> Vec<LabeledSample> {
    idx.iter().map(|&i| samples[i].clone()).collect()
}

fn train(a: &ExperimentArgs, seed: Option<u64>) -> Result<()> {
    let cfg = resolve(a, seed)?;
    let out = cfg.out_dir()?.to_path_buf();
    let h = experiment_graph(&cfg)?;
    let split = cfg.split_spec()?;
    let (report, outcomes) = run_experiment(&h, &cfg.train, &split)?;

    write_json(&out.join("config.json"), &cfg)?;
    write_json(&out.join("report.json"), &report)?;
    write(&out.join("curves.csv"), &report.curves_csv())?;
    for o in &outcomes {
        let r = o.repetition;
        o.model
            .save(&out.join(format!("model_r{r}.json")), Some(&o.features))?;
        save_samples(
            &subset(&o.samples, &o.train),
            &out.join(format!("train_r{r}.csv")),
        )?;
        save_samples(
            &subset(&o.samples, &o.test),
            &out.join(format!("test_r{r}.csv")),
        )?;
        if let Some(val) = &o.val {
            save_samples(&subset(&o.samples, val), &out.join(format!("val_r{r}.csv")))?;
        }
        let scores: Vec<f64> = o.test_scores.iter().map(|s| s.score).collect();
        write(
            &out.join(format!("scores_r{r}.csv")),
            &scores_csv(&o.samples, &o.test, &scores),
        )?;
    }
    print_json(&serde_json::json!({
        "arch": report.arch,
        "mode": report.mode,
        "test_auc": report.test_auc,
        "sigma_mismatches": report.repetitions.iter().map(|r| r.sigma_mismatches).sum::<usize>(),
    }))
}

fn eval(a: &EvalArgs) -> Result<()> {
    let (model, stored) = Model::load(&a.checkpoint)?;
    let features = match (&a.features, stored) {
        (Some(p), _) => EmbeddingTable::load(p)?,
        (None, Some(t)) => t,
        (None, None) => bail!("checkpoint has no features; pass --features"),
    };
    let samples = load_samples(&a.samples, None)?;
    let pairs: Vec<&BipartiteHyperedge> = samples.iter().map(|s| &s.pair).collect();
    let scores = predict(&model, &features, &pairs)?;
    let idx: Vec<usize> = (0..samples.len()).collect();
    write(&a.out, &scores_csv(&samples, &idx, &scores))?;
    let labels: Vec<bool> = samples.iter().map(|s| s.label == Label::Positive).collect();
    print_json(&serde_json::json!({
        "samples": samples.len(),
        "auc": auc(&scores, &labels).ok(),
    }))
}

fn curves(a: &CurvesArgs) -> Result<()> {
    let text =
        fs::read_to_string(&a.report).with_context(|| format!("reading {}", a.report.display()))?;
    let report: ExperimentReport = serde_json::from_str(&text)
        .with_context(|| format!("parsing report {}", a.report.display()))?;
    if let Some(n) = a.tail {
        return print_json(
            &serde_json::json!({ "epochs": n, "test_auc": report.tail_test_auc(n) }),
        );
    }
    match &a.out {
        Some(p) => write(p, &report.curves_csv()),
        None => {
            print!("{}", report.curves_csv());
            Ok(())
        }
    }
}

fn grid(a: &GridArgs, seed: Option<u64>) -> Result<()> {
    let cfg = resolve(&a.experiment, seed)?;
    let out = cfg.out_dir()?.to_path_buf();
    let h = experiment_graph(&cfg)?;
    let cells = run_grid(&h, &cfg.train, &cfg.split_spec()?, &a.dims, &a.lrs)?;
    write_json(&out.join("config.json"), &cfg)?;
    let mut csv = String::from("d,lr,mean,std\n");
    for c in &cells {
        csv.push_str(&format!(
            "{},{},{:.10},{:.10}\n",
            c.d, c.lr, c.test_auc.mean, c.test_auc.std
        ));
    }
    write(&out.join("grid.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

/// Parses the `--algo`/`--agg`/`--n2v-mode` filters into a name predicate.
struct BaselineFilter {
    algo: Option<Algo>,
    agg: Option<Aggregate>,
    n2v_mode: Option<N2vMode>,
}

impl BaselineFilter {
    fn new(a: &BaselineArgs) -> Result<Self> {
        Ok(Self {
            algo: a.algo.as_deref().map(str::parse).transpose()?,
            agg: a.agg.as_deref().map(str::parse).transpose()?,
            n2v_mode: a.n2v_mode,
        })
    }

    fn keep(&self, name: &str) -> bool {
        match name.strip_prefix("n2v-") {
            Some(mode) => self.n2v_mode.is_none_or(|m| m.to_string() == mode),
            None => {
                let (algo, agg) = name.split_once('-').expect("algo-agg");
                self.algo.is_none_or(|a| a.to_string() == algo)
                    && self.agg.is_none_or(|g| g.to_string() == agg)
            }
        }
    }
}

/// `left,right,label,score,algo,agg` rows, grouped by baseline.
fn baseline_csv(
    samples: &[LabeledSample],
    idx: &[usize],
    scores: &BTreeMap<String, Vec<f64>>,
) -> String {
    let mut out = String::from("left,right,label,score,algo,agg\n");
    for (name, values) in scores {
        let (algo, agg) = match name.strip_prefix("n2v-") {
            Some(mode) => ("n2v", mode),
            None => name.split_once('-').expect("algo-agg"),
        };
        for (&i, s) in idx.iter().zip(values) {
            let b = &samples[i];
            out.push_str(&format!(
                "\"{}\",\"{}\",{},{s:.17e},{algo},{agg}\n",
                ids(b.pair.left().members()),
                ids(b.pair.right().members()),
                label_digit(b.label)
            ));
        }
    }
    out
}

fn aucs(scores: &BTreeMap<String, Vec<f64>>, labels: &[bool]) -> Result<BTreeMap<String, f64>> {
    scores
        .iter()
        .map(|(k, v)| Ok((k.clone(), auc(v, labels)?)))
        .collect()
}

fn baseline(a: &BaselineArgs, seed: Option<u64>) -> Result<()> {
    let filter = BaselineFilter::new(a)?;
    let cfg = resolve(&a.experiment, seed)?;
    let walk = match &cfg.train.features {
        FeatureSource::Walks(w) => w.clone(),
        FeatureSource::Table(_) => WalkConfig::default(),
    };
    let spec = BaselineSpec {
        graph: true,
        node2vec_dim: a.n2v_dim,
        walk,
    };

    if let Some(path) = &a.samples {
        let h = load_graph(cfg.dataset()?)?;
        let samples = load_samples(path, Some(&h))?;
        let idx: Vec<usize> = (0..samples.len()).collect();
        let mut scores = BTreeMap::new();
        let adj = BipartiteAdjacency::new(&h.node_level_graph());
        for algo in [Algo::Cn, Algo::Aa] {
            for agg in [Aggregate::Min, Aggregate::Max, Aggregate::Avg] {
                let values = samples
                    .iter()
                    .map(|s| adj.hyperedge_score(&s.pair, algo, agg))
                    .collect();
                scores.insert(format!("{algo}-{agg}"), values);
            }
        }
        if let Some(dim) = a.n2v_dim {
            let walk = WalkConfig {
                seed: cfg.seed,
                ..spec.walk.clone()
            };
            let (emb, _) = node2vec_embeddings(&h, &walk, dim)?;
            for mode in N2vMode::ALL {
                let values = samples
                    .iter()
                    .map(|s| n2v_score(&emb, &s.pair, mode, Similarity::Dot))
                    .collect::<setmatch_core::Result<_>>()?;
                scores.insert(format!("n2v-{mode}"), values);
            }
        }
        scores.retain(|k, _| filter.keep(k));
        let out = a.out.as_deref().context("--samples needs --out")?;
        refuse_overwrite(path, out)?;
        write(out, &baseline_csv(&samples, &idx, &scores))?;
        let labels: Vec<bool> = samples.iter().map(|s| s.label == Label::Positive).collect();
        let report: BTreeMap<String, Option<f64>> = scores
            .iter()
            .map(|(k, v)| (k.clone(), auc(v, &labels).ok()))
            .collect();
        return print_json(&report);
    }

    let out = cfg.out_dir()?.to_path_buf();
    let h = experiment_graph(&cfg)?;
    let split = cfg.split_spec()?;
    let mut per_rep = Vec::new();
    for r in 0..split.repetitions {
        let data = repetition_data(&h, &cfg.train, &split, r)?;
        let test = &data.split.test;
        let mut scores = baseline_scores(
            &data.train_graph,
            &data.samples,
            test,
            &spec,
            baseline_seed(cfg.seed, r),
        )?;
        scores.retain(|k, _| filter.keep(k));
        write(
            &out.join(format!("scores_r{r}.csv")),
            &baseline_csv(&data.samples, test, &scores),
        )?;
        let labels: Vec<bool> = test
            .iter()
            .map(|&i| data.samples[i].label == Label::Positive)
            .collect();
        per_rep.push(aucs(&scores, &labels)?);
    }
    let mut summary = BTreeMap::new();
    if let Some(first) = per_rep.first() {
        for name in first.keys() {
            let xs: Vec<f64> = per_rep.iter().map(|m| m[name]).collect();
            let (mean, std) = mean_std(&xs);
            summary.insert(name.clone(), Summary { mean, std });
        }
    }
    write_json(&out.join("config.json"), &cfg)?;
    write_json(
        &out.join("report.json"),
        &serde_json::json!({ "baselines": summary, "repetitions": per_rep }),
    )?;
    print_json(&summary)
}
