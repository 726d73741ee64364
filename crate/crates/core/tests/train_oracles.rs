mod common;

use proptest::prelude::*;
use rand::Rng;
use setmatch_core::embeddings::{EmbeddingTable, WalkConfig};
use setmatch_core::hypergraph::BipartiteHypergraph;
use setmatch_core::models::{Arch, Dims, Model};
use setmatch_core::rng::rng_from;
use setmatch_core::sampling::{labeled_dataset, Label, NegativeMode, SplitSpec};
use setmatch_core::synth::{planted_matching, SynthSpec};
use setmatch_core::train::{
    auc, bce_loss, predict, run_experiment, run_repetition, train_model, ExperimentReport,
    FeatureSource, TrainConfig,
};
use setmatch_tensor::{Graph, Tensor};

fn pairwise_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if positive[i] && !positive[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn random_scores(seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut r = common::rng(seed);
    let n = r.gen_range(2..120);
    let coarse = r.gen_bool(0.5);
    let mut labels: Vec<bool> = (0..n).map(|_| r.gen_bool(0.3)).collect();
    labels[0] = true;
    labels[1] = false;
    let scores = (0..n)
        .map(|_| {
            let s: f64 = r.gen();
            if coarse {
                (s * 5.0).floor() / 5.0
            } else {
                s
            }
        })
        .collect();
    (scores, labels)
}

#[test]
fn auc_matches_pairwise_oracle() {
    for seed in 0..200 {
        let (s, l) = random_scores(seed);
        let fast = auc(&s, &l).unwrap();
        assert!((fast - pairwise_auc(&s, &l)).abs() <= 1e-12, "seed {seed}");
        assert!((0.0..=1.0).contains(&fast));
    }
}

#[test]
fn auc_is_rank_invariant() {
    for seed in 0..50 {
        let (s, l) = random_scores(1000 + seed);
        let base = auc(&s, &l).unwrap();
        let exp: Vec<f64> = s.iter().map(|x| x.exp()).collect();
        let affine: Vec<f64> = s.iter().map(|x| 3.0 * x - 7.0).collect();
        assert_eq!(auc(&exp, &l).unwrap(), base);
        assert_eq!(auc(&affine, &l).unwrap(), base);
    }
}

#[test]
fn bce_gradient_matches_finite_differences() {
    let p = [0.2, 0.7, 0.55, 0.9];
    let y = [1.0, 0.0, 1.0, 1.0];
    let mut g = Graph::new();
    let pv = g.leaf(Tensor::column_vector(&p));
    let loss = g.bce(pv, &y).unwrap();
    assert!((g.value(loss).item().unwrap() - bce_loss(&p, &y).unwrap()).abs() < 1e-15);
    let grad = g.backward(loss).unwrap().get(pv);
    let h = 1e-6;
    for i in 0..p.len() {
        let (mut up, mut down) = (p, p);
        up[i] += h;
        down[i] -= h;
        let numeric = (bce_loss(&up, &y).unwrap() - bce_loss(&down, &y).unwrap()) / (2.0 * h);
        let analytic = grad.data()[i];
        assert!(
            (numeric - analytic).abs() / analytic.abs() < 1e-6,
            "{numeric} vs {analytic}"
        );
    }
}

/// Matched pairs share a random feature vector; everything else is random.
fn separable_toy() -> (BipartiteHypergraph, EmbeddingTable) {
    let n = 12;
    let h = BipartiteHypergraph::from_pairs(
        (0..n)
            .map(|i| (vec![2 * i, 2 * i + 1], vec![2 * i, 2 * i + 1]))
            .collect(),
    )
    .unwrap();
    let mut r = common::rng(4);
    let left: Vec<Vec<f64>> = (0..2 * n)
        .map(|_| (0..4).map(|_| r.gen_range(-1.0..1.0)).collect())
        .collect();
    let right = left.clone();
    (h, EmbeddingTable::new(4, left, right).unwrap())
}

#[test]
fn full_batch_loss_is_non_increasing() {
    let (h, features) = separable_toy();
    let samples = labeled_dataset(&h, NegativeMode::PerFixed, 3.0, 2).unwrap();
    let all: Vec<usize> = (0..samples.len()).collect();
    let cfg = TrainConfig {
        arch: Arch::X,
        dims: Dims::square(4),
        lr: 0.01,
        epochs: 300,
        batch_size: samples.len(),
        ..TrainConfig::default()
    };
    let mut model = Model::init(Arch::X, cfg.dims, &mut rng_from(9)).unwrap();
    let curve = train_model(&mut model, &features, &samples, &all, None, &all, &cfg, 1).unwrap();
    for w in curve[2..].windows(2) {
        assert!(
            w[1].loss <= w[0].loss * 1.01,
            "{} -> {}",
            w[0].loss,
            w[1].loss
        );
    }
    assert!(curve.last().unwrap().loss < 0.5 * curve[0].loss);
}

fn small_synth() -> BipartiteHypergraph {
    planted_matching(&SynthSpec {
        clusters: 2,
        nodes_per_side: 40,
        positives: 50,
        size: (1, 3),
        noise: 0.0,
        seed: 3,
    })
    .unwrap()
}

fn small_config(arch: Arch) -> TrainConfig {
    TrainConfig {
        arch,
        dims: Dims::square(4),
        epochs: 3,
        batch_size: 16,
        seed: 11,
        ratio: 2.0,
        features: FeatureSource::Walks(WalkConfig {
            walks_per_node: 2,
            walk_length: 10,
            window: 3,
            epochs: 1,
            ..WalkConfig::default()
        }),
        ..TrainConfig::default()
    }
}

#[test]
fn five_repetitions_give_five_curves() {
    let h = small_synth();
    let cfg = small_config(Arch::Sx);
    let split = SplitSpec::from_proportions(&[0.8, 0.2], 5, 11).unwrap();
    let (report, outcomes) = run_experiment(&h, &cfg, &split).unwrap();
    assert_eq!(report.repetitions.len(), 5);
    assert_eq!(outcomes.len(), 5);
    for (i, r) in report.repetitions.iter().enumerate() {
        assert_eq!(r.repetition, i);
        assert_eq!(r.curve.len(), cfg.epochs);
        assert_eq!(r.sigma_mismatches, 0);
        for e in &r.curve {
            assert!((0.0..=1.0).contains(&e.train_auc) && (0.0..=1.0).contains(&e.test_auc));
        }
    }
    assert!(report.test_auc.std >= 0.0);
    assert_eq!(report.curves_csv().lines().count(), 1 + 5 * cfg.epochs);

    let (again, _) = run_experiment(&h, &cfg, &split).unwrap();
    assert_eq!(
        serde_json::to_string(&report).unwrap(),
        serde_json::to_string(&again).unwrap()
    );
}

#[test]
fn identical_repetitions_have_zero_spread() {
    let h = small_synth();
    let cfg = small_config(Arch::X);
    let split = SplitSpec::from_proportions(&[0.8, 0.2], 1, 11).unwrap();
    let a = run_repetition(&h, &cfg, &split, 0).unwrap();
    let b = run_repetition(&h, &cfg, &split, 0).unwrap();
    let report = ExperimentReport::from_outcomes(&cfg, &[a, b]);
    assert_eq!(report.test_auc.std, 0.0);
}

#[test]
fn rescoring_the_training_set_reproduces_the_curve() {
    let h = small_synth();
    let cfg = small_config(Arch::HyperSagnn);
    let split = SplitSpec::from_proportions(&[0.8, 0.2], 1, 11).unwrap();
    let out = run_repetition(&h, &cfg, &split, 0).unwrap();
    let pairs: Vec<_> = out.train.iter().map(|&i| &out.samples[i].pair).collect();
    let labels: Vec<bool> = out
        .train
        .iter()
        .map(|&i| out.samples[i].label == Label::Positive)
        .collect();
    let scores = predict(&out.model, &out.features, &pairs).unwrap();
    assert_eq!(
        auc(&scores, &labels).unwrap(),
        out.curve.last().unwrap().train_auc
    );
    let test_scores: Vec<f64> = out.test_scores.iter().map(|s| s.score).collect();
    let test_labels: Vec<bool> = out.test_scores.iter().map(|s| s.positive).collect();
    assert_eq!(
        auc(&test_scores, &test_labels).unwrap(),
        out.final_test_auc()
    );
}

#[test]
fn baselines_are_scored_when_requested() {
    let h = small_synth();
    let mut cfg = small_config(Arch::X);
    cfg.epochs = 1;
    cfg.baselines.graph = true;
    cfg.baselines.node2vec_dim = Some(4);
    cfg.baselines.walk = WalkConfig {
        walks_per_node: 2,
        walk_length: 10,
        window: 3,
        epochs: 1,
        ..WalkConfig::default()
    };
    let split = SplitSpec::from_proportions(&[0.8, 0.2], 2, 11).unwrap();
    let (report, _) = run_experiment(&h, &cfg, &split).unwrap();
    assert_eq!(report.baselines.len(), 10);
    assert!(report.baselines.contains_key("aa-avg"));
    assert!(report.baselines.contains_key("n2v-cross_mean"));
}

#[test]
fn invalid_configs_are_rejected() {
    let h = small_synth();
    let split = SplitSpec::from_proportions(&[0.8, 0.2], 1, 0).unwrap();
    for cfg in [
        TrainConfig {
            lr: 0.0,
            ..small_config(Arch::X)
        },
        TrainConfig {
            epochs: 0,
            ..small_config(Arch::X)
        },
        TrainConfig {
            batch_size: 0,
            ..small_config(Arch::X)
        },
    ] {
        assert!(run_experiment(&h, &cfg, &split).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn auc_complements_under_negation(seed in 0u64..10_000) {
        let (s, l) = random_scores(seed);
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        let a = auc(&s, &l).unwrap();
        let b = auc(&neg, &l).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }
}
