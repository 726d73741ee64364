use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use setmatch_core::models::{
    build_network, cross_attention, joint_self_attention, network_from_vars, side_self_attention,
    Arch, CatParams, Dims, Model, Network, SatParams,
};
use setmatch_core::rng::rng_from;
use setmatch_tensor::gradcheck::{check_gradients, DEFAULT_STEP};
use setmatch_tensor::{Axis, Graph, Tensor, TensorError, Var};

type M = Vec<Vec<f64>>;

fn m(t: &Tensor) -> M {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

/// `Wᵀ x`.
fn wtx(w: &M, x: &[f64]) -> Vec<f64> {
    (0..w[0].len())
        .map(|j| (0..x.len()).map(|i| w[i][j] * x[i]).sum())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(acc: &mut [f64], a: f64, v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(s, x)| *s += a * x);
}

fn tanh_vec(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(f64::tanh).collect()
}

fn rand_mat(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| r.gen_range(-1.0..1.0))
}

struct Sat {
    q: M,
    k: M,
    v: M,
}

impl Sat {
    fn of(p: &SatParams<Tensor>) -> Self {
        Self {
            q: m(&p.w_q),
            k: m(&p.w_k),
            v: m(&p.w_v),
        }
    }
}

/// Joint self-attention written out entry by entry, with its weights.
fn joint_oracle(x: &M, x2: &M, p: &Sat) -> (M, M, M, M) {
    let (k, k2) = (x.len(), x2.len());
    let q = |v: &[f64]| wtx(&p.q, v);
    let kk = |v: &[f64]| wtx(&p.k, v);
    let vv = |v: &[f64]| wtx(&p.v, v);
    let mut d = Vec::new();
    let mut d2 = Vec::new();
    let mut left_w = Vec::new();
    let mut right_w = Vec::new();
    for i in 0..k {
        let a: Vec<f64> = (0..k).map(|t| dot(&q(&x[i]), &kk(&x[t]))).collect();
        let b: Vec<f64> = (0..k2).map(|t| dot(&q(&x[i]), &kk(&x2[t]))).collect();
        let z: f64 =
            a.iter().map(|v| v.exp()).sum::<f64>() + b.iter().map(|v| v.exp()).sum::<f64>();
        let alpha: Vec<f64> = a.iter().map(|v| v.exp() / z).collect();
        let beta: Vec<f64> = b.iter().map(|v| v.exp() / z).collect();
        let mut acc = vec![0.0; p.v[0].len()];
        for t in 0..k {
            axpy(&mut acc, alpha[t], &vv(&x[t]));
        }
        for t in 0..k2 {
            axpy(&mut acc, beta[t], &vv(&x2[t]));
        }
        d.push(tanh_vec(acc));
        left_w.push(alpha.into_iter().chain(beta).collect());
    }
    for i in 0..k2 {
        let a2: Vec<f64> = (0..k2).map(|t| dot(&q(&x2[i]), &kk(&x2[t]))).collect();
        let c: Vec<f64> = (0..k).map(|t| dot(&q(&x2[i]), &kk(&x[t]))).collect();
        let z: f64 =
            a2.iter().map(|v| v.exp()).sum::<f64>() + c.iter().map(|v| v.exp()).sum::<f64>();
        let alpha2: Vec<f64> = a2.iter().map(|v| v.exp() / z).collect();
        let gamma: Vec<f64> = c.iter().map(|v| v.exp() / z).collect();
        let mut acc = vec![0.0; p.v[0].len()];
        for t in 0..k {
            axpy(&mut acc, gamma[t], &vv(&x[t]));
        }
        for t in 0..k2 {
            axpy(&mut acc, alpha2[t], &vv(&x2[t]));
        }
        d2.push(tanh_vec(acc));
        right_w.push(gamma.into_iter().chain(alpha2).collect());
    }
    (d, d2, left_w, right_w)
}

fn sat_oracle(x: &M, p: &Sat) -> M {
    (0..x.len())
        .map(|i| {
            let a: Vec<f64> = x
                .iter()
                .map(|xt| dot(&wtx(&p.q, &x[i]), &wtx(&p.k, xt)))
                .collect();
            let z: f64 = a.iter().map(|v| v.exp()).sum();
            let mut acc = vec![0.0; p.v[0].len()];
            for (t, xt) in x.iter().enumerate() {
                axpy(&mut acc, a[t].exp() / z, &wtx(&p.v, xt));
            }
            tanh_vec(acc)
        })
        .collect()
}

fn cat_oracle(x: &M, x2: &M, p: &CatParams<Tensor>) -> (M, M) {
    let (wq, wk, wv) = (m(&p.w_q), m(&p.w_k), m(&p.w_v));
    let (wq2, wk2, wv2) = (m(&p.w_q_r), m(&p.w_k_r), m(&p.w_v_r));
    let side = |a: &M, other: &M, q: &M, k: &M, v: &M| -> M {
        a.iter()
            .map(|xi| {
                let logits: Vec<f64> = other
                    .iter()
                    .map(|xt| dot(&wtx(q, xi), &wtx(k, xt)))
                    .collect();
                let z: f64 = logits.iter().map(|l| l.exp()).sum();
                let mut acc = vec![0.0; v[0].len()];
                for (t, xt) in other.iter().enumerate() {
                    axpy(&mut acc, logits[t].exp() / z, &wtx(v, xt));
                }
                tanh_vec(acc)
            })
            .collect()
    };
    (side(x, x2, &wq, &wk2, &wv2), side(x2, x, &wq2, &wk, &wv))
}

fn head_scalar(delta: &[f64], w: &Tensor, b: &Tensor) -> f64 {
    (dot(delta, w.data()) + b.data()[0]).tanh()
}

fn deltas(dynamic: &M, x: &M, w_s: &Tensor) -> M {
    let ws = m(w_s);
    dynamic
        .iter()
        .zip(x)
        .map(|(dy, xi)| {
            let s = tanh_vec(wtx(&ws, xi));
            dy.iter().zip(&s).map(|(a, b)| (a - b) * (a - b)).collect()
        })
        .collect()
}

/// The full scoring pipeline as plain loops.
fn pipeline_oracle(net: &Network<Tensor>, x: &M, x2: &M) -> f64 {
    let hd = &net.head;
    let scalars: Vec<f64> = if let Some(j) = &net.joint {
        let (d, d2, ..) = joint_oracle(x, x2, &Sat::of(j));
        let z: M = x.iter().chain(x2).cloned().collect();
        let dy: M = d.into_iter().chain(d2).collect();
        deltas(&dy, &z, &net.statics.w_s)
            .iter()
            .map(|dl| head_scalar(dl, &hd.left.w, &hd.left.b))
            .collect()
    } else {
        let (mut y, mut y2) = (x.clone(), x2.clone());
        if let Some(p) = &net.sat_in {
            y = sat_oracle(&y, &Sat::of(&p.left));
            y2 = sat_oracle(&y2, &Sat::of(&p.right));
        }
        let (mut d, mut d2) = cat_oracle(&y, &y2, net.cat.as_ref().unwrap());
        if let Some(p) = &net.sat_out {
            d = sat_oracle(&d, &Sat::of(&p.left));
            d2 = sat_oracle(&d2, &Sat::of(&p.right));
        }
        let right = hd.right.as_ref().unwrap();
        deltas(&d, x, &net.statics.w_s)
            .iter()
            .map(|dl| head_scalar(dl, &hd.left.w, &hd.left.b))
            .chain(
                deltas(&d2, x2, net.statics.w_s_r.as_ref().unwrap())
                    .iter()
                    .map(|dl| head_scalar(dl, &right.w, &right.b)),
            )
            .collect()
    };
    let mean = scalars.iter().sum::<f64>() / scalars.len() as f64;
    let logit = hd.out_w.data()[0] * mean + hd.out_b.data()[0];
    1.0 / (1.0 + (-logit).exp())
}

fn tensor_net(model: &Model) -> Network<Tensor> {
    let mut it = model.parameters().iter().cloned();
    build_network(model.arch(), model.dims(), &mut |_, _, _| {
        it.next().unwrap()
    })
}

fn forward(model: &Model, x: &Tensor, x2: &Tensor) -> f64 {
    let mut g = Graph::new();
    let (net, _) = model.bind(&mut g);
    let (xv, x2v) = (g.leaf(x.clone()), g.leaf(x2.clone()));
    let z = net.logit(&mut g, xv, x2v).unwrap();
    let p = g.sigmoid(z).unwrap();
    g.value(p).item().unwrap()
}

fn random_sat(r: &mut ChaCha8Rng, d: usize, dk: usize, dv: usize) -> SatParams<Tensor> {
    SatParams {
        w_q: rand_mat(r, d, dk),
        w_k: rand_mat(r, d, dk),
        w_v: rand_mat(r, d, dv),
    }
}

fn bind_sat(g: &mut Graph, p: &SatParams<Tensor>) -> SatParams<Var> {
    SatParams {
        w_q: g.leaf(p.w_q.clone()),
        w_k: g.leaf(p.w_k.clone()),
        w_v: g.leaf(p.w_v.clone()),
    }
}

fn random_cat(r: &mut ChaCha8Rng, d: usize) -> CatParams<Tensor> {
    CatParams {
        w_q: rand_mat(r, d, d),
        w_k: rand_mat(r, d, d),
        w_v: rand_mat(r, d, d),
        w_q_r: rand_mat(r, d, d),
        w_k_r: rand_mat(r, d, d),
        w_v_r: rand_mat(r, d, d),
    }
}

fn bind_cat(g: &mut Graph, p: &CatParams<Tensor>) -> CatParams<Var> {
    CatParams {
        w_q: g.leaf(p.w_q.clone()),
        w_k: g.leaf(p.w_k.clone()),
        w_v: g.leaf(p.w_v.clone()),
        w_q_r: g.leaf(p.w_q_r.clone()),
        w_k_r: g.leaf(p.w_k_r.clone()),
        w_v_r: g.leaf(p.w_v_r.clone()),
    }
}

fn max_abs_diff(a: &Tensor, b: &M) -> f64 {
    let mut worst = 0.0_f64;
    for (i, row) in b.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((a.get(i, j) - v).abs());
        }
    }
    worst
}

#[test]
fn joint_attention_matches_scalar_loops() {
    for seed in 0..200u64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (k, k2) = (r.gen_range(1..=5), r.gen_range(1..=5));
        let (d, dk, dv) = (r.gen_range(1..=6), r.gen_range(1..=6), r.gen_range(1..=6));
        let x = rand_mat(&mut r, k, d);
        let x2 = rand_mat(&mut r, k2, d);
        let p = random_sat(&mut r, d, dk, dv);
        let mut g = Graph::new();
        let (xv, x2v) = (g.leaf(x.clone()), g.leaf(x2.clone()));
        let pv = bind_sat(&mut g, &p);
        let out = joint_self_attention(&mut g, xv, x2v, &pv).unwrap();
        let (d_l, d_r, w_l, w_r) = joint_oracle(&m(&x), &m(&x2), &Sat::of(&p));
        assert!(max_abs_diff(g.value(out.left), &d_l) < 1e-12, "seed {seed}");
        assert!(
            max_abs_diff(g.value(out.right), &d_r) < 1e-12,
            "seed {seed}"
        );
        let w = g.value(out.weights);
        for i in 0..k {
            let row = w.row(i);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().zip(&w_l[i]).all(|(a, b)| (a - b).abs() < 1e-12));
        }
        for i in 0..k2 {
            let row = w.row(k + i);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().zip(&w_r[i]).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }
}

#[test]
fn equal_logits_split_weight_evenly() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let x = rand_mat(&mut r, 1, 4);
    let p = random_sat(&mut r, 4, 4, 4);
    let mut g = Graph::new();
    let (xv, x2v) = (g.leaf(x.clone()), g.leaf(x.clone()));
    let pv = bind_sat(&mut g, &p);
    let out = joint_self_attention(&mut g, xv, x2v, &pv).unwrap();
    let w = g.value(out.weights);
    assert!((w.get(0, 0) - 0.5).abs() < 1e-15 && (w.get(0, 1) - 0.5).abs() < 1e-15);
}

#[test]
fn side_attention_properties() {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let p = random_sat(&mut r, 3, 3, 3);
    // One input: weight 1, output tanh(W_vᵀ x).
    let x = rand_mat(&mut r, 1, 3);
    let mut g = Graph::new();
    let xv = g.leaf(x.clone());
    let pv = bind_sat(&mut g, &p);
    let (y, w) = side_self_attention(&mut g, xv, &pv).unwrap();
    assert_eq!(g.value(w).data(), &[1.0]);
    let expected = tanh_vec(wtx(&m(&p.w_v), x.row(0)));
    assert!(max_abs_diff(g.value(y), &vec![expected]) < 1e-15);

    for seed in 0..50u64 {
        let mut r = ChaCha8Rng::seed_from_u64(100 + seed);
        let n = r.gen_range(2..=6);
        let x = rand_mat(&mut r, n, 3);
        let mut g = Graph::new();
        let xv = g.leaf(x.clone());
        let pv = bind_sat(&mut g, &p);
        let (y, w) = side_self_attention(&mut g, xv, &pv).unwrap();
        assert!(max_abs_diff(g.value(y), &sat_oracle(&m(&x), &Sat::of(&p))) < 1e-12);
        for i in 0..n {
            assert!((g.value(w).row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // Permuting inputs permutes outputs.
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left(1);
        perm.swap(0, n - 1);
        let xp = Tensor::from_fn(n, 3, |i, j| x.get(perm[i], j));
        let xpv = g.leaf(xp);
        let (yp, _) = side_self_attention(&mut g, xpv, &pv).unwrap();
        for i in 0..n {
            for j in 0..3 {
                let a = g.value(yp).get(i, j);
                let b = g.value(y).get(perm[i], j);
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn cross_attention_properties() {
    for seed in 0..100u64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (k, k2) = (r.gen_range(1..=5), r.gen_range(1..=5));
        let x = rand_mat(&mut r, k, 4);
        let x2 = rand_mat(&mut r, k2, 4);
        let p = random_cat(&mut r, 4);
        let mut g = Graph::new();
        let (xv, x2v) = (g.leaf(x.clone()), g.leaf(x2.clone()));
        let pv = bind_cat(&mut g, &p);
        let out = cross_attention(&mut g, xv, x2v, &pv).unwrap();
        let (d, d2) = cat_oracle(&m(&x), &m(&x2), &p);
        assert!(max_abs_diff(g.value(out.left), &d) < 1e-12);
        assert!(max_abs_diff(g.value(out.right), &d2) < 1e-12);
        for i in 0..k {
            assert!((g.value(out.beta).row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        for i in 0..k2 {
            assert!((g.value(out.gamma).row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        if k2 == 1 {
            let first = g.value(out.left).row(0).to_vec();
            for i in 1..k {
                assert!(g.value(out.left).row(i) == first.as_slice());
            }
        }
        if k >= 3 {
            // Reverse every left row except row 0: δ_0 is unchanged.
            let mut order: Vec<usize> = (1..k).rev().collect();
            order.insert(0, 0);
            let xp = Tensor::from_fn(k, 4, |i, j| x.get(order[i], j));
            let xpv = g.leaf(xp);
            let outp = cross_attention(&mut g, xpv, x2v, &pv).unwrap();
            assert_eq!(g.value(outp.left).row(0), g.value(out.left).row(0));
        }
    }
}

#[test]
fn variant_x_has_cross_only_flow() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let (k, k2) = (4, 3);
    let x = rand_mat(&mut r, k, 4);
    let x2 = rand_mat(&mut r, k2, 4);
    let p = random_cat(&mut r, 4);
    let probe = rand_mat(&mut r, 1, 4);
    for i in 0..k {
        let mut g = Graph::new();
        let (xv, x2v) = (g.leaf(x.clone()), g.leaf(x2.clone()));
        let pv = bind_cat(&mut g, &p);
        let out = cross_attention(&mut g, xv, x2v, &pv).unwrap();
        let row = g.slice_rows(out.left, i, i + 1).unwrap();
        let w = g.leaf(probe.clone());
        let prod = g.mul(row, w).unwrap();
        let s = g.sum_all(prod).unwrap();
        let grads = g.backward(s).unwrap();
        let gx = grads.get(xv);
        for j in 0..k {
            let norm: f64 = gx.row(j).iter().map(|v| v.abs()).sum();
            if j == i {
                assert!(norm > 0.0);
            } else {
                assert_eq!(norm, 0.0, "left row {j} leaks into δ_{i}");
            }
        }
        let gx2 = grads.get(x2v);
        for t in 0..k2 {
            assert!(gx2.row(t).iter().any(|v| *v != 0.0), "right row {t} unused");
        }
    }
}

#[test]
fn end_to_end_matches_scalar_pipeline() {
    for arch in Arch::ALL {
        for seed in 0..40u64 {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let d = r.gen_range(1..=5);
            let dims = if arch == Arch::X || arch == Arch::HyperSagnn {
                Dims {
                    d,
                    d_k: r.gen_range(1..=5),
                    d_v: r.gen_range(1..=5),
                }
            } else {
                Dims::square(d)
            };
            let model = Model::init(arch, dims, &mut rng_from(seed)).unwrap();
            let (k, k2) = (r.gen_range(1..=5), r.gen_range(1..=5));
            let x = rand_mat(&mut r, k, d);
            let x2 = rand_mat(&mut r, k2, d);
            let got = forward(&model, &x, &x2);
            let expected = pipeline_oracle(&tensor_net(&model), &m(&x), &m(&x2));
            assert!(
                (got - expected).abs() < 1e-12,
                "{arch} seed {seed}: {got} vs {expected}"
            );
        }
    }
}

fn as_tensor_error(e: setmatch_core::Error) -> TensorError {
    match e {
        setmatch_core::Error::Tensor(t) => t,
        other => panic!("{other}"),
    }
}

#[test]
fn every_parameter_gradient_matches_finite_differences() {
    for arch in Arch::ALL {
        for seed in 0..3u64 {
            let dims = Dims::square(3);
            let model = Model::init(arch, dims, &mut rng_from(seed)).unwrap();
            let mut r = ChaCha8Rng::seed_from_u64(seed + 10);
            let samples: Vec<(Tensor, Tensor, f64)> = (0..3)
                .map(|i| {
                    let k = r.gen_range(1..=3);
                    let k2 = r.gen_range(1..=3);
                    (
                        rand_mat(&mut r, k, 3),
                        rand_mat(&mut r, k2, 3),
                        (i % 2) as f64,
                    )
                })
                .collect();
            let mut inputs = model.parameters().to_vec();
            inputs.push(samples[0].0.clone());
            inputs.push(samples[0].1.clone());
            let n_params = model.parameters().len();
            let check = check_gradients(&inputs, DEFAULT_STEP, |g, vars| {
                let net = network_from_vars(arch, dims, &vars[..n_params]);
                let mut logits = Vec::new();
                let mut labels = Vec::new();
                for (i, (x, x2, y)) in samples.iter().enumerate() {
                    let (xv, x2v) = if i == 0 {
                        (vars[n_params], vars[n_params + 1])
                    } else {
                        (g.leaf(x.clone()), g.leaf(x2.clone()))
                    };
                    logits.push(net.logit(g, xv, x2v).map_err(as_tensor_error)?);
                    labels.push(*y);
                }
                let z = g.concat_rows(&logits)?;
                g.bce_with_logits(z, &labels)
            })
            .unwrap();
            assert!(
                check.max_relative_error < 1e-4,
                "{arch} seed {seed}: {} at {:?}",
                check.max_relative_error,
                check.worst
            );
        }
    }
}

#[test]
fn hyper_sagnn_is_invariant_to_joint_permutation() {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let model = Model::init(Arch::HyperSagnn, Dims::square(4), &mut rng_from(8)).unwrap();
    let (x, x2) = (rand_mat(&mut r, 3, 4), rand_mat(&mut r, 2, 4));
    let base = forward(&model, &x, &x2);
    // Moving nodes across the left/right boundary does not matter either:
    // the baseline only sees the union.
    let z = Tensor::from_fn(
        5,
        4,
        |i, j| if i < 3 { x.get(i, j) } else { x2.get(i - 3, j) },
    );
    let a = Tensor::from_fn(2, 4, |i, j| z.get(4 - i, j));
    let b = Tensor::from_fn(3, 4, |i, j| z.get(i, j));
    assert!((forward(&model, &a, &b) - base).abs() < 1e-12);
}

fn permuted(t: &Tensor, perm: &[usize]) -> Tensor {
    Tensor::from_fn(t.rows(), t.cols(), |i, j| t.get(perm[i], j))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scores_are_set_functions(seed in 0u64..100_000, arch_ix in 0usize..4, k in 1usize..6, k2 in 1usize..6) {
        let arch = Arch::ALL[arch_ix];
        let model = Model::init(arch, Dims::square(4), &mut rng_from(seed)).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (x, x2) = (rand_mat(&mut r, k, 4), rand_mat(&mut r, k2, 4));
        let base = forward(&model, &x, &x2);
        prop_assert!(base > 0.0 && base < 1.0);
        let mut p: Vec<usize> = (0..k).collect();
        let mut p2: Vec<usize> = (0..k2).collect();
        use rand::seq::SliceRandom;
        p.shuffle(&mut r);
        p2.shuffle(&mut r);
        let moved = forward(&model, &permuted(&x, &p), &permuted(&x2, &p2));
        prop_assert!((moved - base).abs() < 1e-12);
    }

    #[test]
    fn attention_rows_are_distributions(seed in 0u64..100_000, k in 1usize..6, k2 in 1usize..6) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_mat(&mut r, k, 3).map(|v| 3.0 * v);
        let x2 = rand_mat(&mut r, k2, 3).map(|v| 3.0 * v);
        let sp = random_sat(&mut r, 3, 3, 3);
        let cp = random_cat(&mut r, 3);
        let mut g = Graph::new();
        let (xv, x2v) = (g.leaf(x), g.leaf(x2));
        let spv = bind_sat(&mut g, &sp);
        let cpv = bind_cat(&mut g, &cp);
        let joint = joint_self_attention(&mut g, xv, x2v, &spv).unwrap();
        let cross = cross_attention(&mut g, xv, x2v, &cpv).unwrap();
        for w in [joint.weights, cross.beta, cross.gamma] {
            let sums = g.sum(w, Axis::Cols).unwrap();
            for s in g.value(sums).data() {
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }
}
