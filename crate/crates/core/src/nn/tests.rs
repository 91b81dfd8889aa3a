use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::Error;

fn t64(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape, data.to_vec()).unwrap()
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                c[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    c
}

#[test]
fn matmul_identity_and_projector() {
    let mut g = Graph::<f64>::new();
    let i2 = g.input(&t64(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let m = g.input(&t64(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let out = g.matmul(i2, m).unwrap();
    assert_eq!(g.value(out), &[1.0, 2.0, 3.0, 4.0]);

    let p = g.input(&t64(&[2, 2], &[1.0, 0.0, 0.0, 0.0]));
    let v = g.input(&t64(&[2, 1], &[5.0, 7.0]));
    let out = g.matmul(p, v).unwrap();
    assert_eq!(g.value(out), &[5.0, 0.0]);
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let a = random(&[3, 4], &mut rng);
        let b = random(&[4, 2], &mut rng);
        let mut g = Graph::new();
        let (va, vb) = (g.input(&a), g.input(&b));
        let out = g.matmul(va, vb).unwrap();
        let oracle = naive_matmul(a.data(), b.data(), 3, 4, 2);
        for (x, y) in g.value(out).iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-6);
        }
    }
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let mut g = Graph::<f32>::new();
    let a = g.input(&Tensor::zeros(&[2, 3]));
    let b = g.input(&Tensor::zeros(&[2, 3]));
    match g.matmul(a, b) {
        Err(Error::Dimension { left, right, .. }) => {
            assert_eq!(left, vec![2, 3]);
            assert_eq!(right, vec![2, 3]);
        }
        other => panic!("expected dimension error, got {other:?}"),
    }
}

#[test]
fn elementwise_values() {
    let mut g = Graph::<f64>::new();
    let z = g.input(&t64(&[1], &[0.0]));
    let s = g.sigmoid(z);
    let t = g.tanh(z);
    assert_eq!(g.value(s), &[0.5]);
    assert_eq!(g.value(t), &[0.0]);
    let two = g.input(&t64(&[1], &[2.0]));
    let s2 = g.sigmoid(two);
    let oracle = 1.0 / (1.0 + (-2.0f64).exp());
    assert!((g.value(s2)[0] - oracle).abs() < 1e-15);
    assert!((oracle - 0.880797).abs() < 1e-6);

    let a = g.input(&t64(&[2], &[1.0, 2.0]));
    let b = g.input(&t64(&[3], &[1.0, 2.0, 3.0]));
    assert!(matches!(g.add(a, b), Err(Error::Dimension { .. })));
    assert!(matches!(g.mul(a, b), Err(Error::Dimension { .. })));
}

#[test]
fn softmax_examples() {
    let sm = softmax(&[0.0f64, 0.0, 0.0]).unwrap();
    for p in &sm {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
    let sm = softmax(&[1000.0f32, 0.0]).unwrap();
    assert!((sm[0] - 1.0).abs() < 1e-6 && sm[1] >= 0.0 && sm[1] < 1e-6);
    let sm = softmax(&[1.0f64, 2.0, 3.0]).unwrap();
    let expected = [0.09003057, 0.24472847, 0.66524096];
    for (p, e) in sm.iter().zip(expected) {
        assert!((p - e).abs() < 1e-8);
    }
    assert!(matches!(softmax(&[f64::NAN, 1.0]), Err(Error::Numeric(_))));
}

#[test]
fn mse_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.input(&t64(&[2], &[0.0, 0.0]));
    let a = g.input(&t64(&[2], &[1.0, 1.0]));
    let l = g.mse_loss(x, a).unwrap();
    assert_eq!(g.scalar_value(l), 1.0);
    let l0 = g.mse_loss(x, x).unwrap();
    assert_eq!(g.scalar_value(l0), 0.0);
    let c = g.input(&t64(&[3], &[0.0; 3]));
    assert!(g.mse_loss(x, c).is_err());
}

#[test]
fn cross_entropy_examples() {
    let mut g = Graph::<f64>::new();
    let logits = g.input(&Tensor::zeros(&[1, 15]));
    let l = g.cross_entropy_loss(logits, &[4]).unwrap();
    assert!((g.scalar_value(l) - 15f64.ln()).abs() < 1e-12);
    assert!((g.scalar_value(l) - 2.70805).abs() < 1e-5);

    let mut hot = vec![0.0; 15];
    hot[3] = 100.0;
    let logits = g.input(&t64(&[1, 15], &hot));
    let l = g.cross_entropy_loss(logits, &[3]).unwrap();
    assert!(g.scalar_value(l) < 1e-40);

    assert!(matches!(
        g.cross_entropy_loss(logits, &[15]),
        Err(Error::Label { label: 15, classes: 15 })
    ));
}

#[test]
fn backward_examples() {
    let mut g = Graph::<f64>::new();
    let w = g.variable(&t64(&[3], &[0.3, -1.0, 2.0]));
    let s = g.sum(w);
    g.backward(s).unwrap();
    assert_eq!(g.grad(w).unwrap(), &[1.0, 1.0, 1.0]);

    let mut g = Graph::<f64>::new();
    let w = g.variable(&t64(&[2], &[1.0, 2.0]));
    let sq = g.mul(w, w).unwrap();
    let s = g.sum(sq);
    g.backward(s).unwrap();
    assert_eq!(g.grad(w).unwrap(), &[2.0, 4.0]);

    // fan-out: d(sum(w + w))/dw = 2
    let mut g = Graph::<f64>::new();
    let w = g.variable(&t64(&[2], &[5.0, -3.0]));
    let ww = g.add(w, w).unwrap();
    let s = g.sum(ww);
    g.backward(s).unwrap();
    assert_eq!(g.grad(w).unwrap(), &[2.0, 2.0]);

    assert!(matches!(g.backward(ww), Err(Error::Contract(_))));
}

#[test]
fn shared_parameter_grads_accumulate_into_store() {
    let mut store = ParamStore::<f64>::new();
    let id = store.add("w", t64(&[2], &[1.0, 2.0])).unwrap();
    for _ in 0..2 {
        let mut g = Graph::new();
        let a = g.param(&store, id);
        let b = g.param(&store, id);
        assert_eq!(a, b);
        let s = g.sum(a);
        g.backward(s).unwrap();
        g.accumulate_param_grads(&mut store).unwrap();
    }
    assert_eq!(store.get(id).grad().unwrap(), &[2.0, 2.0]);
    store.zero_grads();
    assert_eq!(store.get(id).grad().unwrap(), &[0.0, 0.0]);
}

/// Checks every differentiable op against central differences.
fn fd_check(build: impl Fn(&mut Graph<f64>, Var) -> Var, input: Tensor<f64>) -> f64 {
    let mut store = ParamStore::new();
    let id = store.add("x", input).unwrap();
    let report = gradient_check(
        &mut store,
        |g, s| {
            let x = g.param(s, id);
            Ok(build(g, x))
        },
        64,
        0,
    )
    .unwrap();
    report.max_rel_error
}

#[test]
fn elementwise_ops_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random(&[2, 5], &mut rng);
    let c = random(&[2, 5], &mut rng);
    type Op = Box<dyn Fn(&mut Graph<f64>, Var) -> Var>;
    let ops: Vec<(&str, Op)> = vec![
        ("sigmoid", Box::new(|g, x| { let y = g.sigmoid(x); let y2 = g.mul(y, y).unwrap(); g.sum(y2) })),
        ("tanh", Box::new(|g, x| { let y = g.tanh(x); let y2 = g.mul(y, y).unwrap(); g.sum(y2) })),
        ("relu", Box::new(|g, x| { let y = g.relu(x); let y2 = g.mul(y, y).unwrap(); g.mean(y2) })),
        ("scale", Box::new(|g, x| { let y = g.scale(x, 3.0); let y2 = g.mul(y, x).unwrap(); g.sum(y2) })),
        ("softmax", Box::new({ let c = c.clone(); move |g, x| { let y = g.softmax(x).unwrap(); let cv = g.input(&c); let p = g.mul(y, cv).unwrap(); g.sum(p) } })),
        ("mse", Box::new({ let c = c.clone(); move |g, x| { let cv = g.input(&c); let t = g.tanh(x); g.mse_loss(t, cv).unwrap() } })),
        ("sub", Box::new({ let c = c.clone(); move |g, x| { let cv = g.input(&c); let d = g.sub(cv, x).unwrap(); let d2 = g.mul(d, d).unwrap(); g.sum(d2) } })),
        ("cross_entropy", Box::new(|g, x| g.cross_entropy_loss(x, &[3, 0]).unwrap())),
        ("concat", Box::new(|g, x| { let a = g.concat_cols(&[(x, 1, 2), (x, 0, 4)]).unwrap(); let t = g.tanh(a); g.sum(t) })),
    ];
    for (name, op) in ops {
        let err = fd_check(op, x.clone());
        assert!(err < 1e-4, "{name}: rel err {err}");
    }
}

#[test]
fn lstm_step_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut store = ParamStore::new();
    let (inp, hid, batch) = (3, 4, 2);
    let w = store.add("w", random(&[inp + hid, 4 * hid], &mut rng)).unwrap();
    let b = store.add("b", random(&[4 * hid], &mut rng)).unwrap();
    let x = store.add("x", random(&[batch, inp], &mut rng)).unwrap();
    let s0 = store.add("s0", random(&[batch, 2 * hid], &mut rng)).unwrap();
    let report = gradient_check(
        &mut store,
        |g, s| {
            let (w, b, x, s0) = (g.param(s, w), g.param(s, b), g.param(s, x), g.param(s, s0));
            let s1 = g.lstm_step(Some(x), Some(s0), w, b)?;
            let s2 = g.lstm_step(Some(x), Some(s1), w, b)?;
            let s3 = g.lstm_step(None, Some(s2), w, b)?;
            let sq = g.mul(s3, s3)?;
            Ok(g.sum(sq))
        },
        200,
        3,
    )
    .unwrap();
    assert!(report.passes(1e-4), "{report:?}");
}

#[test]
fn f32_exp_and_gates_track_f64() {
    let mut worst = [0.0f64; 3];
    for i in 0..=200_000 {
        let x = (-90.0 + 180.0 * i as f64 / 200_000.0) as f32 as f64;
        let e = kernels::exp_f32(x as f32) as f64;
        let want = x.clamp(-87.0, 88.0).exp();
        worst[0] = worst[0].max((e - want).abs() / want);
        let mut v = [x as f32; 2];
        f32::sigmoid_slice(&mut v[..1]);
        f32::tanh_slice(&mut v[1..]);
        worst[1] = worst[1].max((v[0] as f64 - 1.0 / (1.0 + (-x).exp())).abs());
        worst[2] = worst[2].max((v[1] as f64 - x.tanh()).abs());
    }
    assert!(worst[0] < 3e-7, "exp rel {worst:?}");
    assert!(worst[1] < 2e-7 && worst[2] < 4e-7, "{worst:?}");
    let mut v = [f32::NAN, f32::INFINITY, f32::NEG_INFINITY];
    f32::tanh_slice(&mut v);
    assert!(v[0].is_nan() && v[1] == 1.0 && v[2] == -1.0);
    let mut v = [f32::NAN, f32::INFINITY, f32::NEG_INFINITY];
    f32::sigmoid_slice(&mut v);
    assert!(v[0].is_nan() && v[1] == 1.0 && v[2].abs() < 1e-37);
}

#[test]
fn adam_zero_gradient_is_a_no_op() {
    let mut store = ParamStore::<f64>::new();
    let id = store.add("w", t64(&[3], &[0.5, -1.0, 2.0])).unwrap();
    store.get_mut(id).accumulate_grad(&[0.0; 3]).unwrap();
    let mut adam = AdamState::new(&store, AdamConfig::default()).unwrap();
    for _ in 0..5 {
        adam.step(&mut store).unwrap();
    }
    assert_eq!(store.get(id).data(), &[0.5, -1.0, 2.0]);
    assert!(adam.first_moment(0).iter().chain(adam.second_moment(0)).all(|&m| m == 0.0));
    assert_eq!(adam.step_count(), 5);
}

#[test]
fn adam_single_step_hand_evaluated() {
    // m = 0.1, v = 0.001; corrected m = 1, v = 1; update = 0.01 * 1 / (1 + 0.01)
    let mut store = ParamStore::<f64>::new();
    let id = store.add("w", t64(&[1], &[0.0])).unwrap();
    store.get_mut(id).accumulate_grad(&[1.0]).unwrap();
    let mut adam = AdamState::new(&store, AdamConfig::default()).unwrap();
    adam.step(&mut store).unwrap();
    assert!((store.get(id).data()[0] - (-0.01 / 1.01)).abs() < 1e-15);
    assert_eq!(adam.step_count(), 1);
}

#[test]
fn adam_symmetry_and_determinism() {
    let run = || {
        let mut store = ParamStore::<f32>::new();
        let id = store.add("w", Tensor::new(&[2], vec![0.3, 0.3]).unwrap()).unwrap();
        let mut adam = AdamState::new(&store, AdamConfig::default()).unwrap();
        for k in 0..50 {
            store.zero_grads();
            let g = (k as f32 * 0.37).sin();
            store.get_mut(id).accumulate_grad(&[g, g]).unwrap();
            adam.step(&mut store).unwrap();
        }
        store.get(id).data().to_vec()
    };
    let a = run();
    assert_eq!(a[0].to_bits(), a[1].to_bits());
    let b = run();
    assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
}

#[test]
fn adam_shape_mismatch() {
    let mut store = ParamStore::<f32>::new();
    store.add("w", Tensor::zeros(&[2])).unwrap();
    let mut adam = AdamState::new(&store, AdamConfig::default()).unwrap();
    let mut other = ParamStore::<f32>::new();
    other.add("w", Tensor::zeros(&[3])).unwrap();
    assert!(matches!(adam.step(&mut other), Err(Error::Dimension { .. })));
}

#[test]
fn batch_loss_is_mean_of_sample_losses() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let logits = Tensor::<f32>::from_fn(&[6, 4], |_| rng.random_range(-3.0..3.0));
    let labels = [0, 3, 1, 2, 2, 0];
    let mut g = Graph::new();
    let l = g.input(&logits);
    let batch = g.cross_entropy_loss(l, &labels).unwrap();
    let mut per = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = Tensor::new(&[1, 4], logits.data()[r * 4..r * 4 + 4].to_vec()).unwrap();
        let v = g.input(&row);
        let s = g.cross_entropy_loss(v, &[label]).unwrap();
        per += g.scalar_value(s) / labels.len() as f32;
    }
    assert!((g.scalar_value(batch) - per).abs() < 1e-5);
}

proptest! {
    #[test]
    fn softmax_sums_to_one_and_is_permutation_equivariant(
        xs in prop::collection::vec(-50.0f64..50.0, 1..12),
        rot in 0usize..12,
    ) {
        let p = softmax(&xs).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(p.iter().all(|&v| v > 0.0));
        let r = rot % xs.len();
        let mut rotated = xs.clone();
        rotated.rotate_left(r);
        let mut pr = p.clone();
        pr.rotate_left(r);
        let q = softmax(&rotated).unwrap();
        for (a, b) in pr.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_gradients_match_finite_differences(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let a = store.add("a", random(&[3, 4], &mut rng)).unwrap();
        let b = store.add("b", random(&[4, 2], &mut rng)).unwrap();
        let bias = store.add("bias", random(&[2], &mut rng)).unwrap();
        let report = gradient_check(&mut store, |g, s| {
            let (a, b, bias) = (g.param(s, a), g.param(s, b), g.param(s, bias));
            let m = g.matmul(a, b)?;
            let y = g.add_bias(m, bias)?;
            let t = g.tanh(y);
            Ok(g.sum(t))
        }, 32, seed).unwrap();
        prop_assert!(report.passes(1e-4), "{:?}", report);
    }
}
