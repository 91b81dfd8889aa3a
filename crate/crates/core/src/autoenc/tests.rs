use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::nn::{gradient_check, Tensor};
use crate::train::Schedule;

fn tiny(window: usize, channels: usize, hidden: usize) -> AutoEncConfig {
    AutoEncConfig {
        window,
        channels,
        filters: vec![4, 6, 8],
        kernels: vec![3, 3, 1],
        hidden,
        lstm_layers: 2,
        schedule: Schedule {
            epochs: 1,
            batch_size: 8,
            micro_batch: 4,
        },
        adam: AdamConfig::default(),
        seed: 3,
    }
}

fn random_windows(n: usize, cfg: &AutoEncConfig, seed: u64) -> Vec<f32> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n * cfg.window * cfg.channels).map(|_| r.random_range(-1.0..1.0)).collect()
}

#[test]
fn shapes_round_trip_for_all_window_sizes() {
    for window in [25, 50, 100] {
        let cfg = AutoEncConfig {
            window,
            channels: 3,
            hidden: 16,
            ..AutoEncConfig::default()
        };
        let model = AutoEncModel::new(&cfg).unwrap();
        let x = random_windows(2, &cfg, 1);
        assert_eq!(model.reconstruct(&x).unwrap().len(), x.len());
        assert_eq!(model.encode(&x[..window * 3]).unwrap().len(), 64);
    }
}

#[test]
fn default_sized_embedding_and_input_check() {
    let cfg = AutoEncConfig::default();
    assert_eq!(cfg.embedding_len(), 1024);
    let mut store = ParamStore::<f32>::new();
    let net = AutoEncoder::build(&cfg, &mut store).unwrap();
    assert_eq!(net.decoder[1].hidden_size() * 2, 96);
    for (conv, deconv) in net.convs.iter().zip(&net.deconvs) {
        assert!(deconv.mirrors(conv));
    }
    let mut g = Graph::new();
    let ok = g.input(&Tensor::zeros(&[1, 25, 6]));
    let (f, b) = net.encode_graph(&mut g, &store, ok).unwrap();
    assert_eq!((g.shape(f), g.shape(b)), (&[1, 512][..], &[1, 512][..]));
    let bad = g.input(&Tensor::zeros(&[1, 26, 6]));
    assert!(matches!(net.encode_graph(&mut g, &store, bad), Err(Error::Dimension { .. })));
}

#[test]
fn encoding_is_deterministic_and_checks_sizes() {
    let cfg = tiny(6, 2, 4);
    let model = AutoEncModel::new(&cfg).unwrap();
    let x = random_windows(1, &cfg, 2);
    assert_eq!(model.encode(&x).unwrap(), model.encode(&x).unwrap());
    assert!(matches!(model.encode(&x[1..]), Err(Error::Dimension { .. })));
    assert!(matches!(model.decode(&[0.0; 15]), Err(Error::Dimension { .. })));
    let e = model.encode(&x).unwrap();
    assert_eq!(model.decode(&e).unwrap(), model.reconstruct(&x).unwrap());
}

#[test]
fn zero_parameters_reconstruct_zero() {
    let cfg = tiny(6, 2, 4);
    let mut model = AutoEncModel::new(&cfg).unwrap();
    for p in model.params.iter_mut() {
        p.tensor.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let out = model.decode(&[0.0; 16]).unwrap();
    assert!(out.iter().all(|&v| v == 0.0));
}

#[test]
fn reconstruction_error_examples() {
    let cfg = tiny(6, 2, 4);
    let a: Vec<f32> = (0..12).map(|i| i as f32 * 0.3).collect();
    let err = channel_mse(&a, &a, 6, 2);
    assert_eq!(err, vec![vec![0.0, 0.0]]);
    let b: Vec<f32> = a.iter().map(|v| v - 1.0).collect();
    let err = channel_mse(&a, &b, 6, 2);
    assert!(err[0].iter().all(|&e| (e - 1.0).abs() < 1e-12));

    let model = AutoEncModel::new(&cfg).unwrap();
    let x = random_windows(1, &cfg, 5);
    let y = model.reconstruct(&x).unwrap();
    let err = model.reconstruction_error(&x).unwrap();
    for c in 0..2 {
        let direct: f64 = (0..6).map(|t| (x[t * 2 + c] as f64 - y[t * 2 + c] as f64).powi(2)).sum::<f64>() / 6.0;
        assert!((err[c] - direct).abs() < 1e-7);
    }
}

#[test]
fn full_model_gradient_check() {
    let cfg = tiny(5, 2, 4);
    let mut store = ParamStore::<f64>::new();
    let net = AutoEncoder::build(&cfg, &mut store).unwrap();
    net.init_parameters(&mut store, 1);
    let x = Tensor::from_fn(&[2, 5, 2], |i| ((i * 7 % 11) as f64 / 5.0) - 1.0);
    let report = gradient_check(
        &mut store,
        |g, s| {
            let xv = g.input(&x);
            let y = net.reconstruct_graph(g, s, xv)?;
            g.mse_loss(y, xv)
        },
        12,
        4,
    )
    .unwrap();
    assert!(report.passes(1e-4), "{report:?}");
}

#[test]
fn overfits_a_single_repeated_window() {
    let mut cfg = tiny(8, 2, 16);
    cfg.filters = vec![16, 16, 16];
    cfg.schedule = Schedule {
        epochs: 500,
        batch_size: 4,
        micro_batch: 4,
    };
    let one: Vec<f32> = (0..16).map(|i| ((i as f32) * 0.7).sin()).collect();
    let data: Vec<f32> = one.iter().copied().cycle().take(16 * 4).collect();
    let mut model = AutoEncModel::new(&cfg).unwrap();
    model.train(&data, |_, _, _| Ok(())).unwrap();
    let energy: f64 = one.iter().map(|&v| (v as f64).powi(2)).sum();
    let recon = model.reconstruct(&one).unwrap();
    let err: f64 = one.iter().zip(&recon).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
    assert!(err < 1e-2 * energy, "{err} vs {energy}");
    let log = &model.log.epoch_losses;
    assert!(log.last().unwrap() < &log[0]);
}

#[test]
fn zero_windows_train_to_zero_loss_and_runs_repeat() {
    let mut cfg = tiny(6, 2, 4);
    cfg.schedule.epochs = 40;
    let zeros = vec![0.0f32; 8 * 12];
    let mut model = AutoEncModel::new(&cfg).unwrap();
    model.train(&zeros, |_, _, _| Ok(())).unwrap();
    assert!(model.log.final_loss().unwrap() < 1e-4, "{:?}", model.log);

    let data = random_windows(10, &cfg, 9);
    let run = || {
        let mut m = AutoEncModel::new(&cfg).unwrap();
        m.train(&data, |_, _, _| Ok(())).unwrap();
        m
    };
    let (a, b) = (run(), run());
    assert_eq!(a.params, b.params);
    assert_eq!(a.log, b.log);
    let mut m = AutoEncModel::new(&cfg).unwrap();
    assert!(matches!(m.train(&[], |_, _, _| Ok(())), Err(Error::Contract(_))));
}

#[test]
fn non_finite_input_is_a_training_fault() {
    let cfg = tiny(6, 2, 4);
    let mut data = random_windows(4, &cfg, 1);
    data[3] = f32::NAN;
    let mut m = AutoEncModel::new(&cfg).unwrap();
    let before = m.params.clone();
    assert!(matches!(m.train(&data, |_, _, _| Ok(())), Err(Error::TrainingFault(_))));
    assert_eq!(m.params, before);
}
