//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance` runs all ten; pass numbers to run a subset,
//! e.g. `cargo test --test acceptance -- 3 8 10`.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use aeroguard_cli::commands::{self, read_summary, Context};
use aeroguard_cli::config::RunConfig;
use aeroguard_core::autoenc::{AutoEncConfig, AutoEncoder};
use aeroguard_core::datapipe::{segment, split_flights, window_count, FlightTrace, Phase};
use aeroguard_core::dclnn::{Dclnn, DclnnConfig};
use aeroguard_core::flightsim::{
    accelerations, simulate_run, step_dynamics, Gains, HoverController, QuadParams, QuadState, Setpoint, SimConfig, Vec3,
};
use aeroguard_core::layers::{BiLstm, Conv1d, ConvTranspose1d, Dense, Dropout, DropoutMode, Padding, SeqInput};
use aeroguard_core::nn::{gradient_check, Graph, ParamStore, Tensor};
use aeroguard_core::scorer::{roc_auc, GaussianErrorModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(budget: Duration, started: Instant, detail: String) -> Check {
    let took = started.elapsed();
    let detail = format!("{detail}; {:.0}s of {}s budget", took.as_secs_f64(), budget.as_secs());
    ensure(took < budget, detail)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn randomize(store: &mut ParamStore<f64>, seed: u64) {
    let mut r = rng(seed);
    for p in store.iter_mut() {
        p.tensor.data_mut().iter_mut().for_each(|x| *x = r.random_range(-1.0..1.0));
    }
}

fn random_tensor(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| r.random_range(-1.0..1.0))
}

// ---------------------------------------------------------------- 1

fn gradient_fidelity() -> Check {
    let started = Instant::now();
    let mut worst: Vec<(&str, f64)> = Vec::new();

    let mut store = ParamStore::new();
    let dense = Dense::new(&mut store, "dense", 4, 3).unwrap();
    randomize(&mut store, 1);
    let (x, t) = (random_tensor(&[5, 4], &mut rng(2)), random_tensor(&[5, 3], &mut rng(3)));
    let r = gradient_check(
        &mut store,
        |g, s| {
            let xv = g.input(&x);
            let y = dense.forward(g, s, xv)?;
            let y = g.tanh(y);
            let tv = g.input(&t);
            g.mse_loss(y, tv)
        },
        100,
        0,
    )
    .unwrap();
    worst.push(("dense", r.max_rel_error));

    for (name, padding, stride) in [("conv same", Padding::Same, 1), ("conv valid stride 2", Padding::Valid, 2)] {
        let mut store = ParamStore::new();
        let conv = Conv1d::new(&mut store, "c", 3, 4, 3, padding, stride).unwrap();
        randomize(&mut store, 4);
        let x = random_tensor(&[2, 9, 3], &mut rng(5));
        let r = gradient_check(
            &mut store,
            |g, s| {
                let xv = g.input(&x);
                let y = conv.forward(g, s, xv)?;
                let y = g.relu(y);
                let y2 = g.mul(y, y)?;
                Ok(g.sum(y2))
            },
            100,
            0,
        )
        .unwrap();
        worst.push((name, r.max_rel_error));
    }

    let mut store = ParamStore::new();
    let conv = Conv1d::new(&mut store, "c", 3, 4, 5, Padding::Same, 1).unwrap();
    let deconv = ConvTranspose1d::mirror_of(&mut store, "t", &conv).unwrap();
    randomize(&mut store, 6);
    let x = random_tensor(&[2, 6, 3], &mut rng(7));
    let r = gradient_check(
        &mut store,
        |g, s| {
            let xv = g.input(&x);
            let y = conv.forward(g, s, xv)?;
            let y = g.tanh(y);
            let back = deconv.forward(g, s, y, 6)?;
            g.mse_loss(back, xv)
        },
        100,
        0,
    )
    .unwrap();
    worst.push(("transposed conv", r.max_rel_error));

    let mut store = ParamStore::new();
    let enc = BiLstm::new(&mut store, "enc", 2, 3).unwrap();
    let dec = BiLstm::new(&mut store, "dec", 0, 3).unwrap();
    randomize(&mut store, 8);
    let x = random_tensor(&[2, 4, 2], &mut rng(9));
    let r = gradient_check(
        &mut store,
        |g, s| {
            let xv = g.input(&x);
            let steps: Vec<_> = (0..4).map(|t| g.select_time(xv, t)).collect::<Result<_, _>>()?;
            let states = enc.forward(g, s, SeqInput::Steps(&steps), None)?;
            let out = dec.forward(g, s, SeqInput::Zeros { steps: 4 }, Some(states.finals()))?;
            let steps = out.outputs(g)?;
            let seq = g.stack_time(&steps)?;
            let sq = g.mul(seq, seq)?;
            Ok(g.sum(sq))
        },
        60,
        1,
    )
    .unwrap();
    worst.push(("bi-lstm encoder/decoder", r.max_rel_error));

    let mut store = ParamStore::new();
    let dense = Dense::new(&mut store, "d", 6, 2).unwrap();
    let dropout = Dropout::new(0.3).unwrap();
    randomize(&mut store, 10);
    let x = random_tensor(&[4, 6], &mut rng(11));
    let r = gradient_check(
        &mut store,
        |g, s| {
            let mut r = rng(12);
            let xv = g.input(&x);
            let h = dropout.forward(g, xv, DropoutMode::Train, &mut r)?;
            let y = dense.forward(g, s, h)?;
            g.cross_entropy_loss(y, &[0, 1, 1, 0])
        },
        100,
        0,
    )
    .unwrap();
    worst.push(("dropout + softmax cross-entropy", r.max_rel_error));

    let ae = AutoEncConfig {
        window: 5,
        channels: 2,
        filters: vec![3, 3, 4],
        kernels: vec![3, 3, 1],
        hidden: 3,
        ..AutoEncConfig::default()
    };
    let mut store = ParamStore::<f64>::new();
    let net = AutoEncoder::build(&ae, &mut store).unwrap();
    randomize(&mut store, 13);
    let x = random_tensor(&[2, 5, 2], &mut rng(14));
    let r = gradient_check(
        &mut store,
        |g, s| {
            let xv = g.input(&x);
            let y = net.reconstruct_graph(g, s, xv)?;
            g.mse_loss(y, xv)
        },
        12,
        15,
    )
    .unwrap();
    worst.push(("autoencoder end to end", r.max_rel_error));

    let dc = DclnnConfig {
        window: 6,
        channels: 2,
        filters: vec![3, 3, 3],
        kernels: vec![3, 3, 1],
        hidden: 3,
        dense: 4,
        classes: vec![1, 2, 3],
        ..DclnnConfig::default()
    };
    let mut store = ParamStore::<f64>::new();
    let net = Dclnn::build(&dc, &mut store).unwrap();
    randomize(&mut store, 16);
    let x = random_tensor(&[3, 6, 2], &mut rng(17));
    let r = gradient_check(
        &mut store,
        |g, s| {
            let mut r = rng(18);
            let xv = g.input(&x);
            let logits = net.logits_graph(g, s, xv, DropoutMode::Train, &mut r)?;
            g.cross_entropy_loss(logits, &[2, 0, 1])
        },
        12,
        19,
    )
    .unwrap();
    worst.push(("classifier end to end", r.max_rel_error));

    let (name, max) = worst.iter().fold(("", 0.0f64), |a, &(n, e)| if e > a.1 { (n, e) } else { a });
    let failing: Vec<_> = worst.iter().filter(|(_, e)| *e >= 1e-4).map(|(n, _)| *n).collect();
    let ok = failing.is_empty();
    let detail = format!("{} components, max rel error {max:.2e} ({name})", worst.len());
    let detail = if ok { detail } else { format!("{detail}; failing: {failing:?}") };
    within(Duration::from_secs(120), started, detail).and_then(|d| ensure(ok, d))
}

// ---------------------------------------------------------------- 2

/// Cross-correlation with zero padding, `x: [L, Cin]`, `w: [k, Cin, Cout]`.
#[allow(clippy::too_many_arguments)]
fn conv_oracle(x: &[f64], len: usize, cin: usize, w: &[f64], k: usize, cout: usize, b: &[f64], stride: usize, pad: usize, out_len: usize) -> Vec<f64> {
    let mut out = vec![0.0; out_len * cout];
    for l in 0..out_len {
        for o in 0..cout {
            let mut acc = b[o];
            for j in 0..k {
                let p = (l * stride + j) as isize - pad as isize;
                if p < 0 || p >= len as isize {
                    continue;
                }
                for c in 0..cin {
                    acc += x[p as usize * cin + c] * w[(j * cin + c) * cout + o];
                }
            }
            out[l * cout + o] = acc;
        }
    }
    out
}

/// Scatter form of the transposed convolution, `y: [L', Cout]` to `[L, Cin]`.
#[allow(clippy::too_many_arguments)]
fn deconv_oracle(y: &[f64], ylen: usize, cout: usize, w: &[f64], k: usize, cin: usize, b: &[f64], stride: usize, pad: usize, len: usize) -> Vec<f64> {
    let mut out: Vec<f64> = (0..len * cin).map(|i| b[i % cin]).collect();
    for l in 0..ylen {
        for j in 0..k {
            let p = (l * stride + j) as isize - pad as isize;
            if p < 0 || p >= len as isize {
                continue;
            }
            for c in 0..cin {
                for o in 0..cout {
                    out[p as usize * cin + c] += y[l * cout + o] * w[(j * cin + c) * cout + o];
                }
            }
        }
    }
    out
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
fn inverse(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    let mut inv: Vec<f64> = (0..n * n).map(|i| if i / n == i % n { 1.0 } else { 0.0 }).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs())).unwrap();
        for k in 0..n {
            m.swap(col * n + k, piv * n + k);
            inv.swap(col * n + k, piv * n + k);
        }
        let d = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= d;
            inv[col * n + k] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r * n + col];
                for k in 0..n {
                    m[r * n + k] -= f * m[col * n + k];
                    inv[r * n + k] -= f * inv[col * n + k];
                }
            }
        }
    }
    inv
}

fn kernel_oracles() -> Check {
    let started = Instant::now();
    let mut r = rng(20);
    let (mut conv_err, mut deconv_err, mut adjoint_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let batch = r.random_range(1..=3);
        let (cin, cout, k, stride) = (r.random_range(1..=4), r.random_range(1..=4), r.random_range(1..=5), r.random_range(1..=3));
        let len = r.random_range(k..=20);
        let pad = r.random_range(0..k);
        let pad_right = r.random_range(0..k);
        let out_len = (len + pad + pad_right - k) / stride + 1;
        let vals = |n: usize, r: &mut ChaCha8Rng| (0..n).map(|_| r.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let (x, w, b, bt) = (vals(batch * len * cin, &mut r), vals(k * cin * cout, &mut r), vals(cout, &mut r), vals(cin, &mut r));
        let y = vals(batch * out_len * cout, &mut r);

        let mut g = Graph::<f64>::new();
        let xv = g.input_vec(&[batch, len, cin], x.clone()).unwrap();
        let wv = g.input_vec(&[k, cin, cout], w.clone()).unwrap();
        let bv = g.input_vec(&[cout], b.clone()).unwrap();
        let btv = g.input_vec(&[cin], bt.clone()).unwrap();
        let yv = g.input_vec(&[batch, out_len, cout], y.clone()).unwrap();
        let conv = g.conv1d(xv, wv, bv, stride, pad, out_len).unwrap();
        let deconv = g.conv_transpose1d(yv, wv, btv, stride, pad, len).unwrap();
        let zc = g.input_vec(&[cout], vec![0.0; cout]).unwrap();
        let zt = g.input_vec(&[cin], vec![0.0; cin]).unwrap();
        let conv0 = g.conv1d(xv, wv, zc, stride, pad, out_len).unwrap();
        let deconv0 = g.conv_transpose1d(yv, wv, zt, stride, pad, len).unwrap();

        for bi in 0..batch {
            let xs = &x[bi * len * cin..(bi + 1) * len * cin];
            let ys = &y[bi * out_len * cout..(bi + 1) * out_len * cout];
            let want = conv_oracle(xs, len, cin, &w, k, cout, &b, stride, pad, out_len);
            let got = &g.value(conv)[bi * out_len * cout..(bi + 1) * out_len * cout];
            conv_err = want.iter().zip(got).fold(conv_err, |m, (a, b)| m.max((a - b).abs()));
            let want = deconv_oracle(ys, out_len, cout, &w, k, cin, &bt, stride, pad, len);
            let got = &g.value(deconv)[bi * len * cin..(bi + 1) * len * cin];
            deconv_err = want.iter().zip(got).fold(deconv_err, |m, (a, b)| m.max((a - b).abs()));
        }
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let (lhs, rhs) = (dot(g.value(conv0), &y), dot(&x, g.value(deconv0)));
        adjoint_err = adjoint_err.max((lhs - rhs).abs() / lhs.abs().max(1.0));
    }

    let mut maha_err = 0.0f64;
    for case in 0..100 {
        let c = 1 + case % 8;
        let a: Vec<f64> = (0..c * c).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut sigma = vec![0.0; c * c];
        for i in 0..c {
            for j in 0..c {
                sigma[i * c + j] = (0..c).map(|k| a[i * c + k] * a[j * c + k]).sum::<f64>() + if i == j { 0.5 } else { 0.0 };
            }
        }
        let mean: Vec<f64> = (0..c).map(|_| r.random_range(-1.0..1.0)).collect();
        let e: Vec<f64> = (0..c).map(|_| r.random_range(-3.0..3.0)).collect();
        let model = GaussianErrorModel::from_parts(mean.clone(), sigma.clone(), 0.0).unwrap();
        let inv = inverse(&sigma, c);
        let d: Vec<f64> = e.iter().zip(&mean).map(|(x, m)| x - m).collect();
        let q: f64 = (0..c).map(|i| (0..c).map(|j| d[i] * inv[i * c + j] * d[j]).sum::<f64>()).sum();
        maha_err = maha_err.max((model.mahalanobis(&e).unwrap() - q.sqrt()).abs());
    }
    let ok = conv_err < 1e-6 && deconv_err < 1e-6 && adjoint_err < 1e-5 && maha_err < 1e-9;
    let detail = format!(
        "conv {conv_err:.1e}, transposed {deconv_err:.1e}, adjoint {adjoint_err:.1e} over 200 cases; mahalanobis {maha_err:.1e} over 100 SPD cases"
    );
    within(Duration::from_secs(60), started, detail).and_then(|d| ensure(ok, d))
}

// ---------------------------------------------------------------- 3

fn pipeline_arithmetic(s: &mut Shared) -> Check {
    let mut mismatches = 0;
    for len in 1..=300 {
        for window in [1, 7, 25, 100] {
            for stride in [1, 3, 10] {
                let want = if len < window { 0 } else { (len - window) / stride + 1 };
                mismatches += (window_count(len, window, stride) != want) as usize;
            }
        }
    }
    let trace = FlightTrace::new(100.0, vec!["a".into()], vec![0.0; 1000], vec![Phase::Hover; 1000], 0, 0).unwrap();
    let example = segment(&trace, 100, 10, 0).unwrap().len();

    let dir = s.campaign()?;
    let manifest = fs::read_to_string(dir.join("manifest.csv")).map_err(|e| e.to_string())?;
    let mut per_class: BTreeMap<u8, usize> = BTreeMap::new();
    for line in manifest.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[3] == "ok" {
            *per_class.entry(f[1].parse().unwrap()).or_default() += 1;
        }
    }
    let even = per_class.len() == 15 && per_class.values().all(|&n| n == 20);

    let thirty: Vec<(usize, u8)> = (0..30).map(|i| (i, 1 + (i % 15) as u8)).collect();
    let split = split_flights(&thirty, 0.7, 7).map_err(|e| e.to_string())?;
    let ok = mismatches == 0 && example == 91 && even && split.train.len() == 21 && split.test.len() == 9;
    ensure(
        ok,
        format!(
            "{mismatches} formula mismatches; T=1000 W=100 s=10 gives {example}; per-class traces {:?}; 30-run split {}/{}",
            per_class.values().collect::<Vec<_>>(),
            split.train.len(),
            split.test.len()
        ),
    )
}

// ---------------------------------------------------------------- 4

fn detection_quality(s: &mut Shared) -> Check {
    let (dir, took) = s.detector()?;
    let auc: f64 = summary_field(&dir.join("detection.csv"), "auc")?.parse().map_err(|_| "bad auc".to_string())?;
    let detail = format!("held-out AUC {auc:.4}; {:.0}s of 900s budget", took.as_secs_f64());
    ensure(auc >= 0.95 && took < Duration::from_secs(900), detail)
}

// ---------------------------------------------------------------- 5

fn identification_quality(s: &mut Shared) -> Check {
    let (dir, classifier_time) = s.classifier()?;
    let started = Instant::now();
    let full: f64 = summary_field(&dir.join("accuracy.csv"), "accuracy")?.parse().unwrap();

    let ablation = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut ctx = campaign_context(ablation.path());
    ctx.config.set("classifier.channels", "angvel_x").unwrap();
    run_stages(&ctx, &[Stage::Simulate, Stage::Prepare, Stage::TrainClassifier, Stage::Evaluate])?;
    let single: f64 = summary_field(&ablation.path().join("accuracy.csv"), "accuracy")?.parse().unwrap();
    let took = classifier_time + started.elapsed();
    let detail = format!(
        "3-channel accuracy {full:.4}, angvel_x-only accuracy {single:.4} (floor {:.4}); {:.0}s of 1800s budget",
        5.0 / 15.0,
        took.as_secs_f64()
    );
    ensure(full >= 0.90 && single >= 5.0 / 15.0 && took < Duration::from_secs(1800), detail)
}

// ---------------------------------------------------------------- 6

fn slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = y.iter().enumerate().map(|(i, v)| (i as f64 - mx) * (v - my)).sum();
    let var: f64 = (0..y.len()).map(|i| (i as f64 - mx).powi(2)).sum();
    cov / var
}

fn column(path: &Path, name: &str) -> Result<Vec<f64>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    let idx = lines.next().unwrap_or("").split(',').position(|h| h == name).ok_or(format!("no column {name}"))?;
    lines.map(|l| l.split(',').nth(idx).and_then(|v| v.parse().ok()).ok_or(format!("bad row {l}"))).collect()
}

fn training_dynamics(s: &mut Shared) -> Check {
    let (det, _) = s.detector()?;
    let ae = column(&det.join("detector_metrics.csv"), "train_loss")?;
    let (cls, _) = s.classifier()?;
    let dc = column(&cls.join("classifier_metrics.csv"), "train_loss")?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, l) in [("autoencoder", &ae), ("classifier", &dc)] {
        let (first, last, k) = (l[0], *l.last().unwrap(), slope(l));
        ok &= l.len() >= 2 && last < 0.5 * first && k <= 0.0;
        parts.push(format!("{name} {first:.4} -> {last:.4} over {} epochs, slope {k:.2e}", l.len()));
    }
    ensure(ok, parts.join("; "))
}

// ---------------------------------------------------------------- 7

fn aeroguard(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_aeroguard")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("aeroguard {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    files
}

const TINY: &str = "
sim.runs = 30
sim.classes = 1,2,3
detector.filters = 4,4,4
detector.hidden = 8
detector.epochs = 2
detector.batch_size = 64
detector.micro_batch = 64
classifier.classes = 1,2,3
classifier.filters = 4,4,4
classifier.hidden = 8
classifier.dense = 8
classifier.epochs = 2
profile.window = 25
profile.runs = 3
profile.warmup = 1
";

fn determinism() -> Check {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = root.path().join("run.conf");
    fs::write(&cfg, TINY).map_err(|e| e.to_string())?;
    let cfg = cfg.to_str().unwrap();
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let out = root.path().join(run);
        let out = out.to_str().unwrap();
        for cmd in ["simulate", "prepare", "train-detector", "score", "train-classifier", "evaluate", "profile"] {
            aeroguard(&[cmd, "--config", cfg, "--out", out, "--seed", "21"])?;
        }
        aeroguard(&["evaluate", "--pipeline", "--config", cfg, "--out", out, "--seed", "21"])?;
        let mut files = tree(Path::new(out));
        files.remove(Path::new("profile.csv"));
        trees.push(files);
    }
    let differing: Vec<_> = trees[0]
        .iter()
        .filter(|(p, bytes)| trees[1].get(*p) != Some(*bytes))
        .map(|(p, _)| p.display().to_string())
        .collect();
    let same_set = trees[0].keys().eq(trees[1].keys());
    ensure(
        differing.is_empty() && same_set,
        format!(
            "{} artifacts (traces, checkpoints, metrics) compared across two executions of every command; {} differ {:?}",
            trees[0].len(),
            differing.len(),
            differing
        ),
    )
}

// ---------------------------------------------------------------- 8

fn variance(v: &[f32]) -> f64 {
    let m = v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64;
    v.iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / v.len() as f64
}

fn simulator_physics() -> Check {
    let p = QuadParams::default();
    let home = Vec3::new(0.3, -0.7, 3.0);
    let mut st = QuadState::hovering(&p, home, 0.4);
    let mut ctl = HoverController::new(Gains::default());
    let sp = Setpoint {
        position: home,
        velocity: Vec3::zeros(),
        yaw: 0.4,
    };
    let mut drift: f64 = 0.0;
    for _ in 0..(5.0 * p.physics_hz) as usize {
        let cmd = ctl.command(&st, &sp, &p, p.dt());
        st = step_dynamics(&st, &cmd, &p, p.dt()).unwrap();
        drift = drift.max((st.position - home).norm());
    }

    let free = QuadParams { drag: 0.0, ..p.clone() };
    let mut st = QuadState::hovering(&free, Vec3::new(0.0, 0.0, 50.0), 0.0);
    st.rotor_speed = [0.0; 4];
    let mut fall_err = (accelerations(&st, &free).linear.z + 9.81).abs();
    let v0 = st.velocity.z;
    for _ in 0..1000 {
        st = step_dynamics(&st, &[0.0; 4], &free, free.dt()).unwrap();
    }
    fall_err = fall_err.max(((st.velocity.z - v0) / (1000.0 * free.dt()) + 9.81).abs());

    let mut weakest = f64::INFINITY;
    let cfg = SimConfig::default();
    for class in 1..=4u8 {
        let t = simulate_run(&cfg, class, 40 + class as u64).unwrap();
        let onset = t.transition().unwrap().start;
        for ch in ["acc_x", "acc_y", "acc_z", "angvel_x", "angvel_y", "angvel_z"] {
            let col = t.column(ch).unwrap();
            weakest = weakest.min(variance(&col[onset..]) / variance(&col[onset - 500..onset]));
        }
    }
    ensure(
        drift < 1e-6 && fall_err < 1e-9 && weakest > 10.0,
        format!("hover drift {drift:.1e} m over 5 s; free-fall error {fall_err:.1e} m/s^2; smallest post-fault/hover variance ratio {weakest:.1} over classes 1-4"),
    )
}

// ---------------------------------------------------------------- 9

fn latency() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ctx = Context {
        config: RunConfig::default(),
        out: dir.path().to_path_buf(),
    };
    commands::profile(&ctx).map_err(|e| e.to_string())?;
    let path = dir.path().join("profile.csv");
    let channels = column(&path, "channels")?;
    let median = column(&path, "median_ms")?;
    let monotone = median.windows(2).all(|w| w[0] <= 1.2 * w[1]);
    let ok = channels == [1.0, 2.0, 3.0] && median.iter().all(|&m| m < 500.0) && monotone;
    ensure(ok, format!("median ms for 1/2/3 channels at W=100: {median:?}"))
}

// ---------------------------------------------------------------- 10

fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut twice, mut p, mut n) = (0u64, 0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            p += 1;
            for (j, &lj) in labels.iter().enumerate() {
                if !lj {
                    twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                        std::cmp::Ordering::Greater => 2,
                        std::cmp::Ordering::Equal => 1,
                        std::cmp::Ordering::Less => 0,
                    };
                }
            }
        } else {
            n += 1;
        }
    }
    twice as f64 / (2 * p * n) as f64
}

fn roc_ok(scores: &[f64], labels: &[bool]) -> bool {
    let roc = roc_auc(scores, labels).unwrap();
    let pts = &roc.points;
    pts.first() == Some(&(0.0, 0.0))
        && pts.last() == Some(&(1.0, 1.0))
        && pts.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1)
        && roc.auc == pairwise_auc(scores, labels)
}

fn scorer_correctness() -> Check {
    let mut instances = 0u64;
    let mut bad = 0u64;
    let mut tally = |ok: bool| {
        instances += 1;
        bad += !ok as u64;
    };
    // Every labelling of n distinct scores, n <= 20.
    for n in 2..=20usize {
        let scores: Vec<f64> = (0..n).map(|i| i as f64).collect();
        for mask in 1..(1u32 << n) - 1 {
            let labels: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            tally(roc_ok(&scores, &labels));
        }
    }
    // Every labelling and every tie pattern over three score levels, n <= 8.
    for n in 2..=8usize {
        for code in 0..3usize.pow(n as u32) {
            let scores: Vec<f64> = (0..n).map(|i| (code / 3usize.pow(i as u32) % 3) as f64).collect();
            for mask in 1..(1u32 << n) - 1 {
                let labels: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
                tally(roc_ok(&scores, &labels));
            }
        }
    }
    // Random tie-heavy instances up to 20 windows.
    let mut r = rng(30);
    for _ in 0..20_000 {
        let n = r.random_range(2..=20);
        let levels = r.random_range(1..=n);
        let scores: Vec<f64> = (0..n).map(|_| r.random_range(0..levels) as f64 * 0.37).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        tally(roc_ok(&scores, &labels));
    }
    ensure(bad == 0, format!("{instances} instances, {bad} with a non-monotone curve, wrong endpoints or AUC != pairwise oracle"))
}

// ---------------------------------------------------------------- shared runs

#[derive(Clone, Copy)]
enum Stage {
    Simulate,
    Prepare,
    TrainDetector,
    Score,
    TrainClassifier,
    Evaluate,
}

fn run_stages(ctx: &Context, stages: &[Stage]) -> Result<(), String> {
    for s in stages {
        let r = match s {
            Stage::Simulate => commands::simulate(ctx),
            Stage::Prepare => commands::prepare(ctx),
            Stage::TrainDetector => commands::train_detector(ctx),
            Stage::Score => commands::score(ctx),
            Stage::TrainClassifier => commands::train_classifier(ctx),
            Stage::Evaluate => commands::evaluate(ctx, false),
        };
        r.map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn summary_field(path: &Path, name: &str) -> Result<String, String> {
    read_summary(path)
        .map_err(|e| e.to_string())?
        .into_iter()
        .find(|(k, _)| k == name)
        .map(|(_, v)| v)
        .ok_or(format!("{} has no `{name}`", path.display()))
}

/// The 300-run, 15-class campaign with the default classifier settings.
fn campaign_context(dir: &Path) -> Context {
    Context {
        config: RunConfig::parse("seed = 7\nsim.runs = 300\n").unwrap(),
        out: dir.to_path_buf(),
    }
}

#[derive(Default)]
struct Shared {
    campaign: Option<tempfile::TempDir>,
    classified: bool,
    classifier_time: Duration,
    detector: Option<(tempfile::TempDir, Duration)>,
}

impl Shared {
    fn campaign(&mut self) -> Result<PathBuf, String> {
        if self.campaign.is_none() {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            run_stages(&campaign_context(dir.path()), &[Stage::Simulate, Stage::Prepare])?;
            self.campaign = Some(dir);
        }
        Ok(self.campaign.as_ref().unwrap().path().to_path_buf())
    }

    fn classifier(&mut self) -> Result<(PathBuf, Duration), String> {
        if !self.classified {
            let started = Instant::now();
            let dir = self.campaign()?;
            run_stages(&campaign_context(&dir), &[Stage::TrainClassifier, Stage::Evaluate])?;
            self.classified = true;
            self.classifier_time = started.elapsed();
        }
        Ok((self.campaign()?, self.classifier_time))
    }

    /// Sixty flights, six IMU channels, ten training epochs.
    fn detector(&mut self) -> Result<(PathBuf, Duration), String> {
        if self.detector.is_none() {
            let started = Instant::now();
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let ctx = Context {
                config: RunConfig::parse("seed = 7\nsim.runs = 60\ndetector.epochs = 10\n").unwrap(),
                out: dir.path().to_path_buf(),
            };
            run_stages(&ctx, &[Stage::Simulate, Stage::Prepare, Stage::TrainDetector, Stage::Score])?;
            self.detector = Some((dir, started.elapsed()));
        }
        let (dir, took) = self.detector.as_ref().unwrap();
        Ok((dir.path().to_path_buf(), *took))
    }
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    type Criterion<'a> = (usize, &'a str, &'a dyn Fn(&mut Shared) -> Check);
    let criteria: [Criterion; 10] = [
        (1, "gradient fidelity", &|_| gradient_fidelity()),
        (2, "kernel oracles", &|_| kernel_oracles()),
        (3, "pipeline arithmetic", &pipeline_arithmetic),
        (4, "detection quality", &detection_quality),
        (5, "identification quality", &identification_quality),
        (6, "training dynamics", &training_dynamics),
        (7, "determinism", &|_| determinism()),
        (8, "simulator physics", &|_| simulator_physics()),
        (9, "latency harness", &|_| latency()),
        (10, "scorer correctness", &|_| scorer_correctness()),
    ];
    let mut shared = Shared::default();
    let mut failed = 0;
    for (n, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| check(&mut shared)))
            .unwrap_or_else(|p| Err(format!("panicked: {}", p.downcast_ref::<String>().cloned().unwrap_or_default())));
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n:>2} {tag}: {name}: {detail} [{:.1}s]", started.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
