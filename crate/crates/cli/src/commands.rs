//! The pipeline commands. Every command reads and writes inside one output
//! directory, so each stage finds its upstream artifacts by name.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use aeroguard_core::autoenc::{AutoEncConfig, AutoEncModel};
use aeroguard_core::checkpoint::Checkpoint;
use aeroguard_core::datapipe::{segment, label_windows, split_flights, Dataset, FlightTrace, NormalizationStats, WindowKind};
use aeroguard_core::dclnn::DclnnModel;
use aeroguard_core::flightsim::{campaign_threads, run_campaign};
use aeroguard_core::scorer::{detect, percentile, roc_auc, scores_csv, AnomalyScore, GaussianErrorModel};
use aeroguard_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Gate, RunConfig};
use crate::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.csv";
pub const TRACE_DIR: &str = "traces";
pub const SPLIT: &str = "split.csv";
pub const DETECTOR: &str = "detector.aegd";
pub const CLASSIFIER: &str = "classifier.aegd";

/// Settings and output directory shared by every command.
#[derive(Clone, Debug)]
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn require(&self, name: &str, producer: &'static str) -> CliResult<PathBuf> {
        let p = self.path(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(CliError::Missing { path: p, producer })
        }
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<()> {
        fs::write(self.path(name), contents).map_err(Error::from)?;
        Ok(())
    }

    /// Records the resolved configuration next to a command's outputs.
    fn log_config(&self, command: &str) -> CliResult<()> {
        fs::create_dir_all(&self.out).map_err(Error::from)?;
        self.write(&format!("{command}.config"), self.config.resolved())
    }
}

/// One successfully simulated flight.
pub struct Flight {
    pub run: usize,
    pub class: u8,
    pub trace: FlightTrace,
}

pub fn simulate(ctx: &Context) -> CliResult<()> {
    ctx.log_config("simulate")?;
    let cfg = &ctx.config;
    let sim = cfg.sim_config()?;
    let runs = cfg.usize("sim.runs")?;
    let classes = cfg.classes("sim.classes")?;
    let outcomes = run_campaign(&sim, runs, &classes, cfg.seed()?, campaign_threads())?;
    fs::create_dir_all(ctx.path(TRACE_DIR)).map_err(Error::from)?;
    let mut manifest = String::from("run,class,seed,status,detail\n");
    let mut failed = 0;
    for o in outcomes {
        match o.trace {
            Ok(trace) => {
                let file = format!("{TRACE_DIR}/run_{:04}.csv", o.index);
                trace.save(ctx.path(&file))?;
                let _ = writeln!(manifest, "{},{},{},ok,{file}", o.index, o.class, o.seed);
            }
            Err(e) => {
                failed += 1;
                let reason = e.to_string().replace([',', '\n'], ";");
                let _ = writeln!(manifest, "{},{},{},failed,{reason}", o.index, o.class, o.seed);
            }
        }
    }
    ctx.write(MANIFEST, manifest)?;
    log::info!("simulated {runs} runs, {failed} failed");
    Ok(())
}

pub fn load_flights(ctx: &Context) -> CliResult<Vec<Flight>> {
    let manifest = ctx.require(MANIFEST, "simulate")?;
    let text = fs::read_to_string(&manifest).map_err(Error::from)?;
    let mut flights = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Parse {
            line: i + 1,
            msg: format!("malformed manifest row `{line}`"),
        };
        if f.len() != 5 {
            return Err(bad().into());
        }
        if f[3] != "ok" {
            continue;
        }
        let trace = FlightTrace::load(ctx.require(f[4], "simulate")?)?;
        flights.push(Flight {
            run: f[0].parse().map_err(|_| bad())?,
            class: f[1].parse().map_err(|_| bad())?,
            trace,
        });
    }
    Ok(flights)
}

pub fn prepare(ctx: &Context) -> CliResult<()> {
    ctx.log_config("prepare")?;
    let cfg = &ctx.config;
    let flights = load_flights(ctx)?;
    let pairs: Vec<(usize, u8)> = flights.iter().map(|f| (f.run, f.class)).collect();
    let split = split_flights(&pairs, cfg.f64("data.split")?, cfg.seed()?)?;
    let train: BTreeSet<usize> = split.train.iter().copied().collect();
    let mut out = String::from("run,class,set\n");
    for f in &flights {
        let set = if train.contains(&f.run) { "train" } else { "test" };
        let _ = writeln!(out, "{},{},{set}", f.run, f.class);
    }
    ctx.write(SPLIT, out)?;

    let stride = cfg.usize("data.stride")?;
    let mut summary = String::from("set,flights,detector_normal,detector_transition,classifier_transition\n");
    for (name, runs) in [("train", &split.train), ("test", &split.test)] {
        let runs: BTreeSet<usize> = runs.iter().copied().collect();
        let det = windows(&flights, &runs, &cfg.names("detector.channels"), cfg.usize("detector.window")?, stride)?;
        let cls = windows(&flights, &runs, &cfg.names("classifier.channels"), cfg.usize("classifier.window")?, stride)?;
        let _ = writeln!(
            summary,
            "{name},{},{},{},{}",
            runs.len(),
            det.of_kind(WindowKind::Normal).len(),
            det.of_kind(WindowKind::Transition).len(),
            cls.of_kind(WindowKind::Transition).len()
        );
    }
    ctx.write("prepare.csv", summary)?;
    if !split.stratified {
        log::warn!("split is not stratified by class");
    }
    Ok(())
}

/// Train and test run ids written by `prepare`.
pub fn load_split(ctx: &Context) -> CliResult<(BTreeSet<usize>, BTreeSet<usize>)> {
    let text = fs::read_to_string(ctx.require(SPLIT, "prepare")?).map_err(Error::from)?;
    let (mut train, mut test) = (BTreeSet::new(), BTreeSet::new());
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let run = f.first().and_then(|r| r.parse().ok());
        match (run, f.get(2)) {
            (Some(run), Some(&"train")) => train.insert(run),
            (Some(run), Some(&"test")) => test.insert(run),
            _ => {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("malformed split row `{line}`"),
                }
                .into())
            }
        };
    }
    Ok((train, test))
}

/// Labelled windows of the selected runs; window flight ids are run ids.
pub fn windows(flights: &[Flight], runs: &BTreeSet<usize>, channels: &[String], window: usize, stride: usize) -> CliResult<Dataset> {
    let chosen: Vec<&Flight> = flights.iter().filter(|f| runs.contains(&f.run)).collect();
    let traces: Vec<FlightTrace> = chosen.iter().map(|f| f.trace.clone()).collect();
    let names: Vec<&str> = channels.iter().map(String::as_str).collect();
    let mut ds = Dataset::from_traces(&traces, &names, window, stride)?;
    for w in &mut ds.windows {
        w.flight = chosen[w.flight].run;
    }
    Ok(ds)
}

fn all_indices(ds: &Dataset) -> Vec<usize> {
    (0..ds.len()).collect()
}

/// Statistics rounded to the precision they are stored with.
fn stored_precision(mut stats: NormalizationStats) -> NormalizationStats {
    stats.mean.iter_mut().chain(stats.std.iter_mut()).for_each(|v| *v = *v as f32 as f64);
    stats
}

fn push_norm(ckpt: &mut Checkpoint, stats: &NormalizationStats) {
    let c = stats.channels.len();
    ckpt.push("norm.mean", &[c], stats.mean.iter().map(|&v| v as f32).collect());
    ckpt.push("norm.std", &[c], stats.std.iter().map(|&v| v as f32).collect());
}

fn read_norm(ckpt: &Checkpoint, channels: &[String]) -> CliResult<NormalizationStats> {
    let f64s = |name: &str| -> CliResult<Vec<f64>> { Ok(ckpt.get(name)?.data.iter().map(|&v| v as f64).collect()) };
    let (mean, std) = (f64s("norm.mean")?, f64s("norm.std")?);
    if mean.len() != channels.len() || std.len() != channels.len() {
        return Err(Error::Checkpoint("normalization entries do not match the channel set".into()).into());
    }
    Ok(NormalizationStats {
        channels: channels.to_vec(),
        mean,
        std,
    })
}

/// Autoencoder, input normalization, error model and threshold.
pub struct Detector {
    pub model: AutoEncModel,
    pub norm: NormalizationStats,
    pub gauss: GaussianErrorModel,
    pub threshold: f64,
}

impl Detector {
    /// Anomaly scores of raw stacked windows.
    pub fn scores(&self, raw: &[f32]) -> CliResult<Vec<f64>> {
        let mut x = raw.to_vec();
        self.norm.apply_values(&mut x)?;
        Ok(self.gauss.score_all(&self.model.reconstruction_errors(&x)?)?)
    }

    fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = self.model.to_checkpoint(&self.norm.channels);
        push_norm(&mut ckpt, &self.norm);
        let c = self.gauss.dim();
        let f32s = |v: &[f64]| v.iter().map(|&x| x as f32).collect();
        ckpt.push("gauss.mean", &[c], f32s(&self.gauss.mean));
        ckpt.push("gauss.cov", &[c, c], f32s(&self.gauss.covariance));
        ckpt.push("gauss.lambda", &[1], vec![self.gauss.lambda as f32]);
        ckpt.push("detect.threshold", &[1], vec![self.threshold as f32]);
        ckpt
    }

    fn from_checkpoint(cfg: &AutoEncConfig, channels: &[String], ckpt: &Checkpoint) -> CliResult<Self> {
        let model = AutoEncModel::from_checkpoint(cfg, channels, ckpt)?;
        let norm = read_norm(ckpt, channels)?;
        let f64s = |name: &str| -> CliResult<Vec<f64>> { Ok(ckpt.get(name)?.data.iter().map(|&v| v as f64).collect()) };
        let gauss = GaussianErrorModel::from_parts(f64s("gauss.mean")?, f64s("gauss.cov")?, f64s("gauss.lambda")?[0])?;
        let threshold = f64s("detect.threshold")?[0];
        Ok(Detector {
            model,
            norm,
            gauss,
            threshold,
        })
    }
}

pub fn load_detector(ctx: &Context) -> CliResult<Detector> {
    let ckpt = Checkpoint::load(ctx.require(DETECTOR, "train-detector")?)?;
    let cfg = &ctx.config;
    Detector::from_checkpoint(&cfg.autoenc_config()?, &cfg.names("detector.channels"), &ckpt)
}

pub fn train_detector(ctx: &Context) -> CliResult<()> {
    ctx.log_config("train-detector")?;
    let cfg = &ctx.config;
    let ae = cfg.autoenc_config()?;
    let channels = cfg.names("detector.channels");
    let flights = load_flights(ctx)?;
    let (train_runs, _) = load_split(ctx)?;
    let mut train = windows(&flights, &train_runs, &channels, ae.window, cfg.usize("data.stride")?)?.of_kind(WindowKind::Normal);
    let norm = stored_precision(NormalizationStats::fit(&train.windows, &channels)?);
    norm.apply(&mut train.windows)?;
    let x = train.stacked(&all_indices(&train));

    let mut model = AutoEncModel::new(&ae)?;
    let started = Instant::now();
    model.train(&x, |epoch, loss, _| {
        log::info!("detector epoch {epoch}/{} loss {loss:.6} ({:.0?})", ae.schedule.epochs, started.elapsed());
        Ok(())
    })?;
    let mut metrics = String::from("epoch,train_loss\n");
    for (i, l) in model.log.epoch_losses.iter().enumerate() {
        let _ = writeln!(metrics, "{},{l}", i + 1);
    }

    let errors = model.reconstruction_errors(&x)?;
    let fitted = GaussianErrorModel::fit(&errors, cfg.lambda()?)?;
    let round = |v: &[f64]| v.iter().map(|&x| x as f32 as f64).collect::<Vec<_>>();
    let gauss = GaussianErrorModel::from_parts(round(&fitted.mean), round(&fitted.covariance), fitted.lambda as f32 as f64)?;
    let train_scores = gauss.score_all(&errors)?;
    let threshold = percentile(&train_scores, cfg.f64("detector.percentile")?)? as f32 as f64;
    let detector = Detector {
        model,
        norm,
        gauss,
        threshold,
    };
    detector.to_checkpoint().save(ctx.path(DETECTOR))?;
    ctx.write("detector_metrics.csv", metrics)?;
    log::info!("detector threshold {threshold:.4} over {} training windows", train.len());
    Ok(())
}

pub fn score(ctx: &Context) -> CliResult<()> {
    ctx.log_config("score")?;
    let cfg = &ctx.config;
    let detector = load_detector(ctx)?;
    let flights = load_flights(ctx)?;
    let (_, test_runs) = load_split(ctx)?;
    let test = windows(
        &flights,
        &test_runs,
        &cfg.names("detector.channels"),
        detector.model.config().window,
        cfg.usize("data.stride")?,
    )?
    .filter(|w| matches!(w.kind, WindowKind::Normal | WindowKind::Transition));
    if test.is_empty() {
        return Err(Error::Contract("no held-out windows to score".into()).into());
    }
    let scores = detector.scores(&test.stacked(&all_indices(&test)))?;
    let labels: Vec<bool> = test.windows.iter().map(|w| w.kind == WindowKind::Transition).collect();
    let anomaly: Vec<AnomalyScore> = scores
        .iter()
        .zip(&labels)
        .enumerate()
        .map(|(i, (&score, &label))| AnomalyScore {
            window_id: i,
            score,
            label: Some(label),
        })
        .collect();
    ctx.write("scores.csv", scores_csv(&anomaly))?;
    let roc = roc_auc(&scores, &labels)?;
    ctx.write("roc.csv", roc.to_csv())?;
    let flagged = detect(&scores, detector.threshold);
    let count = |anomalous: bool, flag: bool| labels.iter().zip(&flagged).filter(|(&l, &f)| l == anomalous && (!flag || f)).count();
    ctx.write(
        "detection.csv",
        format!(
            "auc,threshold,normal_windows,transition_windows,flagged_normal,flagged_transition\n{},{},{},{},{},{}\n",
            roc.auc,
            detector.threshold,
            count(false, false),
            count(true, false),
            count(false, true),
            count(true, true)
        ),
    )?;
    log::info!("detection AUC {:.4}", roc.auc);
    Ok(())
}

fn labels_of(ds: &Dataset) -> Vec<u8> {
    ds.windows.iter().map(|w| w.label.unwrap_or(0)).collect()
}

pub fn train_classifier(ctx: &Context) -> CliResult<()> {
    ctx.log_config("train-classifier")?;
    let cfg = &ctx.config;
    let dc = cfg.dclnn_config()?;
    let channels = cfg.names("classifier.channels");
    let flights = load_flights(ctx)?;
    let (train_runs, test_runs) = load_split(ctx)?;
    let stride = cfg.usize("data.stride")?;
    let keep = |w: &aeroguard_core::datapipe::Window| w.kind == WindowKind::Transition && w.label.is_some_and(|l| dc.classes.contains(&l));
    let mut train = windows(&flights, &train_runs, &channels, dc.window, stride)?.filter(keep);
    let mut test = windows(&flights, &test_runs, &channels, dc.window, stride)?.filter(keep);
    if train.len() < 2 {
        return Err(Error::Contract("too few fault-transition windows to train the classifier".into()).into());
    }
    let norm = stored_precision(NormalizationStats::fit(&train.windows, &channels)?);
    norm.apply(&mut train.windows)?;
    norm.apply(&mut test.windows)?;
    let (x, y) = (train.stacked(&all_indices(&train)), labels_of(&train));
    let (tx, ty) = (test.stacked(&all_indices(&test)), labels_of(&test));
    let mut model = DclnnModel::new(&dc)?;
    let held_out = (!ty.is_empty()).then_some((tx.as_slice(), ty.as_slice()));
    model.train(&x, &y, held_out, |_, _| Ok(()))?;
    let mut ckpt = model.to_checkpoint(&channels);
    push_norm(&mut ckpt, &norm);
    ckpt.save(ctx.path(CLASSIFIER))?;
    ctx.write("classifier_metrics.csv", model.log.to_csv())?;
    Ok(())
}

/// Classifier with the normalization it was trained under.
pub struct Classifier {
    pub model: DclnnModel,
    pub norm: NormalizationStats,
}

pub fn load_classifier(ctx: &Context) -> CliResult<Classifier> {
    let ckpt = Checkpoint::load(ctx.require(CLASSIFIER, "train-classifier")?)?;
    let channels = ctx.config.names("classifier.channels");
    let model = DclnnModel::from_checkpoint(&ctx.config.dclnn_config()?, &channels, &ckpt)?;
    let norm = read_norm(&ckpt, &channels)?;
    Ok(Classifier { model, norm })
}

pub fn evaluate(ctx: &Context, pipeline: bool) -> CliResult<()> {
    ctx.log_config("evaluate")?;
    let cfg = &ctx.config;
    let classifier = load_classifier(ctx)?;
    let dc = classifier.model.config().clone();
    let channels = cfg.names("classifier.channels");
    let flights = load_flights(ctx)?;
    let (_, test_runs) = load_split(ctx)?;
    let stride = cfg.usize("data.stride")?;
    let mut test = windows(&flights, &test_runs, &channels, dc.window, stride)?
        .filter(|w| w.kind == WindowKind::Transition && w.label.is_some_and(|l| dc.classes.contains(&l)));
    if test.is_empty() {
        return Err(Error::Contract("no held-out fault-transition windows to evaluate".into()).into());
    }
    classifier.norm.apply(&mut test.windows)?;
    let (accuracy, cm) = classifier.model.evaluate(&test.stacked(&all_indices(&test)), &labels_of(&test))?;
    ctx.write(
        "accuracy.csv",
        format!("accuracy,windows,correct\n{accuracy},{},{}\n", cm.total(), cm.correct()),
    )?;
    ctx.write("confusion.csv", cm.to_csv())?;
    log::info!("identification accuracy {accuracy:.4} on {} windows", cm.total());
    if pipeline {
        run_pipeline(ctx, &classifier, &flights, &test_runs)?;
    }
    Ok(())
}

/// Detection gates identification: a classifier window reaches the
/// classifier when the largest anomaly score of the detector windows inside
/// it exceeds the threshold.
fn run_pipeline(ctx: &Context, classifier: &Classifier, flights: &[Flight], test_runs: &BTreeSet<usize>) -> CliResult<()> {
    let cfg = &ctx.config;
    let detector = load_detector(ctx)?;
    let (wc, wd) = (classifier.model.config().window, detector.model.config().window);
    let stride = cfg.usize("data.stride")?;
    if wd > wc {
        return Err(Error::Config("detector window is longer than classifier window".into()).into());
    }
    let threshold = match cfg.gate()? {
        Gate::Auto => Some(detector.threshold),
        Gate::Disabled => None,
        Gate::Fixed(t) => Some(t),
    };
    let det_names: Vec<&str> = detector.norm.channels.iter().map(String::as_str).collect();
    let cls_names: Vec<&str> = classifier.norm.channels.iter().map(String::as_str).collect();
    let mut rows = String::from("run,start,kind,truth,score,flagged,predicted\n");
    let (mut n_trans, mut n_norm, mut flag_trans, mut flag_norm, mut classified, mut correct) = (0, 0, 0, 0, 0, 0);
    for f in flights.iter().filter(|f| test_runs.contains(&f.run)) {
        let cls_trace = f.trace.select_channels(&cls_names)?;
        let det_trace = f.trace.select_channels(&det_names)?;
        let mut ws = segment(&cls_trace, wc, stride, f.run)?;
        label_windows(&mut ws, &cls_trace);
        ws.retain(|w| matches!(w.kind, WindowKind::Normal | WindowKind::Transition));
        if ws.is_empty() {
            continue;
        }
        let cd = det_trace.num_channels();
        let per = (wc - wd) / stride + 1;
        let mut raw = Vec::with_capacity(ws.len() * per * wd * cd);
        for w in &ws {
            for k in 0..per {
                let s = w.start + k * stride;
                raw.extend_from_slice(&det_trace.samples[s * cd..(s + wd) * cd]);
            }
        }
        let sub = detector.scores(&raw)?;
        let mut gated = Vec::new();
        let mut gate_scores = Vec::new();
        for i in 0..ws.len() {
            let s = sub[i * per..(i + 1) * per].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let flagged = threshold.is_none_or(|t| s > t);
            gate_scores.push((s, flagged));
            if flagged {
                gated.push(i);
            }
        }
        let mut x = Vec::with_capacity(gated.len() * wc * cls_trace.num_channels());
        for &i in &gated {
            x.extend_from_slice(&ws[i].values);
        }
        classifier.norm.apply_values(&mut x)?;
        let predictions = if gated.is_empty() { Vec::new() } else { classifier.model.predict_batch(&x)? };
        let mut next = predictions.iter();
        for (w, &(s, flagged)) in ws.iter().zip(&gate_scores) {
            let transition = w.kind == WindowKind::Transition;
            let predicted = if flagged { next.next().map(|p| p.0) } else { None };
            if transition {
                n_trans += 1;
                flag_trans += flagged as usize;
                correct += (predicted.is_some() && predicted == w.label) as usize;
            } else {
                n_norm += 1;
                flag_norm += flagged as usize;
            }
            classified += predicted.is_some() as usize;
            let _ = writeln!(
                rows,
                "{},{},{},{},{s},{},{}",
                f.run,
                w.start,
                if transition { "transition" } else { "normal" },
                w.label.unwrap_or(0),
                flagged as u8,
                predicted.map_or(String::new(), |p| p.to_string())
            );
        }
    }
    let rate = if n_trans > 0 { correct as f64 / n_trans as f64 } else { f64::NAN };
    ctx.write("pipeline_windows.csv", rows)?;
    ctx.write(
        "pipeline.csv",
        format!(
            "threshold,transition_windows,normal_windows,flagged_transition,flagged_normal,classified,correct,identification_rate\n{},{n_trans},{n_norm},{flag_trans},{flag_norm},{classified},{correct},{rate}\n",
            threshold.map_or("none".to_string(), |t| t.to_string())
        ),
    )?;
    Ok(())
}

/// Table rows: channel count and the axis subsets it stands for.
pub const PROFILE_SUBSETS: [(usize, &str); 3] = [(1, "x/y/z"), (2, "xy/yz/xz"), (3, "xyz")];

pub fn profile(ctx: &Context) -> CliResult<()> {
    ctx.log_config("profile")?;
    let cfg = &ctx.config;
    let window = cfg.usize("profile.window")?;
    let (runs, warmup) = (cfg.usize("profile.runs")?, cfg.usize("profile.warmup")?);
    if runs == 0 {
        return Err(Error::Config("profile.runs must be positive".into()).into());
    }
    let trained = match Checkpoint::load(ctx.path(DETECTOR)) {
        Ok(c) => Some(c),
        Err(_) => {
            log::warn!("no usable {DETECTOR}; profiling freshly initialized weights");
            None
        }
    };
    let mut table = String::from("channels,subset,window,runs,median_ms,p95_ms\n");
    for (channels, subset) in PROFILE_SUBSETS {
        let ae = AutoEncConfig {
            window,
            channels,
            ..cfg.autoenc_config()?
        };
        let names: Vec<String> = cfg.names("detector.channels").into_iter().take(channels).collect();
        let model = trained
            .as_ref()
            .and_then(|c| AutoEncModel::from_checkpoint(&ae, &names, c).ok())
            .map_or_else(|| AutoEncModel::new(&ae), Ok)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed()?);
        let x: Vec<f32> = (0..window * channels).map(|_| rng.random_range(-1.0..1.0)).collect();
        for _ in 0..warmup {
            model.reconstruction_error(&x)?;
        }
        let mut ms = Vec::with_capacity(runs);
        for _ in 0..runs {
            let t = Instant::now();
            std::hint::black_box(model.reconstruction_error(std::hint::black_box(&x))?);
            ms.push(t.elapsed().as_secs_f64() * 1e3);
        }
        let (median, p95) = (percentile(&ms, 50.0)?, percentile(&ms, 95.0)?);
        let _ = writeln!(table, "{channels},{channels} ({subset}),{window},{runs},{median:.3},{p95:.3}");
        log::info!("{channels} channel(s): median {median:.2} ms, p95 {p95:.2} ms");
    }
    ctx.write("profile.csv", table)?;
    Ok(())
}

/// Reads a one-row CSV written by a command into `(header, value)` pairs.
pub fn read_summary(path: &Path) -> CliResult<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(Error::from)?;
    let mut lines = text.lines();
    let (head, row) = (lines.next().unwrap_or(""), lines.next().unwrap_or(""));
    Ok(head.split(',').map(str::to_string).zip(row.split(',').map(str::to_string)).collect())
}
