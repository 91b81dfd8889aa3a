//! Convolutional bi-LSTM classifier naming the failed propeller set of a
//! fault-transition window.
//!
//! Three same-padded ReLU convolutions feed a stack of bi-LSTM layers; the
//! final outputs of both directions of the top layer pass through a tanh
//! dense layer and a softmax over the configured crash classes. Dropout
//! follows the convolutions and the recurrent stack.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{config_digest, Checkpoint, ModelKind};
use crate::flightsim::EXPERIMENTAL_CLASSES;
use crate::layers::{BiLstm, Conv1d, Dense, Dropout, DropoutMode, Layer, Padding, SeqInput};
use crate::nn::{softmax, AdamConfig, AdamState, Graph, ParamId, ParamStore, Scalar, Var};
use crate::train::{run_epoch, Schedule};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DclnnConfig {
    pub window: usize,
    pub channels: usize,
    pub filters: Vec<usize>,
    pub kernels: Vec<usize>,
    pub hidden: usize,
    pub lstm_layers: usize,
    pub dense: usize,
    /// Crash class of each output, in output order.
    pub classes: Vec<u8>,
    pub dropout: f64,
    pub schedule: Schedule,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for DclnnConfig {
    fn default() -> Self {
        DclnnConfig {
            window: 100,
            channels: 3,
            filters: vec![48, 64, 96],
            kernels: vec![5, 5, 3],
            hidden: 128,
            lstm_layers: 2,
            dense: 128,
            classes: (1..=15).collect(),
            dropout: 0.2,
            schedule: Schedule {
                epochs: 15,
                batch_size: 64,
                micro_batch: 64,
            },
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl DclnnConfig {
    /// The nine classes flown on hardware.
    pub fn experimental() -> Self {
        DclnnConfig {
            classes: EXPERIMENTAL_CLASSES.to_vec(),
            ..Self::default()
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.channels == 0 || self.hidden == 0 || self.lstm_layers == 0 || self.dense == 0 {
            return Err(Error::config("window, channels, hidden, dense and LSTM layers must be positive"));
        }
        if self.filters.is_empty() || self.filters.len() != self.kernels.len() {
            return Err(Error::config("filters and kernels must be non-empty lists of equal length"));
        }
        if self.filters.iter().chain(&self.kernels).any(|&v| v == 0) {
            return Err(Error::config("filters and kernels must be positive"));
        }
        if self.classes.len() < 2 {
            return Err(Error::config("the classifier needs at least two classes"));
        }
        let mut sorted = self.classes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.classes.len() {
            return Err(Error::config("duplicate crash class"));
        }
        Dropout::new(self.dropout)?;
        self.schedule.validate()
    }

    pub fn describe(&self) -> String {
        format!(
            "dclnn window={} channels={} filters={:?} kernels={:?} hidden={} lstm_layers={} dense={} classes={:?}",
            self.window,
            self.channels,
            self.filters,
            self.kernels,
            self.hidden,
            self.lstm_layers,
            self.dense,
            self.classes
        )
    }

    /// Output index of a crash class.
    pub fn class_index(&self, class: u8) -> Result<usize> {
        self.classes.iter().position(|&c| c == class).ok_or(Error::Label {
            label: class as usize,
            classes: self.classes.len(),
        })
    }
}

/// Layer layout of the classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct Dclnn {
    pub config: DclnnConfig,
    pub convs: Vec<Conv1d>,
    pub lstms: Vec<BiLstm>,
    pub hidden: Dense,
    pub output: Dense,
    pub dropout: Dropout,
}

impl Dclnn {
    pub fn build<S: Scalar>(config: &DclnnConfig, store: &mut ParamStore<S>) -> Result<Self> {
        config.validate()?;
        let mut convs = Vec::new();
        let mut width = config.channels;
        for (i, (&f, &k)) in config.filters.iter().zip(&config.kernels).enumerate() {
            convs.push(Conv1d::new(store, &format!("cls.conv{i}"), width, f, k, Padding::Same, 1)?);
            width = f;
        }
        let mut lstms = Vec::new();
        for i in 0..config.lstm_layers {
            lstms.push(BiLstm::new(store, &format!("cls.lstm{i}"), width, config.hidden)?);
            width = 2 * config.hidden;
        }
        let hidden = Dense::new(store, "cls.dense0", width, config.dense)?;
        let output = Dense::new(store, "cls.dense1", config.dense, config.num_classes())?;
        Ok(Dclnn {
            config: config.clone(),
            convs,
            lstms,
            hidden,
            output,
            dropout: Dropout::new(config.dropout)?,
        })
    }

    /// `x: [B, W, C]` to logits `[B, K]`.
    pub fn logits_graph<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        x: Var,
        mode: DropoutMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        let s = g.shape(x);
        if s.len() != 3 || s[1] != self.config.window || s[2] != self.config.channels {
            return Err(Error::dim("dclnn input", s, &[self.config.window, self.config.channels]));
        }
        let mut v = x;
        for conv in &self.convs {
            v = conv.forward(g, store, v)?;
            v = g.relu(v);
        }
        v = self.dropout.forward(g, v, mode, rng)?;
        let mut steps: Vec<Var> = (0..self.config.window).map(|t| g.select_time(v, t)).collect::<Result<_>>()?;
        let mut last = None;
        for (i, layer) in self.lstms.iter().enumerate() {
            let states = layer.forward(g, store, SeqInput::Steps(&steps), None)?;
            if i + 1 < self.lstms.len() {
                steps = states.outputs(g)?;
            } else {
                last = Some(states.final_outputs(g)?);
            }
        }
        let mut v = self.dropout.forward(g, last.expect("at least one LSTM layer"), mode, rng)?;
        v = self.hidden.forward(g, store, v)?;
        v = g.tanh(v);
        self.output.forward(g, store, v)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self.convs.iter().flat_map(|c| c.param_ids()).collect();
        ids.extend(self.lstms.iter().flat_map(|l| l.param_ids()));
        ids.extend(self.hidden.param_ids());
        ids.extend(self.output.param_ids());
        ids
    }

    pub fn init_parameters<S: Scalar>(&self, store: &mut ParamStore<S>, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for c in &self.convs {
            c.init_parameters(store, &mut rng);
        }
        for l in &self.lstms {
            l.init_parameters(store, &mut rng);
        }
        self.hidden.init_parameters(store, &mut rng);
        self.output.init_parameters(store, &mut rng);
    }
}

/// Metrics of one training epoch; test entries are `NaN` without a test set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DclnnLog {
    pub epochs: Vec<EpochMetrics>,
}

impl DclnnLog {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,test_loss,train_acc,test_acc\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{},{},{},{},{}", e.epoch, e.train_loss, e.test_loss, e.train_acc, e.test_acc);
        }
        s
    }
}

/// Counts with rows indexed by true class and columns by prediction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub classes: Vec<u8>,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: &[u8]) -> Self {
        ConfusionMatrix {
            classes: classes.to_vec(),
            counts: vec![0; classes.len() * classes.len()],
        }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        let k = self.classes.len();
        self.counts[truth * k + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes.len() + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.get(i, i)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.total() as f64
    }

    /// Header row of predicted classes; each row starts with its true class.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("truth\\predicted");
        for c in &self.classes {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
        for (i, c) in self.classes.iter().enumerate() {
            let _ = write!(s, "{c}");
            for j in 0..self.classes.len() {
                let _ = write!(s, ",{}", self.get(i, j));
            }
            s.push('\n');
        }
        s
    }
}

/// Argmax with the lowest index winning ties.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A trained classifier with its parameters.
#[derive(Clone, Debug)]
pub struct DclnnModel {
    pub net: Dclnn,
    pub params: ParamStore<f32>,
    pub log: DclnnLog,
}

impl DclnnModel {
    pub fn new(config: &DclnnConfig) -> Result<Self> {
        let mut params = ParamStore::new();
        let net = Dclnn::build(config, &mut params)?;
        net.init_parameters(&mut params, config.seed);
        Ok(DclnnModel {
            net,
            params,
            log: DclnnLog::default(),
        })
    }

    pub fn config(&self) -> &DclnnConfig {
        &self.net.config
    }

    pub fn digest(config: &DclnnConfig, channels: &[String]) -> [u8; 32] {
        config_digest(&config.describe(), channels)
    }

    pub fn to_checkpoint(&self, channels: &[String]) -> Checkpoint {
        Checkpoint::from_store(ModelKind::Dclnn, Self::digest(self.config(), channels), &self.params)
    }

    pub fn from_checkpoint(config: &DclnnConfig, channels: &[String], ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect(ModelKind::Dclnn, &Self::digest(config, channels))?;
        let mut model = Self::new(config)?;
        ckpt.restore_into(&mut model.params)?;
        Ok(model)
    }

    fn window_len(&self) -> usize {
        self.config().window * self.config().channels
    }

    fn check_windows(&self, values: &[f32]) -> Result<usize> {
        let n = self.window_len();
        if values.is_empty() || !values.len().is_multiple_of(n) {
            return Err(Error::dim(
                "dclnn windows",
                &[values.len()],
                &[self.config().window, self.config().channels],
            ));
        }
        Ok(values.len() / n)
    }

    /// Logits of stacked windows in eval mode, one row per window.
    fn logits(&self, windows: &[f32]) -> Result<Vec<Vec<f32>>> {
        let n = self.check_windows(windows)?;
        let per = self.window_len();
        let chunk = self.config().schedule.micro_batch;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut out = Vec::with_capacity(n);
        for start in (0..n).step_by(chunk) {
            let end = (start + chunk).min(n);
            let mut g = Graph::new();
            let x = g.input_vec(
                &[end - start, self.config().window, self.config().channels],
                windows[start * per..end * per].to_vec(),
            )?;
            let y = self.net.logits_graph(&mut g, &self.params, x, DropoutMode::Eval, &mut rng)?;
            out.extend(g.value(y).chunks_exact(self.config().num_classes()).map(<[f32]>::to_vec));
        }
        Ok(out)
    }

    /// Crash class and class probabilities (in `config.classes` order) of one window.
    pub fn predict(&self, window: &[f32]) -> Result<(u8, Vec<f32>)> {
        if window.len() != self.window_len() {
            return Err(Error::dim(
                "dclnn input",
                &[window.len()],
                &[self.config().window, self.config().channels],
            ));
        }
        Ok(self.predict_batch(window)?.remove(0))
    }

    pub fn predict_batch(&self, windows: &[f32]) -> Result<Vec<(u8, Vec<f32>)>> {
        self.logits(windows)?
            .into_iter()
            .map(|l| {
                let p = softmax(&l)?;
                Ok((self.config().classes[argmax(&p)], p))
            })
            .collect()
    }

    /// Accuracy and confusion matrix over labelled windows.
    pub fn evaluate(&self, windows: &[f32], labels: &[u8]) -> Result<(f64, ConfusionMatrix)> {
        if labels.is_empty() {
            return Err(Error::contract("evaluation set is empty"));
        }
        let (cm, _) = self.confusion_and_loss(windows, labels)?;
        Ok((cm.accuracy(), cm))
    }

    fn confusion_and_loss(&self, windows: &[f32], labels: &[u8]) -> Result<(ConfusionMatrix, f64)> {
        let logits = self.logits(windows)?;
        if logits.len() != labels.len() {
            return Err(Error::dim("dclnn labels", &[labels.len()], &[logits.len()]));
        }
        let mut cm = ConfusionMatrix::new(&self.config().classes);
        let mut loss = 0.0;
        for (l, &label) in logits.iter().zip(labels) {
            let truth = self.config().class_index(label)?;
            let p = softmax(l)?;
            loss -= (p[truth] as f64).max(1e-30).ln();
            cm.record(truth, argmax(&p));
        }
        Ok((cm, loss / labels.len() as f64))
    }

    /// Minibatch Adam on cross entropy. Training accuracy counts the dropout
    /// forward passes of the epoch; test metrics use eval mode.
    pub fn train(
        &mut self,
        windows: &[f32],
        labels: &[u8],
        test: Option<(&[f32], &[u8])>,
        mut on_epoch: impl FnMut(&EpochMetrics, &DclnnModel) -> Result<()>,
    ) -> Result<()> {
        if labels.is_empty() {
            return Err(Error::contract("classifier training set is empty"));
        }
        let n = self.check_windows(windows)?;
        if n != labels.len() {
            return Err(Error::dim("dclnn labels", &[labels.len()], &[n]));
        }
        let cfg = self.config().clone();
        let targets: Vec<usize> = labels.iter().map(|&l| cfg.class_index(l)).collect::<Result<_>>()?;
        if targets.iter().all(|&t| t == targets[0]) {
            return Err(Error::contract("classifier training needs at least two classes"));
        }
        let per = self.window_len();
        let mut adam = AdamState::new(&self.params, cfg.adam)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0002);
        for epoch in 1..=cfg.schedule.epochs {
            let net = &self.net;
            let mut correct = 0usize;
            let train_loss = run_epoch(&mut self.params, &mut adam, n, &cfg.schedule, &mut rng, |g, store, idx, rng| {
                let data: Vec<f32> = idx.iter().flat_map(|&i| windows[i * per..(i + 1) * per].iter().copied()).collect();
                let x = g.input_vec(&[idx.len(), cfg.window, cfg.channels], data)?;
                let logits = net.logits_graph(g, store, x, DropoutMode::Train, rng)?;
                let y: Vec<usize> = idx.iter().map(|&i| targets[i]).collect();
                let k = cfg.num_classes();
                for (row, &t) in g.value(logits).chunks_exact(k).zip(&y) {
                    correct += (argmax(row) == t) as usize;
                }
                g.cross_entropy_loss(logits, &y)
            })?;
            let (test_loss, test_acc) = match test {
                Some((tw, tl)) if !tl.is_empty() => {
                    let (cm, loss) = self.confusion_and_loss(tw, tl)?;
                    (loss, cm.accuracy())
                }
                _ => (f64::NAN, f64::NAN),
            };
            let m = EpochMetrics {
                epoch,
                train_loss,
                test_loss,
                train_acc: correct as f64 / n as f64,
                test_acc,
            };
            log::info!(
                "dclnn epoch {epoch} loss {train_loss:.4} acc {:.3} test loss {test_loss:.4} acc {test_acc:.3}",
                m.train_acc
            );
            self.log.epochs.push(m);
            on_epoch(&m, self)?;
        }
        Ok(())
    }
}
