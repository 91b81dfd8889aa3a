//! Convolutional bi-LSTM autoencoder for unsupervised fault detection.
//!
//! The encoder runs three same-padded ReLU convolutions and two bi-LSTM
//! layers; the final `(h, c)` states of both directions of the top layer form
//! the embedding. The decoder starts a zero-input bi-LSTM from that embedding,
//! narrows it with a second bi-LSTM to the width of the last convolution, and
//! undoes the convolutions with their transposes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{config_digest, Checkpoint, ModelKind};
use crate::layers::{BiLstm, Conv1d, ConvTranspose1d, Layer, Padding, SeqInput};
use crate::nn::{AdamConfig, AdamState, Graph, ParamId, ParamStore, Scalar, Var};
use crate::train::{run_epoch, Schedule};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AutoEncConfig {
    pub window: usize,
    pub channels: usize,
    pub filters: Vec<usize>,
    pub kernels: Vec<usize>,
    pub hidden: usize,
    pub lstm_layers: usize,
    pub schedule: Schedule,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for AutoEncConfig {
    fn default() -> Self {
        AutoEncConfig {
            window: 25,
            channels: 6,
            filters: vec![48, 64, 96],
            kernels: vec![5, 5, 3],
            hidden: 256,
            lstm_layers: 2,
            schedule: Schedule {
                epochs: 100,
                batch_size: 512,
                micro_batch: 128,
            },
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl AutoEncConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.channels == 0 || self.hidden == 0 || self.lstm_layers == 0 {
            return Err(Error::config("window, channels, hidden size and LSTM layers must be positive"));
        }
        if self.filters.is_empty() || self.filters.len() != self.kernels.len() {
            return Err(Error::config("filters and kernels must be non-empty lists of equal length"));
        }
        if self.filters.iter().chain(&self.kernels).any(|&v| v == 0) {
            return Err(Error::config("filters and kernels must be positive"));
        }
        if !self.filters[self.filters.len() - 1].is_multiple_of(2) {
            return Err(Error::config("the last filter count must be even"));
        }
        self.schedule.validate()
    }

    /// Canonical description hashed into checkpoints.
    pub fn describe(&self) -> String {
        format!(
            "autoenc window={} channels={} filters={:?} kernels={:?} hidden={} lstm_layers={}",
            self.window, self.channels, self.filters, self.kernels, self.hidden, self.lstm_layers
        )
    }

    pub fn embedding_len(&self) -> usize {
        4 * self.hidden
    }
}

/// Layer layout of an autoencoder; parameter values live in a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct AutoEncoder {
    pub config: AutoEncConfig,
    pub convs: Vec<Conv1d>,
    pub encoder: Vec<BiLstm>,
    pub decoder: Vec<BiLstm>,
    /// Mirrors of `convs`, in the same order; applied last to first.
    pub deconvs: Vec<ConvTranspose1d>,
}

impl AutoEncoder {
    pub fn build<S: Scalar>(config: &AutoEncConfig, store: &mut ParamStore<S>) -> Result<Self> {
        config.validate()?;
        let mut convs = Vec::new();
        let mut width = config.channels;
        for (i, (&f, &k)) in config.filters.iter().zip(&config.kernels).enumerate() {
            convs.push(Conv1d::new(store, &format!("enc.conv{i}"), width, f, k, Padding::Same, 1)?);
            width = f;
        }
        let mut encoder = Vec::new();
        for i in 0..config.lstm_layers {
            encoder.push(BiLstm::new(store, &format!("enc.lstm{i}"), width, config.hidden)?);
            width = 2 * config.hidden;
        }
        // decoder mirrors the encoder: a zero-input layer started from the
        // embedding, then layers ending at the last convolution's width
        let last = *config.filters.last().expect("validated");
        let depth = config.lstm_layers.max(2);
        let mut decoder = vec![BiLstm::new(store, "dec.lstm0", 0, config.hidden)?];
        for i in 1..depth {
            let hidden = if i + 1 == depth { last / 2 } else { config.hidden };
            decoder.push(BiLstm::new(store, &format!("dec.lstm{i}"), 2 * config.hidden, hidden)?);
        }
        let deconvs = convs
            .iter()
            .enumerate()
            .map(|(i, c)| ConvTranspose1d::mirror_of(store, &format!("dec.deconv{i}"), c))
            .collect::<Result<Vec<_>>>()?;
        Ok(AutoEncoder {
            config: config.clone(),
            convs,
            encoder,
            decoder,
            deconvs,
        })
    }

    fn check_input<S: Scalar>(&self, g: &Graph<S>, x: Var) -> Result<()> {
        let s = g.shape(x);
        if s.len() != 3 || s[1] != self.config.window || s[2] != self.config.channels {
            return Err(Error::dim("autoenc input", s, &[self.config.window, self.config.channels]));
        }
        Ok(())
    }

    /// `x: [B, W, C]` to the final `[h | c]` states of the top encoder layer,
    /// forward and backward, each `[B, 2H]`.
    pub fn encode_graph<S: Scalar>(&self, g: &mut Graph<S>, store: &ParamStore<S>, x: Var) -> Result<(Var, Var)> {
        self.check_input(g, x)?;
        let mut v = x;
        for conv in &self.convs {
            v = conv.forward(g, store, v)?;
            v = g.relu(v);
        }
        let mut steps: Vec<Var> = (0..self.config.window).map(|t| g.select_time(v, t)).collect::<Result<_>>()?;
        let mut finals = None;
        for (i, layer) in self.encoder.iter().enumerate() {
            let states = layer.forward(g, store, SeqInput::Steps(&steps), None)?;
            if i + 1 < self.encoder.len() {
                steps = states.outputs(g)?;
            } else {
                finals = Some(states.finals());
            }
        }
        Ok(finals.expect("at least one encoder layer"))
    }

    /// Embedding states to a `[B, W, C]` reconstruction.
    pub fn decode_graph<S: Scalar>(&self, g: &mut Graph<S>, store: &ParamStore<S>, embedding: (Var, Var)) -> Result<Var> {
        let two_h = 2 * self.config.hidden;
        for v in [embedding.0, embedding.1] {
            let s = g.shape(v);
            if s.len() != 2 || s[1] != two_h {
                return Err(Error::dim("autoenc embedding", s, &[two_h]));
            }
        }
        let w = self.config.window;
        let first = self.decoder[0].forward(g, store, SeqInput::Zeros { steps: w }, Some(embedding))?;
        let mut steps = first.outputs(g)?;
        for layer in &self.decoder[1..] {
            steps = layer.forward(g, store, SeqInput::Steps(&steps), None)?.outputs(g)?;
        }
        let mut v = g.stack_time(&steps)?;
        for (i, deconv) in self.deconvs.iter().enumerate().rev() {
            v = deconv.forward(g, store, v, w)?;
            if i > 0 {
                v = g.relu(v);
            }
        }
        Ok(v)
    }

    pub fn reconstruct_graph<S: Scalar>(&self, g: &mut Graph<S>, store: &ParamStore<S>, x: Var) -> Result<Var> {
        let e = self.encode_graph(g, store, x)?;
        self.decode_graph(g, store, e)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self.convs.iter().flat_map(|c| c.param_ids()).collect();
        ids.extend(self.encoder.iter().chain(&self.decoder).flat_map(|l| l.param_ids()));
        ids.extend(self.deconvs.iter().flat_map(|d| d.param_ids()));
        ids
    }

    pub fn init_parameters<S: Scalar>(&self, store: &mut ParamStore<S>, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for c in &self.convs {
            c.init_parameters(store, &mut rng);
        }
        for l in self.encoder.iter().chain(&self.decoder) {
            l.init_parameters(store, &mut rng);
        }
        for d in &self.deconvs {
            d.init_parameters(store, &mut rng);
        }
    }
}

/// Per-epoch mean reconstruction loss of a training run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub epoch_losses: Vec<f64>,
}

impl TrainingLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

/// A trained autoencoder with its parameters.
#[derive(Clone, Debug)]
pub struct AutoEncModel {
    pub net: AutoEncoder,
    pub params: ParamStore<f32>,
    pub log: TrainingLog,
}

impl AutoEncModel {
    /// Freshly initialized parameters.
    pub fn new(config: &AutoEncConfig) -> Result<Self> {
        let mut params = ParamStore::new();
        let net = AutoEncoder::build(config, &mut params)?;
        net.init_parameters(&mut params, config.seed);
        Ok(AutoEncModel {
            net,
            params,
            log: TrainingLog::default(),
        })
    }

    pub fn config(&self) -> &AutoEncConfig {
        &self.net.config
    }

    pub fn digest(config: &AutoEncConfig, channels: &[String]) -> [u8; 32] {
        config_digest(&config.describe(), channels)
    }

    /// Parameters tagged with the configuration and channel layout.
    pub fn to_checkpoint(&self, channels: &[String]) -> Checkpoint {
        Checkpoint::from_store(ModelKind::AutoEnc, Self::digest(self.config(), channels), &self.params)
    }

    /// Rebuilds a model; the checkpoint must match `config` and `channels`.
    pub fn from_checkpoint(config: &AutoEncConfig, channels: &[String], ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect(ModelKind::AutoEnc, &Self::digest(config, channels))?;
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
                "autoenc windows",
                &[values.len()],
                &[self.config().window, self.config().channels],
            ));
        }
        Ok(values.len() / n)
    }

    /// Embedding of one `W x C` window: `[h_f, c_f, h_b, c_b]`, `4H` values.
    pub fn encode(&self, window: &[f32]) -> Result<Vec<f32>> {
        if window.len() != self.window_len() {
            return Err(Error::dim(
                "autoenc input",
                &[window.len()],
                &[self.config().window, self.config().channels],
            ));
        }
        let mut g = Graph::new();
        let x = g.input_vec(&[1, self.config().window, self.config().channels], window.to_vec())?;
        let (f, b) = self.net.encode_graph(&mut g, &self.params, x)?;
        Ok(g.value(f).iter().chain(g.value(b)).copied().collect())
    }

    /// Reconstruction of a `4H` embedding as a row-major `W x C` window.
    pub fn decode(&self, embedding: &[f32]) -> Result<Vec<f32>> {
        let two_h = 2 * self.config().hidden;
        if embedding.len() != 2 * two_h {
            return Err(Error::dim("autoenc embedding", &[embedding.len()], &[2 * two_h]));
        }
        let mut g = Graph::new();
        let f = g.input_vec(&[1, two_h], embedding[..two_h].to_vec())?;
        let b = g.input_vec(&[1, two_h], embedding[two_h..].to_vec())?;
        let y = self.net.decode_graph(&mut g, &self.params, (f, b))?;
        Ok(g.value(y).to_vec())
    }

    /// Reconstructions of `N` stacked windows, evaluated in chunks.
    pub fn reconstruct(&self, windows: &[f32]) -> Result<Vec<f32>> {
        let n = self.check_windows(windows)?;
        let per = self.window_len();
        let mut out = Vec::with_capacity(windows.len());
        let chunk = self.config().schedule.micro_batch.max(1);
        for start in (0..n).step_by(chunk) {
            let end = (start + chunk).min(n);
            let mut g = Graph::new();
            let x = g.input_vec(
                &[end - start, self.config().window, self.config().channels],
                windows[start * per..end * per].to_vec(),
            )?;
            let y = self.net.reconstruct_graph(&mut g, &self.params, x)?;
            out.extend_from_slice(g.value(y));
        }
        Ok(out)
    }

    /// Per-channel mean squared reconstruction error, one length-`C` vector per window.
    pub fn reconstruction_errors(&self, windows: &[f32]) -> Result<Vec<Vec<f64>>> {
        let recon = self.reconstruct(windows)?;
        Ok(channel_mse(windows, &recon, self.config().window, self.config().channels))
    }

    pub fn reconstruction_error(&self, window: &[f32]) -> Result<Vec<f64>> {
        if window.len() != self.window_len() {
            return Err(Error::dim(
                "autoenc input",
                &[window.len()],
                &[self.config().window, self.config().channels],
            ));
        }
        Ok(self.reconstruction_errors(window)?.remove(0))
    }

    /// Minibatch Adam on the mean squared reconstruction loss over stacked
    /// windows. `on_epoch` sees the model after every completed epoch.
    pub fn train(&mut self, windows: &[f32], mut on_epoch: impl FnMut(usize, f64, &AutoEncModel) -> Result<()>) -> Result<()> {
        let n = self.check_windows(windows).map_err(|e| match windows.is_empty() {
            true => Error::contract("autoencoder training set is empty"),
            false => e,
        })?;
        let cfg = self.config().clone();
        let per = self.window_len();
        let mut adam = AdamState::new(&self.params, cfg.adam)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0001);
        for epoch in 0..cfg.schedule.epochs {
            let net = &self.net;
            let loss = run_epoch(&mut self.params, &mut adam, n, &cfg.schedule, &mut rng, |g, store, idx, _| {
                let data: Vec<f32> = idx.iter().flat_map(|&i| windows[i * per..(i + 1) * per].iter().copied()).collect();
                let x = g.input_vec(&[idx.len(), cfg.window, cfg.channels], data)?;
                let y = net.reconstruct_graph(g, store, x)?;
                g.mse_loss(y, x)
            })?;
            log::info!("autoenc epoch {} loss {loss:.6}", epoch + 1);
            self.log.epoch_losses.push(loss);
            on_epoch(epoch + 1, loss, self)?;
        }
        Ok(())
    }
}

/// Per-channel MSE between stacked windows and their reconstructions.
pub fn channel_mse(windows: &[f32], recon: &[f32], window: usize, channels: usize) -> Vec<Vec<f64>> {
    windows
        .chunks_exact(window * channels)
        .zip(recon.chunks_exact(window * channels))
        .map(|(x, y)| {
            let mut err = vec![0.0f64; channels];
            for (k, (&a, &b)) in x.iter().zip(y).enumerate() {
                let d = a as f64 - b as f64;
                err[k % channels] += d * d;
            }
            err.iter_mut().for_each(|e| *e /= window as f64);
            err
        })
        .collect()
}

#[cfg(test)]
mod tests;
