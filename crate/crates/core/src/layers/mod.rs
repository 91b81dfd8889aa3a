//! Neural building blocks: 1D convolution and its transpose, LSTM cells,
//! bidirectional LSTM layers, dense layers and dropout.

mod conv;
mod dense;
mod lstm;

pub use conv::{Conv1d, ConvTranspose1d, Padding};
pub use dense::{Dense, Dropout, DropoutMode};
pub use lstm::{BiLstm, BiLstmStates, LstmCell, SeqInput};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::{ParamId, ParamStore, Scalar};

/// A layer owning parameters inside a [`ParamStore`].
pub trait Layer {
    fn param_ids(&self) -> Vec<ParamId>;

    /// Glorot-uniform weights and zero biases (LSTM forget-gate bias 1).
    fn init_parameters<S: Scalar>(&self, store: &mut ParamStore<S>, rng: &mut ChaCha8Rng);
}

/// Initializes one layer from a fresh generator seeded with `seed`.
pub fn init_parameters<S: Scalar, L: Layer>(layer: &L, store: &mut ParamStore<S>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    layer.init_parameters(store, &mut rng);
}

pub(crate) fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub(crate) fn fill_uniform<S: Scalar>(data: &mut [S], limit: f64, rng: &mut ChaCha8Rng) {
    for x in data.iter_mut() {
        *x = S::of(rng.random_range(-limit..=limit));
    }
}

pub(crate) fn fill<S: Scalar>(data: &mut [S], v: f64) {
    data.iter_mut().for_each(|x| *x = S::of(v));
}
