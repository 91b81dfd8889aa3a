//! Minibatch training loop shared by both networks.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::nn::{AdamState, Graph, ParamStore, Scalar, Var};
use crate::{Error, Result};

/// Optimizer schedule common to both networks.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub epochs: usize,
    pub batch_size: usize,
    /// Windows per forward graph; gradients of a batch accumulate across them.
    pub micro_batch: usize,
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.micro_batch == 0 {
            return Err(Error::config("epochs, batch size and micro-batch must be positive"));
        }
        Ok(())
    }
}

/// Runs one shuffled pass over `n` samples and returns the sample-weighted mean loss.
///
/// `loss` builds the mean loss of the given sample indices. Each micro-batch
/// loss is weighted by its share of the batch so the accumulated gradient is
/// the batch mean. A non-finite loss aborts before the optimizer step, leaving
/// the parameters at their last good values.
pub fn run_epoch<S: Scalar>(
    store: &mut ParamStore<S>,
    adam: &mut AdamState<S>,
    n: usize,
    schedule: &Schedule,
    rng: &mut ChaCha8Rng,
    mut loss: impl FnMut(&mut Graph<S>, &ParamStore<S>, &[usize], &mut ChaCha8Rng) -> Result<Var>,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::contract("training on an empty dataset"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    for batch in order.chunks(schedule.batch_size) {
        store.zero_grads();
        let mut batch_loss = 0.0;
        for micro in batch.chunks(schedule.micro_batch) {
            let mut g = Graph::new();
            let l = loss(&mut g, store, micro, rng)?;
            let value = g.scalar_value(l).f64();
            if !value.is_finite() {
                return Err(Error::TrainingFault(format!("non-finite loss {value}")));
            }
            let weighted = g.scale(l, S::of(micro.len() as f64 / batch.len() as f64));
            g.backward(weighted)?;
            g.accumulate_param_grads(store)?;
            batch_loss += value * micro.len() as f64;
        }
        if !store.grads_finite() {
            return Err(Error::TrainingFault("non-finite gradient".into()));
        }
        adam.step(store)?;
        if !store.all_finite() {
            return Err(Error::TrainingFault("non-finite parameters after update".into()));
        }
        total += batch_loss;
    }
    Ok(total / n as f64)
}

/// Least-squares slope of `values` against their index.
pub fn trend_slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mx = (n - 1.0) / 2.0;
    let my = values.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, y) in values.iter().enumerate() {
        let dx = i as f64 - mx;
        num += dx * (y - my);
        den += dx * dx;
    }
    num / den
}
