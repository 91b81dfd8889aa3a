use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{fill, fill_uniform, glorot_limit, Layer};
use crate::error::{Error, Result};
use crate::nn::{Graph, ParamId, ParamStore, Scalar, Tensor, Var};

/// Affine map `x W + b` with `W: [in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, inputs: usize, outputs: usize) -> Result<Self> {
        let weight = store.add(format!("{name}.weight"), Tensor::zeros(&[inputs, outputs]))?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[outputs]))?;
        Ok(Self {
            inputs,
            outputs,
            weight,
            bias,
        })
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, store: &ParamStore<S>, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let y = g.matmul(x, w)?;
        g.add_bias(y, b)
    }
}

impl Layer for Dense {
    fn param_ids(&self) -> Vec<ParamId> {
        vec![self.weight, self.bias]
    }

    fn init_parameters<S: Scalar>(&self, store: &mut ParamStore<S>, rng: &mut ChaCha8Rng) {
        fill_uniform(
            store.get_mut(self.weight).data_mut(),
            glorot_limit(self.inputs, self.outputs),
            rng,
        );
        fill(store.get_mut(self.bias).data_mut(), 0.0);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Eval,
}

/// Inverted dropout: survivors are scaled by `1 / (1 - p)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dropout {
    p: f64,
}

impl Dropout {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::config(format!("dropout probability must be in [0, 1), got {p}")));
        }
        Ok(Self { p })
    }

    pub fn probability(&self) -> f64 {
        self.p
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, x: Var, mode: DropoutMode, rng: &mut ChaCha8Rng) -> Result<Var> {
        if mode == DropoutMode::Eval || self.p == 0.0 {
            return Ok(x);
        }
        let keep = S::of(1.0 / (1.0 - self.p));
        let mask = (0..g.value(x).len())
            .map(|_| if rng.random::<f64>() < self.p { S::zero() } else { keep })
            .collect();
        g.dropout_mask(x, mask)
    }
}
