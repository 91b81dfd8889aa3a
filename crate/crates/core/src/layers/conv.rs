use rand_chacha::ChaCha8Rng;

use super::{fill, fill_uniform, glorot_limit, Layer};
use crate::error::{Error, Result};
use crate::nn::{Graph, ParamId, ParamStore, Scalar, Tensor, Var};

/// Zero-padding policy along the time axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Output length `ceil(L / stride)`; with an odd pad total the extra zero goes right.
    Same,
    /// No padding; output length `(L - k) / stride + 1`.
    Valid,
}

/// Cross-correlation over time. Weights are `[kernel, in, out]`, bias `[out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: Padding,
    pub stride: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

fn geometry(kernel: usize, stride: usize, padding: Padding, len: usize) -> Result<(usize, usize)> {
    match padding {
        Padding::Same => {
            let out = len.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(len);
            Ok((out, total / 2))
        }
        Padding::Valid => {
            if len < kernel {
                return Err(Error::dim("conv1d (valid padding)", &[len], &[kernel]));
            }
            Ok(((len - kernel) / stride + 1, 0))
        }
    }
}

impl Conv1d {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: Padding,
        stride: usize,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 {
            return Err(Error::config(format!(
                "conv `{name}`: channels, kernel and stride must be positive"
            )));
        }
        let weight = store.add(format!("{name}.weight"), Tensor::zeros(&[kernel, in_channels, out_channels]))?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_channels]))?;
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            padding,
            stride,
            weight,
            bias,
        })
    }

    pub fn output_len(&self, len: usize) -> Result<usize> {
        geometry(self.kernel, self.stride, self.padding, len).map(|(out, _)| out)
    }

    /// `x: [B, L, in]` to `[B, L', out]`.
    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, store: &ParamStore<S>, x: Var) -> Result<Var> {
        let shape = g.shape(x);
        if shape.len() != 3 || shape[2] != self.in_channels {
            return Err(Error::dim("conv1d input", shape, &[self.in_channels]));
        }
        let (out_len, pad_left) = geometry(self.kernel, self.stride, self.padding, shape[1])?;
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.conv1d(x, w, b, self.stride, pad_left, out_len)
    }
}

impl Layer for Conv1d {
    fn param_ids(&self) -> Vec<ParamId> {
        vec![self.weight, self.bias]
    }

    fn init_parameters<S: Scalar>(&self, store: &mut ParamStore<S>, rng: &mut ChaCha8Rng) {
        let limit = glorot_limit(self.kernel * self.in_channels, self.kernel * self.out_channels);
        fill_uniform(store.get_mut(self.weight).data_mut(), limit, rng);
        fill(store.get_mut(self.bias).data_mut(), 0.0);
    }
}

/// Adjoint of a [`Conv1d`] in its input, restoring the convolution's input
/// shape. `in_channels`/`out_channels` keep the mirrored convolution's meaning:
/// this layer consumes `out_channels` features and produces `in_channels`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvTranspose1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: Padding,
    pub stride: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl ConvTranspose1d {
    pub fn mirror_of<S: Scalar>(store: &mut ParamStore<S>, name: &str, conv: &Conv1d) -> Result<Self> {
        let weight = store.add(
            format!("{name}.weight"),
            Tensor::zeros(&[conv.kernel, conv.in_channels, conv.out_channels]),
        )?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[conv.in_channels]))?;
        Ok(Self {
            in_channels: conv.in_channels,
            out_channels: conv.out_channels,
            kernel: conv.kernel,
            padding: conv.padding,
            stride: conv.stride,
            weight,
            bias,
        })
    }

    pub fn mirrors(&self, conv: &Conv1d) -> bool {
        self.in_channels == conv.in_channels
            && self.out_channels == conv.out_channels
            && self.kernel == conv.kernel
            && self.padding == conv.padding
            && self.stride == conv.stride
    }

    /// `y: [B, L', out]` to `[B, out_len, in]`, where `L'` must be what the
    /// mirrored convolution produces from `out_len` samples.
    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, store: &ParamStore<S>, y: Var, out_len: usize) -> Result<Var> {
        let shape = g.shape(y).to_vec();
        if shape.len() != 3 || shape[2] != self.out_channels {
            return Err(Error::dim("conv_transpose1d input", &shape, &[self.out_channels]));
        }
        let (conv_out, pad_left) = geometry(self.kernel, self.stride, self.padding, out_len)?;
        if conv_out != shape[1] {
            return Err(Error::config(format!(
                "transposed conv expects {conv_out} input steps for output length {out_len}, got {}",
                shape[1]
            )));
        }
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.conv_transpose1d(y, w, b, self.stride, pad_left, out_len)
    }
}

impl Layer for ConvTranspose1d {
    fn param_ids(&self) -> Vec<ParamId> {
        vec![self.weight, self.bias]
    }

    fn init_parameters<S: Scalar>(&self, store: &mut ParamStore<S>, rng: &mut ChaCha8Rng) {
        let limit = glorot_limit(self.kernel * self.out_channels, self.kernel * self.in_channels);
        fill_uniform(store.get_mut(self.weight).data_mut(), limit, rng);
        fill(store.get_mut(self.bias).data_mut(), 0.0);
    }
}
