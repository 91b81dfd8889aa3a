use std::collections::HashMap;

use super::kernels::{self, add_into, col_sums_add, gemm, gemm_strided, sigmoid, ConvGeom, Strided};
use super::{ParamId, ParamStore, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, S),
    AddBias(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Sum(Var),
    Mean(Var),
    Softmax(Var),
    Mse(Var, Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<S>,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
        batch: usize,
        out_ch: usize,
    },
    ConvTranspose1d {
        y: Var,
        w: Var,
        b: Var,
        /// Geometry of the forward convolution this operation is the adjoint of.
        geom: ConvGeom,
        batch: usize,
        in_ch: usize,
    },
    LstmStep {
        x: Option<Var>,
        state: Option<Var>,
        w: Var,
        b: Var,
        input: usize,
        hidden: usize,
        /// Activated gates per row, ordered input, forget, candidate, output.
        gates: Vec<S>,
        tanh_c: Vec<S>,
    },
    Concat {
        parts: Vec<(Var, usize, usize)>,
    },
    StackTime(Vec<Var>),
    SelectTime {
        x: Var,
        t: usize,
    },
    Dropout {
        x: Var,
        mask: Vec<S>,
    },
    Reshape(Var),
}

struct Node<S> {
    shape: Vec<usize>,
    value: Vec<S>,
    op: Op<S>,
    needs_grad: bool,
}

/// Tape of recorded operations. Record order is a topological order, and
/// [`Graph::backward`] walks it in exact reverse.
pub struct Graph<S: Scalar> {
    nodes: Vec<Node<S>>,
    grads: Vec<Option<Vec<S>>>,
    params: HashMap<ParamId, Var>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<S>, op: Op<S>, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &[S] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor<S> {
        Tensor::new(&self.nodes[v.0].shape, self.nodes[v.0].value.clone()).expect("node tensor")
    }

    pub fn scalar_value(&self, v: Var) -> S {
        self.nodes[v.0].value[0]
    }

    /// Gradient of the last backward pass with respect to a leaf.
    pub fn grad(&self, v: Var) -> Option<&[S]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Records a constant input that never receives a gradient.
    pub fn input(&mut self, t: &Tensor<S>) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, false)
    }

    pub fn input_vec(&mut self, shape: &[usize], data: Vec<S>) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dim("input", shape, &[data.len()]));
        }
        Ok(self.push(shape.to_vec(), data, Op::Leaf, false))
    }

    /// Records a leaf that receives a gradient on backward.
    pub fn variable(&mut self, t: &Tensor<S>) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, true)
    }

    /// Registers a parameter; repeated calls for the same id share one leaf so
    /// that contributions from every use accumulate.
    pub fn param(&mut self, store: &ParamStore<S>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.variable(store.get(id));
        self.params.insert(id, v);
        v
    }

    /// Adds this graph's parameter gradients into the store's gradient buffers.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore<S>) -> Result<()> {
        let mut ids: Vec<_> = self.params.iter().collect();
        ids.sort();
        for (&id, &v) in ids {
            if let Some(g) = self.grad(v) {
                store.get_mut(id).accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    fn check_same(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![S::zero(); m * n];
        gemm(m, k, n, S::one(), self.value(a), false, self.value(b), false, S::zero(), &mut out);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), ng))
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(S, S) -> S) -> Result<(Vec<S>, bool)> {
        self.check_same(op, a, b)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok((out, self.ng(a) || self.ng(b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, ng) = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(self.shape(a).to_vec(), out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, ng) = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(self.shape(a).to_vec(), out, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, ng) = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(self.shape(a).to_vec(), out, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, s: S) -> Var {
        let out = self.value(a).iter().map(|&x| x * s).collect();
        let ng = self.ng(a);
        self.push(self.shape(a).to_vec(), out, Op::Scale(a, s), ng)
    }

    /// Adds a bias vector to every row (the last axis must match its length).
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(b));
        if sb.len() != 1 || sx.last() != sb.first() {
            return Err(Error::dim("add_bias", sx, sb));
        }
        let mut out = self.value(x).to_vec();
        kernels::add_rows(&mut out, self.value(b));
        let ng = self.ng(x) || self.ng(b);
        Ok(self.push(self.shape(x).to_vec(), out, Op::AddBias(x, b), ng))
    }

    fn unary(&mut self, a: Var, f: impl Fn(S) -> S, op: Op<S>) -> Var {
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        let ng = self.ng(a);
        self.push(self.shape(a).to_vec(), out, op, ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.tanh(), Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > S::zero() { x } else { S::zero() }, Op::Relu(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().fold(0.0, |acc, x| acc + x.f64());
        let ng = self.ng(a);
        self.push(vec![1], vec![S::of(s)], Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.iter().fold(0.0, |acc, x| acc + x.f64()) / v.len() as f64;
        let ng = self.ng(a);
        self.push(vec![1], vec![S::of(s)], Op::Mean(a), ng)
    }

    /// Softmax along the last axis, with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let n = *self.shape(a).last().expect("non-empty shape");
        let mut out = self.value(a).to_vec();
        for row in out.chunks_exact_mut(n) {
            softmax_in_place(row)?;
        }
        let ng = self.ng(a);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Softmax(a), ng))
    }

    /// Mean over all elements of `(x - a)^2`.
    pub fn mse_loss(&mut self, x: Var, a: Var) -> Result<Var> {
        self.check_same("mse_loss", x, a)?;
        let (vx, va) = (self.value(x), self.value(a));
        let s = vx
            .iter()
            .zip(va)
            .fold(0.0, |acc, (&p, &q)| acc + (p - q).f64().powi(2));
        let mean = s / vx.len() as f64;
        let ng = self.ng(x) || self.ng(a);
        Ok(self.push(vec![1], vec![S::of(mean)], Op::Mse(x, a), ng))
    }

    /// Batch mean of `-log softmax(logits)[label]` using a fused log-sum-exp.
    pub fn cross_entropy_loss(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let shape = self.shape(logits);
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(Error::dim("cross_entropy_loss", shape, &[labels.len()]));
        }
        let classes = shape[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Label {
                label: bad,
                classes,
            });
        }
        let mut probs = self.value(logits).to_vec();
        let mut total = 0.0;
        for (row, &label) in probs.chunks_exact_mut(classes).zip(labels) {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, x| m.max(x.f64()));
            if !max.is_finite() || row.iter().any(|x| x.is_nan()) {
                return Err(Error::Numeric("non-finite logits".into()));
            }
            let lse = max + row.iter().map(|x| (x.f64() - max).exp()).sum::<f64>().ln();
            total += lse - row[label].f64();
            for p in row.iter_mut() {
                *p = S::of((p.f64() - lse).exp());
            }
        }
        let loss = total / labels.len() as f64;
        let ng = self.ng(logits);
        Ok(self.push(
            vec![1],
            vec![S::of(loss)],
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            ng,
        ))
    }

    /// Cross-correlation of `x: [B, L, Cin]` with `w: [k, Cin, Cout]` plus `b: [Cout]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad_left: usize, out_len: usize) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.len() != 3 || sw.len() != 3 || sw[1] != sx[2] || sb != [sw[2]] {
            return Err(Error::dim("conv1d", sx, sw));
        }
        let (batch, in_len, in_ch) = (sx[0], sx[1], sx[2]);
        let (kernel, out_ch) = (sw[0], sw[2]);
        let geom = ConvGeom {
            in_len,
            out_len,
            kernel,
            stride,
            pad_left,
            channels: in_ch,
        };
        let cols = self.im2col_batch(x, &geom, batch);
        let rows = batch * out_len;
        let mut out = vec![S::zero(); rows * out_ch];
        gemm(rows, geom.patch_width(), out_ch, S::one(), &cols, false, self.value(w), false, S::zero(), &mut out);
        kernels::add_rows(&mut out, self.value(b));
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        Ok(self.push(
            vec![batch, out_len, out_ch],
            out,
            Op::Conv1d {
                x,
                w,
                b,
                geom,
                batch,
                out_ch,
            },
            ng,
        ))
    }

    fn im2col_batch(&self, x: Var, geom: &ConvGeom, batch: usize) -> Vec<S> {
        let pw = geom.patch_width();
        let mut cols = vec![S::zero(); batch * geom.out_len * pw];
        let xs = self.value(x);
        let sample = geom.in_len * geom.channels;
        for bi in 0..batch {
            geom.im2col(
                &xs[bi * sample..(bi + 1) * sample],
                &mut cols[bi * geom.out_len * pw..(bi + 1) * geom.out_len * pw],
            );
        }
        cols
    }

    /// Adjoint of [`Graph::conv1d`] in its input: maps `y: [B, L', Cout]` back to
    /// `[B, L, Cin]` using the same `w: [k, Cin, Cout]`, then adds `b: [Cin]`.
    #[allow(clippy::too_many_arguments)]
    pub fn conv_transpose1d(
        &mut self,
        y: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad_left: usize,
        out_len: usize,
    ) -> Result<Var> {
        let (sy, sw, sb) = (self.shape(y), self.shape(w), self.shape(b));
        if sy.len() != 3 || sw.len() != 3 || sw[2] != sy[2] || sb != [sw[1]] {
            return Err(Error::dim("conv_transpose1d", sy, sw));
        }
        let (batch, in_len, in_ch) = (sy[0], sy[1], sy[2]);
        let (kernel, out_ch) = (sw[0], sw[1]);
        let geom = ConvGeom {
            in_len: out_len,
            out_len: in_len,
            kernel,
            stride,
            pad_left,
            channels: out_ch,
        };
        let pw = geom.patch_width();
        let rows = batch * in_len;
        let mut cols = vec![S::zero(); rows * pw];
        gemm(rows, in_ch, pw, S::one(), self.value(y), false, self.value(w), true, S::zero(), &mut cols);
        let sample = out_len * out_ch;
        let mut out = vec![S::zero(); batch * sample];
        for bi in 0..batch {
            geom.col2im_add(
                &cols[bi * in_len * pw..(bi + 1) * in_len * pw],
                &mut out[bi * sample..(bi + 1) * sample],
            );
        }
        kernels::add_rows(&mut out, self.value(b));
        let ng = self.ng(y) || self.ng(w) || self.ng(b);
        Ok(self.push(
            vec![batch, out_len, out_ch],
            out,
            Op::ConvTranspose1d {
                y,
                w,
                b,
                geom,
                batch,
                in_ch,
            },
            ng,
        ))
    }

    /// One fused LSTM step. `x: [B, in]` (absent means zero input), `state: [B, 2H]`
    /// holding `[h | c]` per row (absent means zero state), `w: [in + H, 4H]`,
    /// `b: [4H]`. Returns the next `[h | c]` state.
    pub fn lstm_step(&mut self, x: Option<Var>, state: Option<Var>, w: Var, b: Var) -> Result<Var> {
        let sw = self.shape(w).to_vec();
        if sw.len() != 2 || !sw[1].is_multiple_of(4) || self.shape(b) != [sw[1]] {
            return Err(Error::dim("lstm_step", &sw, self.shape(b)));
        }
        let hidden = sw[1] / 4;
        if sw[0] < hidden {
            return Err(Error::dim("lstm_step", &sw, &[hidden]));
        }
        let input = sw[0] - hidden;
        let batch = match (x, state) {
            (Some(x), _) => {
                let sx = self.shape(x);
                if sx.len() != 2 || sx[1] != input {
                    return Err(Error::dim("lstm_step input", sx, &[input]));
                }
                sx[0]
            }
            (None, Some(s)) => self.shape(s)[0],
            (None, None) => return Err(Error::contract("lstm_step needs an input or a state")),
        };
        if let Some(s) = state {
            if self.shape(s) != [batch, 2 * hidden] {
                return Err(Error::dim("lstm_step state", self.shape(s), &[batch, 2 * hidden]));
            }
        }
        let g4 = 4 * hidden;
        let wv = self.value(w);
        let mut z = vec![S::zero(); batch * g4];
        for row in z.chunks_exact_mut(g4) {
            row.copy_from_slice(self.value(b));
        }
        if let Some(x) = x {
            gemm(batch, input, g4, S::one(), self.value(x), false, &wv[..input * g4], false, S::one(), &mut z);
        }
        if let Some(s) = state {
            gemm_strided(
                batch,
                hidden,
                g4,
                S::one(),
                self.value(s),
                Strided::rows(2 * hidden),
                &wv[input * g4..],
                Strided::rows(g4),
                S::one(),
                &mut z,
                Strided::rows(g4),
            );
        }
        let mut out = vec![S::zero(); batch * 2 * hidden];
        let mut tanh_c = vec![S::zero(); batch * hidden];
        let prev = state.map(|s| self.value(s));
        for r in 0..batch {
            let zr = &mut z[r * g4..(r + 1) * g4];
            S::sigmoid_slice(&mut zr[..2 * hidden]);
            S::tanh_slice(&mut zr[2 * hidden..3 * hidden]);
            S::sigmoid_slice(&mut zr[3 * hidden..]);
            let out_r = &mut out[r * 2 * hidden..(r + 1) * 2 * hidden];
            let tc_r = &mut tanh_c[r * hidden..(r + 1) * hidden];
            for j in 0..hidden {
                let c_prev = prev.map_or(S::zero(), |p| p[r * 2 * hidden + hidden + j]);
                let c = zr[hidden + j] * c_prev + zr[j] * zr[2 * hidden + j];
                out_r[hidden + j] = c;
                tc_r[j] = c;
            }
            S::tanh_slice(tc_r);
            for j in 0..hidden {
                out_r[j] = zr[3 * hidden + j] * tc_r[j];
            }
        }
        let ng = x.is_some_and(|x| self.ng(x)) || state.is_some_and(|s| self.ng(s)) || self.ng(w) || self.ng(b);
        Ok(self.push(
            vec![batch, 2 * hidden],
            out,
            Op::LstmStep {
                x,
                state,
                w,
                b,
                input,
                hidden,
                gates: z,
                tanh_c,
            },
            ng,
        ))
    }

    /// Concatenates column ranges `(var, start, len)` of 2-D nodes with equal row counts.
    pub fn concat_cols(&mut self, parts: &[(Var, usize, usize)]) -> Result<Var> {
        let Some(&(first, _, _)) = parts.first() else {
            return Err(Error::contract("concat of zero parts"));
        };
        let rows = self.shape(first)[0];
        let mut width = 0;
        for &(v, start, len) in parts {
            let s = self.shape(v);
            if s.len() != 2 || s[0] != rows || start + len > s[1] || len == 0 {
                return Err(Error::dim("concat_cols", s, &[rows, start, len]));
            }
            width += len;
        }
        let mut out = vec![S::zero(); rows * width];
        let mut offset = 0;
        for &(v, start, len) in parts {
            let n = self.shape(v)[1];
            let src = self.value(v);
            for r in 0..rows {
                out[r * width + offset..r * width + offset + len]
                    .copy_from_slice(&src[r * n + start..r * n + start + len]);
            }
            offset += len;
        }
        let ng = parts.iter().any(|&(v, _, _)| self.ng(v));
        Ok(self.push(vec![rows, width], out, Op::Concat { parts: parts.to_vec() }, ng))
    }

    pub fn slice_cols(&mut self, v: Var, start: usize, len: usize) -> Result<Var> {
        self.concat_cols(&[(v, start, len)])
    }

    /// Stacks `T` nodes of shape `[B, F]` into `[B, T, F]`.
    pub fn stack_time(&mut self, steps: &[Var]) -> Result<Var> {
        let Some(&first) = steps.first() else {
            return Err(Error::contract("stack of empty sequence"));
        };
        let s0 = self.shape(first).to_vec();
        if s0.len() != 2 {
            return Err(Error::dim("stack_time", &s0, &[2]));
        }
        let (batch, feat, t_len) = (s0[0], s0[1], steps.len());
        let mut out = vec![S::zero(); batch * t_len * feat];
        for (t, &v) in steps.iter().enumerate() {
            if self.shape(v) != s0.as_slice() {
                return Err(Error::dim("stack_time", self.shape(v), &s0));
            }
            let src = self.value(v);
            for bi in 0..batch {
                out[(bi * t_len + t) * feat..(bi * t_len + t + 1) * feat]
                    .copy_from_slice(&src[bi * feat..(bi + 1) * feat]);
            }
        }
        let ng = steps.iter().any(|&v| self.ng(v));
        Ok(self.push(vec![batch, t_len, feat], out, Op::StackTime(steps.to_vec()), ng))
    }

    /// Extracts time step `t` of `[B, T, F]` as `[B, F]`.
    pub fn select_time(&mut self, x: Var, t: usize) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 3 || t >= s[1] {
            return Err(Error::dim("select_time", s, &[t]));
        }
        let (batch, t_len, feat) = (s[0], s[1], s[2]);
        let src = self.value(x);
        let mut out = Vec::with_capacity(batch * feat);
        for bi in 0..batch {
            out.extend_from_slice(&src[(bi * t_len + t) * feat..(bi * t_len + t + 1) * feat]);
        }
        let ng = self.ng(x);
        Ok(self.push(vec![batch, feat], out, Op::SelectTime { x, t }, ng))
    }

    /// Multiplies by a fixed mask (already carrying the inverted-dropout scale).
    pub fn dropout_mask(&mut self, x: Var, mask: Vec<S>) -> Result<Var> {
        if mask.len() != self.value(x).len() {
            return Err(Error::dim("dropout", self.shape(x), &[mask.len()]));
        }
        let out = self.value(x).iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        let ng = self.ng(x);
        Ok(self.push(self.shape(x).to_vec(), out, Op::Dropout { x, mask }, ng))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.value(x).len() {
            return Err(Error::dim("reshape", self.shape(x), shape));
        }
        let out = self.value(x).to_vec();
        let ng = self.ng(x);
        Ok(self.push(shape.to_vec(), out, Op::Reshape(x), ng))
    }

    /// Reverse-mode sweep from a scalar loss. Leaf gradients are retained and
    /// readable through [`Graph::grad`]; intermediate gradients are released as
    /// soon as they have been propagated.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.shape(loss).iter().product::<usize>() != 1 {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let nodes = &self.nodes;
        let mut grads: Vec<Option<Vec<S>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![S::one()]);

        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            propagate(nodes, &mut grads, node, &g);
        }
        self.grads = grads;
        Ok(())
    }
}

fn softmax_in_place<S: Scalar>(row: &mut [S]) -> Result<()> {
    let max = row.iter().fold(S::neg_infinity(), |m, &x| m.max(x));
    if !max.is_finite() || row.iter().any(|x| x.is_nan()) {
        return Err(Error::Numeric("non-finite softmax input".into()));
    }
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += x.f64();
    }
    let inv = S::of(1.0 / sum);
    row.iter_mut().for_each(|x| *x = *x * inv);
    Ok(())
}

/// Softmax of a plain vector, outside any graph.
pub fn softmax<S: Scalar>(x: &[S]) -> Result<Vec<S>> {
    if x.is_empty() {
        return Err(Error::contract("softmax of empty vector"));
    }
    let mut out = x.to_vec();
    softmax_in_place(&mut out)?;
    Ok(out)
}

fn slot<'a, S: Scalar>(grads: &'a mut [Option<Vec<S>>], nodes: &[Node<S>], v: Var) -> Option<&'a mut Vec<S>> {
    let node = &nodes[v.0];
    if !node.needs_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![S::zero(); node.value.len()]))
}

fn propagate<S: Scalar>(nodes: &[Node<S>], grads: &mut [Option<Vec<S>>], node: &Node<S>, g: &[S]) {
    let val = |v: Var| nodes[v.0].value.as_slice();
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = (nodes[a.0].shape[0], nodes[a.0].shape[1]);
            let n = nodes[b.0].shape[1];
            if let Some(ga) = slot(grads, nodes, *a) {
                gemm(m, n, k, S::one(), g, false, val(*b), true, S::one(), ga);
            }
            if let Some(gb) = slot(grads, nodes, *b) {
                gemm(k, m, n, S::one(), val(*a), true, g, false, S::one(), gb);
            }
        }
        Op::Add(a, b) => {
            if let Some(ga) = slot(grads, nodes, *a) {
                add_into(ga, g);
            }
            if let Some(gb) = slot(grads, nodes, *b) {
                add_into(gb, g);
            }
        }
        Op::Sub(a, b) => {
            if let Some(ga) = slot(grads, nodes, *a) {
                add_into(ga, g);
            }
            if let Some(gb) = slot(grads, nodes, *b) {
                gb.iter_mut().zip(g).for_each(|(d, &s)| *d = *d - s);
            }
        }
        Op::Mul(a, b) => {
            if let Some(ga) = slot(grads, nodes, *a) {
                for ((d, &s), &y) in ga.iter_mut().zip(g).zip(val(*b)) {
                    *d = *d + s * y;
                }
            }
            if let Some(gb) = slot(grads, nodes, *b) {
                for ((d, &s), &x) in gb.iter_mut().zip(g).zip(val(*a)) {
                    *d = *d + s * x;
                }
            }
        }
        Op::Scale(a, c) => {
            if let Some(ga) = slot(grads, nodes, *a) {
                ga.iter_mut().zip(g).for_each(|(d, &s)| *d = *d + s * *c);
            }
        }
        Op::AddBias(x, b) => {
            if let Some(gx) = slot(grads, nodes, *x) {
                add_into(gx, g);
            }
            if let Some(gb) = slot(grads, nodes, *b) {
                col_sums_add(g, gb);
            }
        }
        Op::Sigmoid(a) => {
            if let Some(ga) = slot(grads, nodes, *a) {
                for ((d, &s), &y) in ga.iter_mut().zip(g).zip(&node.value) {
                    *d = *d + s * y * (S::one() - y);
                }
            }
        }
        Op::Tanh(a) => {
            if let Some(ga) = slot(grads, nodes, *a) {
                for ((d, &s), &y) in ga.iter_mut().zip(g).zip(&node.value) {
                    *d = *d + s * (S::one() - y * y);
                }
            }
        }
        Op::Relu(a) => {
            if let Some(ga) = slot(grads, nodes, *a) {
                for ((d, &s), &x) in ga.iter_mut().zip(g).zip(val(*a)) {
                    if x > S::zero() {
                        *d = *d + s;
                    }
                }
            }
        }
        Op::Sum(a) => {
            if let Some(ga) = slot(grads, nodes, *a) {
                ga.iter_mut().for_each(|d| *d = *d + g[0]);
            }
        }
        Op::Mean(a) => {
            if let Some(ga) = slot(grads, nodes, *a) {
                let s = g[0] / S::of(ga.len() as f64);
                ga.iter_mut().for_each(|d| *d = *d + s);
            }
        }
        Op::Softmax(a) => {
            let n = *node.shape.last().expect("shape");
            if let Some(ga) = slot(grads, nodes, *a) {
                for ((gr, yr), dr) in g.chunks_exact(n).zip(node.value.chunks_exact(n)).zip(ga.chunks_exact_mut(n)) {
                    let dot = gr.iter().zip(yr).fold(S::zero(), |acc, (&p, &q)| acc + p * q);
                    for ((d, &s), &y) in dr.iter_mut().zip(gr).zip(yr) {
                        *d = *d + y * (s - dot);
                    }
                }
            }
        }
        Op::Mse(x, a) => {
            let n = S::of(val(*x).len() as f64);
            let two = S::of(2.0) * g[0] / n;
            if let Some(gx) = slot(grads, nodes, *x) {
                for ((d, &p), &q) in gx.iter_mut().zip(val(*x)).zip(val(*a)) {
                    *d = *d + two * (p - q);
                }
            }
            if let Some(ga) = slot(grads, nodes, *a) {
                for ((d, &p), &q) in ga.iter_mut().zip(val(*x)).zip(val(*a)) {
                    *d = *d + two * (q - p);
                }
            }
        }
        Op::CrossEntropy { logits, labels, probs } => {
            let classes = nodes[logits.0].shape[1];
            let s = g[0] / S::of(labels.len() as f64);
            if let Some(gl) = slot(grads, nodes, *logits) {
                for (r, &label) in labels.iter().enumerate() {
                    for c in 0..classes {
                        let onehot = if c == label { S::one() } else { S::zero() };
                        let d = &mut gl[r * classes + c];
                        *d = *d + s * (probs[r * classes + c] - onehot);
                    }
                }
            }
        }
        Op::Conv1d {
            x,
            w,
            b,
            geom,
            batch,
            out_ch,
        } => {
            let rows = batch * geom.out_len;
            let pw = geom.patch_width();
            if let Some(gb) = slot(grads, nodes, *b) {
                col_sums_add(g, gb);
            }
            if nodes[w.0].needs_grad {
                let mut cols = vec![S::zero(); rows * pw];
                let sample = geom.in_len * geom.channels;
                let xs = val(*x);
                for bi in 0..*batch {
                    geom.im2col(
                        &xs[bi * sample..(bi + 1) * sample],
                        &mut cols[bi * geom.out_len * pw..(bi + 1) * geom.out_len * pw],
                    );
                }
                let gw = slot(grads, nodes, *w).expect("needs grad");
                gemm(pw, rows, *out_ch, S::one(), &cols, true, g, false, S::one(), gw);
            }
            if let Some(gx) = slot(grads, nodes, *x) {
                let mut gcols = vec![S::zero(); rows * pw];
                gemm(rows, *out_ch, pw, S::one(), g, false, val(*w), true, S::zero(), &mut gcols);
                let sample = geom.in_len * geom.channels;
                for bi in 0..*batch {
                    geom.col2im_add(
                        &gcols[bi * geom.out_len * pw..(bi + 1) * geom.out_len * pw],
                        &mut gx[bi * sample..(bi + 1) * sample],
                    );
                }
            }
        }
        Op::ConvTranspose1d {
            y,
            w,
            b,
            geom,
            batch,
            in_ch,
        } => {
            if let Some(gb) = slot(grads, nodes, *b) {
                col_sums_add(g, gb);
            }
            let rows = batch * geom.out_len;
            let pw = geom.patch_width();
            let need_w = nodes[w.0].needs_grad;
            let need_y = nodes[y.0].needs_grad;
            if need_w || need_y {
                let mut gcols = vec![S::zero(); rows * pw];
                let sample = geom.in_len * geom.channels;
                for bi in 0..*batch {
                    geom.im2col(
                        &g[bi * sample..(bi + 1) * sample],
                        &mut gcols[bi * geom.out_len * pw..(bi + 1) * geom.out_len * pw],
                    );
                }
                if let Some(gy) = slot(grads, nodes, *y) {
                    gemm(rows, pw, *in_ch, S::one(), &gcols, false, val(*w), false, S::one(), gy);
                }
                if let Some(gw) = slot(grads, nodes, *w) {
                    gemm(pw, rows, *in_ch, S::one(), &gcols, true, val(*y), false, S::one(), gw);
                }
            }
        }
        Op::LstmStep {
            x,
            state,
            w,
            b,
            input,
            hidden,
            gates,
            tanh_c,
        } => {
            let (input, hidden) = (*input, *hidden);
            let g4 = 4 * hidden;
            let batch = node.shape[0];
            let prev = state.map(&val);
            let mut dz = vec![S::zero(); batch * g4];
            let mut dc_prev = vec![S::zero(); batch * hidden];
            for r in 0..batch {
                let gr = &gates[r * g4..(r + 1) * g4];
                for j in 0..hidden {
                    let (i, f, gg, o) = (gr[j], gr[hidden + j], gr[2 * hidden + j], gr[3 * hidden + j]);
                    let tc = tanh_c[r * hidden + j];
                    let gh = g[r * 2 * hidden + j];
                    let gc = g[r * 2 * hidden + hidden + j];
                    let c_prev = prev.map_or(S::zero(), |p| p[r * 2 * hidden + hidden + j]);
                    let dc = gc + gh * o * (S::one() - tc * tc);
                    let dzr = &mut dz[r * g4..(r + 1) * g4];
                    dzr[j] = dc * gg * i * (S::one() - i);
                    dzr[hidden + j] = dc * c_prev * f * (S::one() - f);
                    dzr[2 * hidden + j] = dc * i * (S::one() - gg * gg);
                    dzr[3 * hidden + j] = gh * tc * o * (S::one() - o);
                    dc_prev[r * hidden + j] = dc * f;
                }
            }
            if let Some(gb) = slot(grads, nodes, *b) {
                col_sums_add(&dz, gb);
            }
            if let Some(gw) = slot(grads, nodes, *w) {
                if let Some(x) = x {
                    gemm(input, batch, g4, S::one(), val(*x), true, &dz, false, S::one(), &mut gw[..input * g4]);
                }
                if let Some(p) = prev {
                    gemm_strided(
                        hidden,
                        batch,
                        g4,
                        S::one(),
                        p,
                        Strided::cols(2 * hidden),
                        &dz,
                        Strided::rows(g4),
                        S::one(),
                        &mut gw[input * g4..],
                        Strided::rows(g4),
                    );
                }
            }
            let wv = val(*w);
            if let Some(x) = x {
                if let Some(gx) = slot(grads, nodes, *x) {
                    gemm(batch, g4, input, S::one(), &dz, false, &wv[..input * g4], true, S::one(), gx);
                }
            }
            if let Some(s) = state {
                if let Some(gs) = slot(grads, nodes, *s) {
                    gemm_strided(
                        batch,
                        g4,
                        hidden,
                        S::one(),
                        &dz,
                        Strided::rows(g4),
                        &wv[input * g4..],
                        Strided::cols(g4),
                        S::one(),
                        gs,
                        Strided::rows(2 * hidden),
                    );
                    for r in 0..batch {
                        add_into(
                            &mut gs[r * 2 * hidden + hidden..(r + 1) * 2 * hidden],
                            &dc_prev[r * hidden..(r + 1) * hidden],
                        );
                    }
                }
            }
        }
        Op::Concat { parts } => {
            let rows = node.shape[0];
            let width = node.shape[1];
            let mut offset = 0;
            for &(v, start, len) in parts {
                let n = nodes[v.0].shape[1];
                if let Some(gv) = slot(grads, nodes, v) {
                    for r in 0..rows {
                        add_into(
                            &mut gv[r * n + start..r * n + start + len],
                            &g[r * width + offset..r * width + offset + len],
                        );
                    }
                }
                offset += len;
            }
        }
        Op::StackTime(steps) => {
            let (batch, t_len, feat) = (node.shape[0], node.shape[1], node.shape[2]);
            for (t, &v) in steps.iter().enumerate() {
                if let Some(gv) = slot(grads, nodes, v) {
                    for bi in 0..batch {
                        add_into(
                            &mut gv[bi * feat..(bi + 1) * feat],
                            &g[(bi * t_len + t) * feat..(bi * t_len + t + 1) * feat],
                        );
                    }
                }
            }
        }
        Op::SelectTime { x, t } => {
            let s = &nodes[x.0].shape;
            let (batch, t_len, feat) = (s[0], s[1], s[2]);
            if let Some(gx) = slot(grads, nodes, *x) {
                for bi in 0..batch {
                    add_into(
                        &mut gx[(bi * t_len + t) * feat..(bi * t_len + t + 1) * feat],
                        &g[bi * feat..(bi + 1) * feat],
                    );
                }
            }
        }
        Op::Dropout { x, mask } => {
            if let Some(gx) = slot(grads, nodes, *x) {
                for ((d, &s), &m) in gx.iter_mut().zip(g).zip(mask) {
                    *d = *d + s * m;
                }
            }
        }
        Op::Reshape(x) => {
            if let Some(gx) = slot(grads, nodes, *x) {
                add_into(gx, g);
            }
        }
    }
}
