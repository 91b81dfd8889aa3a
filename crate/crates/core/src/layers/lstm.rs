use rand_chacha::ChaCha8Rng;

use super::{fill, fill_uniform, glorot_limit, Layer};
use crate::error::{Error, Result};
use crate::nn::{Graph, ParamId, ParamStore, Scalar, Tensor, Var};

/// LSTM cell without peepholes. Weights `[in + H, 4H]` stack the input rows
/// over the recurrent rows; gate columns are ordered input, forget, candidate,
/// output. States travel as one `[B, 2H]` node holding `[h | c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell {
    pub input_size: usize,
    pub hidden_size: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl LstmCell {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, input_size: usize, hidden_size: usize) -> Result<Self> {
        if hidden_size == 0 {
            return Err(Error::config(format!("lstm `{name}`: hidden size must be positive")));
        }
        let weight = store.add(
            format!("{name}.weight"),
            Tensor::zeros(&[input_size + hidden_size, 4 * hidden_size]),
        )?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[4 * hidden_size]))?;
        Ok(Self {
            input_size,
            hidden_size,
            weight,
            bias,
        })
    }

    /// Graph step; `None` input means zeros, `None` state means zero `h` and `c`.
    pub fn step<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        x: Option<Var>,
        state: Option<Var>,
    ) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.lstm_step(x, state, w, b)
    }

    /// Single-sample step on plain vectors, returning `(h_t, c_t)`.
    pub fn step_values<S: Scalar>(&self, store: &ParamStore<S>, x: &[S], h: &[S], c: &[S]) -> Result<(Vec<S>, Vec<S>)> {
        let hs = self.hidden_size;
        if x.len() != self.input_size || h.len() != hs || c.len() != hs {
            return Err(Error::dim("lstm_step", &[x.len(), h.len(), c.len()], &[self.input_size, hs, hs]));
        }
        let mut g = Graph::new();
        let xv = (self.input_size > 0)
            .then(|| g.input_vec(&[1, self.input_size], x.to_vec()))
            .transpose()?;
        let state = g.input_vec(&[1, 2 * hs], h.iter().chain(c).copied().collect())?;
        let out = self.step(&mut g, store, xv, Some(state))?;
        let v = g.value(out);
        Ok((v[..hs].to_vec(), v[hs..].to_vec()))
    }
}

impl Layer for LstmCell {
    fn param_ids(&self) -> Vec<ParamId> {
        vec![self.weight, self.bias]
    }

    fn init_parameters<S: Scalar>(&self, store: &mut ParamStore<S>, rng: &mut ChaCha8Rng) {
        let h = self.hidden_size;
        fill_uniform(
            store.get_mut(self.weight).data_mut(),
            glorot_limit(self.input_size + h, 4 * h),
            rng,
        );
        let bias = store.get_mut(self.bias).data_mut();
        fill(bias, 0.0);
        fill(&mut bias[h..2 * h], 1.0);
    }
}

/// Sequence fed to a [`BiLstm`].
#[derive(Clone, Copy, Debug)]
pub enum SeqInput<'a> {
    /// One `[B, F]` node per time step.
    Steps(&'a [Var]),
    /// All-zero input of the given length.
    Zeros { steps: usize },
}

impl SeqInput<'_> {
    fn len(&self) -> usize {
        match self {
            SeqInput::Steps(s) => s.len(),
            SeqInput::Zeros { steps } => *steps,
        }
    }

    fn at(&self, t: usize) -> Option<Var> {
        match self {
            SeqInput::Steps(s) => Some(s[t]),
            SeqInput::Zeros { .. } => None,
        }
    }
}

/// Per-step `[h | c]` states of both scan directions, indexed by time step.
#[derive(Clone, Debug)]
pub struct BiLstmStates {
    pub forward: Vec<Var>,
    pub backward: Vec<Var>,
    pub hidden: usize,
}

impl BiLstmStates {
    /// Final state of each direction: forward after step `T-1`, backward after step 0.
    pub fn finals(&self) -> (Var, Var) {
        (*self.forward.last().expect("non-empty"), self.backward[0])
    }

    /// Per-step outputs `[h_fwd(t) | h_bwd(t)]`, each `[B, 2H]`.
    pub fn outputs<S: Scalar>(&self, g: &mut Graph<S>) -> Result<Vec<Var>> {
        let h = self.hidden;
        self.forward
            .iter()
            .zip(&self.backward)
            .map(|(&f, &b)| g.concat_cols(&[(f, 0, h), (b, 0, h)]))
            .collect()
    }

    /// `[h_fwd(T-1) | h_bwd(0)]`.
    pub fn final_outputs<S: Scalar>(&self, g: &mut Graph<S>) -> Result<Var> {
        let (f, b) = self.finals();
        g.concat_cols(&[(f, 0, self.hidden), (b, 0, self.hidden)])
    }
}

/// Two LSTM cells scanning a sequence in opposite directions; outputs concatenate.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLstm {
    pub forward: LstmCell,
    pub backward: LstmCell,
}

impl BiLstm {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, input_size: usize, hidden_size: usize) -> Result<Self> {
        Ok(Self {
            forward: LstmCell::new(store, &format!("{name}.fwd"), input_size, hidden_size)?,
            backward: LstmCell::new(store, &format!("{name}.bwd"), input_size, hidden_size)?,
        })
    }

    pub fn input_size(&self) -> usize {
        self.forward.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.forward.hidden_size
    }

    pub fn output_size(&self) -> usize {
        2 * self.forward.hidden_size
    }

    /// Scans `seq` forward over `t = 0..T` and backward over `t = T-1..=0`,
    /// optionally starting each direction from a given `[B, 2H]` state.
    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        seq: SeqInput<'_>,
        init: Option<(Var, Var)>,
    ) -> Result<BiLstmStates> {
        let steps = seq.len();
        if steps == 0 {
            return Err(Error::contract("bi-LSTM over an empty sequence"));
        }
        if matches!(seq, SeqInput::Zeros { .. }) && init.is_none() {
            return Err(Error::contract("zero-input bi-LSTM needs initial states"));
        }
        let mut fwd = Vec::with_capacity(steps);
        let mut state = init.map(|(f, _)| f);
        for t in 0..steps {
            let s = self.forward.step(g, store, seq.at(t), state)?;
            fwd.push(s);
            state = Some(s);
        }
        let mut bwd = vec![fwd[0]; steps];
        let mut state = init.map(|(_, b)| b);
        for t in (0..steps).rev() {
            let s = self.backward.step(g, store, seq.at(t), state)?;
            bwd[t] = s;
            state = Some(s);
        }
        Ok(BiLstmStates {
            forward: fwd,
            backward: bwd,
            hidden: self.hidden_size(),
        })
    }

    /// Single-sequence evaluation on plain values: `seq: [T, F]` to outputs
    /// `[T, 2H]` and final `(h_f, c_f, h_b, c_b)`.
    #[allow(clippy::type_complexity)]
    pub fn run<S: Scalar>(&self, store: &ParamStore<S>, seq: &Tensor<S>) -> Result<(Tensor<S>, [Vec<S>; 4])> {
        let shape = seq.shape();
        if shape.len() != 2 || shape[1] != self.input_size() {
            return Err(Error::dim("bilstm input", shape, &[self.input_size()]));
        }
        let mut g = Graph::new();
        let x = g.input_vec(&[1, shape[0], shape[1]], seq.data().to_vec())?;
        let steps: Vec<Var> = (0..shape[0]).map(|t| g.select_time(x, t)).collect::<Result<_>>()?;
        let states = self.forward(&mut g, store, SeqInput::Steps(&steps), None)?;
        let outs = states.outputs(&mut g)?;
        let stacked = g.stack_time(&outs)?;
        let h = self.hidden_size();
        let (f, b) = states.finals();
        let (fv, bv) = (g.value(f), g.value(b));
        let finals = [fv[..h].to_vec(), fv[h..].to_vec(), bv[..h].to_vec(), bv[h..].to_vec()];
        Ok((g.tensor(stacked).reshape(&[shape[0], 2 * h])?, finals))
    }
}

impl Layer for BiLstm {
    fn param_ids(&self) -> Vec<ParamId> {
        let mut v = self.forward.param_ids();
        v.extend(self.backward.param_ids());
        v
    }

    fn init_parameters<S: Scalar>(&self, store: &mut ParamStore<S>, rng: &mut ChaCha8Rng) {
        self.forward.init_parameters(store, rng);
        self.backward.init_parameters(store, rng);
    }
}
