use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::nn::{self, lstm_preactivation};
use crate::numcore::{kernels, Ctx, ParamStore, Tensor, Var};

use super::basic::{Linear, LinearRef};

/// Forget-gate bias at initialization.
pub const FORGET_BIAS_INIT: f64 = 2.0;

/// LSTM with input weights `[d_in, 4h]`, recurrent weights `[h, 4h]` and
/// a shared bias `[4h]`; gate order `i, f, g, o`.
#[derive(Clone, Debug)]
pub struct Lstm {
    prefix: String,
    pub d_in: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(prefix: impl Into<String>, d_in: usize, hidden: usize) -> Self {
        Self { prefix: prefix.into(), d_in, hidden }
    }

    fn names(&self) -> [String; 3] {
        ["w_ih", "w_hh", "bias"].map(|s| format!("{}.{s}", self.prefix))
    }

    /// `4h(d_in + h + 1)`.
    pub fn param_count(&self) -> usize {
        4 * self.hidden * (self.d_in + self.hidden + 1)
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        let h = self.hidden;
        let bound = 1.0 / (h as f64).sqrt();
        let [w_ih, w_hh, bias] = self.names();
        store.insert(w_ih, Tensor::uniform(vec![self.d_in, 4 * h], bound, rng));
        store.insert(w_hh, Tensor::uniform(vec![h, 4 * h], bound, rng));
        store.insert(bias, Tensor::from_fn(vec![4 * h], |i| if (h..2 * h).contains(&i) { FORGET_BIAS_INIT } else { 0.0 }));
    }

    /// Input pre-activations `x·W_ih + b` for all positions.
    fn input_part<'g>(&self, cx: &Ctx<'g, '_>, x: Var<'g>) -> Result<Var<'g>> {
        let [w_ih, _, bias] = self.names();
        x.matmul(cx.param(&w_ih)?)?.add(cx.param(&bias)?)
    }

    /// Left-to-right scan from zero state; returns hidden states `[T, h]`.
    pub fn forward<'g>(&self, cx: &Ctx<'g, '_>, x: Var<'g>) -> Result<Var<'g>> {
        let zeros = cx.constant(Tensor::zeros(vec![self.hidden]));
        let states = self.scan(cx, x, zeros, zeros)?;
        states.slice_cols(0, self.hidden)
    }

    /// Scan from a given state; returns `[T, 2h]` (hidden then cell).
    pub fn scan<'g>(&self, cx: &Ctx<'g, '_>, x: Var<'g>, h0: Var<'g>, c0: Var<'g>) -> Result<Var<'g>> {
        let xw = self.input_part(cx, x)?;
        nn::lstm_sequence(xw, cx.param(&self.names()[1])?, h0, c0)
    }

    /// A single step from `(h_prev, c_prev)` on input `x: [d_in]`.
    pub fn step<'g>(
        &self,
        cx: &Ctx<'g, '_>,
        x: Var<'g>,
        h_prev: Var<'g>,
        c_prev: Var<'g>,
    ) -> Result<(Var<'g>, Var<'g>)> {
        let x = x.reshape(vec![1, self.d_in])?;
        let out = self.scan(cx, x, h_prev, c_prev)?;
        let h = out.slice_cols(0, self.hidden)?.reshape(vec![self.hidden])?;
        let c = out.slice_cols(self.hidden, 2 * self.hidden)?.reshape(vec![self.hidden])?;
        Ok((h, c))
    }

    pub fn bind<'p>(&self, store: &'p ParamStore) -> Result<LstmRef<'p>> {
        let [w_ih, w_hh, bias] = self.names();
        Ok(LstmRef { w_ih: store.get(&w_ih)?, w_hh: store.get(&w_hh)?, bias: store.get(&bias)? })
    }
}

/// Recurrent carry of one LSTM.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self { h: vec![0.0; hidden], c: vec![0.0; hidden] }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LstmRef<'p> {
    w_ih: &'p Tensor,
    w_hh: &'p Tensor,
    bias: &'p Tensor,
}

impl LstmRef<'_> {
    /// Advances `state` by one input row and returns the new hidden state.
    pub fn step(&self, x: &[f64], state: &mut LstmState) -> Vec<f64> {
        let mut xw = kernels::vecmat(x, self.w_ih.data(), self.bias.len());
        for (v, b) in xw.iter_mut().zip(self.bias.data()) {
            *v += b;
        }
        let pre = lstm_preactivation(&xw, &state.h, self.w_hh.data());
        let (h, c, _) = kernels::lstm_cell(&pre, &state.c);
        state.h.clone_from(&h);
        state.c = c;
        h
    }
}

/// What the memory LSTM consumes at position `t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemoryInput {
    /// The position's own vector `x_t`.
    #[default]
    Center,
    /// The flattened window `[x_{t−l}, …, x_{t+r}]`, zero-padded.
    Window,
}

/// Memory path of the MSA block: a learned projection of the input
/// followed by an LSTM with hidden size `d_model`.
#[derive(Clone, Debug)]
pub struct MemoryPath {
    pub input: MemoryInput,
    left: usize,
    right: usize,
    proj: Linear,
    pub lstm: Lstm,
}

impl MemoryPath {
    pub fn new(prefix: &str, d_model: usize, input: MemoryInput, left: Option<usize>, right: Option<usize>) -> Result<Self> {
        let (left, right) = match input {
            MemoryInput::Center => (0, 0),
            MemoryInput::Window => match (left, right) {
                (Some(l), Some(r)) => (l, r),
                _ => return Err(Error::Config("window memory input needs a bounded window".into())),
            },
        };
        let width = (left + right + 1) * d_model;
        Ok(Self {
            input,
            left,
            right,
            proj: Linear::new(format!("{prefix}.proj"), width, d_model),
            lstm: Lstm::new(format!("{prefix}.lstm"), d_model, d_model),
        })
    }

    /// Future positions the memory input reads.
    pub fn lookahead(&self) -> usize {
        self.right
    }

    pub fn window(&self) -> (usize, usize) {
        (self.left, self.right)
    }

    pub fn param_count(&self) -> usize {
        self.proj.param_count() + self.lstm.param_count()
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        self.proj.init(store, rng);
        self.lstm.init(store, rng);
    }

    pub fn forward<'g>(&self, cx: &Ctx<'g, '_>, x: Var<'g>) -> Result<Var<'g>> {
        let input = match self.input {
            MemoryInput::Center => x,
            MemoryInput::Window => nn::unfold_window(x, self.left, self.right)?,
        };
        self.lstm.forward(cx, self.proj.forward(cx, input)?)
    }

    pub fn bind<'p>(&self, store: &'p ParamStore) -> Result<MemoryRef<'p>> {
        Ok(MemoryRef { proj: self.proj.bind(store)?, lstm: self.lstm.bind(store)? })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MemoryRef<'p> {
    proj: LinearRef<'p>,
    lstm: LstmRef<'p>,
}

impl MemoryRef<'_> {
    /// Feeds one memory input row (already windowed if configured).
    pub fn step(&self, input: &[f64], state: &mut LstmState) -> Vec<f64> {
        self.lstm.step(&self.proj.apply(input), state)
    }
}
