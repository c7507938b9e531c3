use rand::Rng;

use crate::error::Result;
use crate::numcore::{kernels, nn, Ctx, ParamStore, Tensor, Var};

/// LayerNorm epsilon used throughout.
pub const LN_EPS: f64 = 1e-6;

/// Affine map `x·W + b` with `W: [d_in, d_out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    prefix: String,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(prefix: impl Into<String>, d_in: usize, d_out: usize) -> Self {
        Self { prefix: prefix.into(), d_in, d_out }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.prefix)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.prefix)
    }

    pub fn param_count(&self) -> usize {
        self.d_in * self.d_out + self.d_out
    }

    /// Xavier-uniform weights, zero bias.
    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        let bound = (6.0 / (self.d_in + self.d_out) as f64).sqrt();
        store.insert(self.weight_name(), Tensor::uniform(vec![self.d_in, self.d_out], bound, rng));
        store.insert(self.bias_name(), Tensor::zeros(vec![self.d_out]));
    }

    pub fn forward<'g>(&self, cx: &Ctx<'g, '_>, x: Var<'g>) -> Result<Var<'g>> {
        x.matmul(cx.param(&self.weight_name())?)?.add(cx.param(&self.bias_name())?)
    }

    pub fn bind<'p>(&self, store: &'p ParamStore) -> Result<LinearRef<'p>> {
        Ok(LinearRef {
            weight: store.get(&self.weight_name())?,
            bias: store.get(&self.bias_name())?,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LinearRef<'p> {
    weight: &'p Tensor,
    bias: &'p Tensor,
}

impl LinearRef<'_> {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = kernels::vecmat(x, self.weight.data(), self.bias.len());
        for (v, b) in y.iter_mut().zip(self.bias.data()) {
            *v += b;
        }
        y
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    prefix: String,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new(prefix: impl Into<String>, dim: usize) -> Self {
        Self { prefix: prefix.into(), dim }
    }

    fn names(&self) -> (String, String) {
        (format!("{}.gain", self.prefix), format!("{}.bias", self.prefix))
    }

    pub fn param_count(&self) -> usize {
        2 * self.dim
    }

    pub fn init(&self, store: &mut ParamStore) {
        let (g, b) = self.names();
        store.insert(g, Tensor::full(vec![self.dim], 1.0));
        store.insert(b, Tensor::zeros(vec![self.dim]));
    }

    pub fn forward<'g>(&self, cx: &Ctx<'g, '_>, x: Var<'g>) -> Result<Var<'g>> {
        let (g, b) = self.names();
        nn::layer_norm(x, cx.param(&g)?, cx.param(&b)?, LN_EPS)
    }

    pub fn bind<'p>(&self, store: &'p ParamStore) -> Result<LayerNormRef<'p>> {
        let (g, b) = self.names();
        Ok(LayerNormRef { gain: store.get(&g)?, bias: store.get(&b)? })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNormRef<'p> {
    gain: &'p Tensor,
    bias: &'p Tensor,
}

impl LayerNormRef<'_> {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        kernels::layer_norm_row(x, self.gain.data(), self.bias.data(), LN_EPS)
    }
}

/// Position-wise `Linear → ReLU → Linear`.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new(prefix: &str, d_model: usize, d_ff: usize) -> Self {
        Self {
            inner: Linear::new(format!("{prefix}.inner"), d_model, d_ff),
            outer: Linear::new(format!("{prefix}.outer"), d_ff, d_model),
        }
    }

    pub fn param_count(&self) -> usize {
        self.inner.param_count() + self.outer.param_count()
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        self.inner.init(store, rng);
        self.outer.init(store, rng);
    }

    pub fn forward<'g>(&self, cx: &Ctx<'g, '_>, x: Var<'g>) -> Result<Var<'g>> {
        let hidden = cx.dropout(self.inner.forward(cx, x)?.relu()?)?;
        self.outer.forward(cx, hidden)
    }

    pub fn bind<'p>(&self, store: &'p ParamStore) -> Result<FeedForwardRef<'p>> {
        Ok(FeedForwardRef { inner: self.inner.bind(store)?, outer: self.outer.bind(store)? })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FeedForwardRef<'p> {
    inner: LinearRef<'p>,
    outer: LinearRef<'p>,
}

impl FeedForwardRef<'_> {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let hidden: Vec<f64> = self.inner.apply(x).into_iter().map(|v| v.max(0.0)).collect();
        self.outer.apply(&hidden)
    }
}

/// Elementwise sum of equal-length rows, accumulated left to right.
pub(crate) fn add_rows(rows: &[&[f64]]) -> Vec<f64> {
    let mut out = rows[0].to_vec();
    for r in &rows[1..] {
        for (o, v) in out.iter_mut().zip(r.iter()) {
            *o += v;
        }
    }
    out
}
