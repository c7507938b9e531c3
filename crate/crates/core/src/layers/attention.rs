use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::nn::{self, Window};
use crate::numcore::{kernels, Ctx, ParamStore, Tensor, Var};

use super::basic::{Linear, LinearRef};

/// Multi-head attention restricted to `[t − left, t + right]`.
/// `None` on either side means unbounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub d_model: usize,
    pub heads: usize,
    pub left: Option<usize>,
    pub right: Option<usize>,
    /// Learned scalar logit bias per relative offset in the window.
    #[serde(default)]
    pub relative_bias: bool,
}

impl AttentionConfig {
    pub fn window(&self) -> Window {
        Window { left: self.left, right: self.right }
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} must be divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if self.relative_bias && self.window().span().is_none() {
            return Err(Error::Config("relative_bias requires a bounded window".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub cfg: AttentionConfig,
    query: Linear,
    key: Linear,
    value: Linear,
    output: Linear,
    bias_name: String,
}

impl MultiHeadAttention {
    pub fn new(prefix: &str, cfg: AttentionConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        Ok(Self {
            cfg,
            query: Linear::new(format!("{prefix}.query"), d, d),
            key: Linear::new(format!("{prefix}.key"), d, d),
            value: Linear::new(format!("{prefix}.value"), d, d),
            output: Linear::new(format!("{prefix}.output"), d, d),
            bias_name: format!("{prefix}.offset_bias"),
        })
    }

    /// `4(d² + d)`, plus `left + right + 1` with the offset bias.
    pub fn param_count(&self) -> usize {
        let d = self.cfg.d_model;
        4 * (d * d + d) + if self.cfg.relative_bias { self.cfg.window().span().unwrap_or(0) } else { 0 }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        for l in [&self.query, &self.key, &self.value, &self.output] {
            l.init(store, rng);
        }
        if self.cfg.relative_bias {
            let span = self.cfg.window().span().expect("validated");
            store.insert(self.bias_name.clone(), Tensor::zeros(vec![span]));
        }
    }

    pub fn forward<'g>(&self, cx: &Ctx<'g, '_>, x: Var<'g>) -> Result<Var<'g>> {
        let q = self.query.forward(cx, x)?;
        let k = self.key.forward(cx, x)?;
        let v = self.value.forward(cx, x)?;
        let bias = if self.cfg.relative_bias { Some(cx.param(&self.bias_name)?) } else { None };
        let attended =
            nn::windowed_attention(q, k, v, self.cfg.heads, self.cfg.window(), bias, cx.dropout_draw())?;
        self.output.forward(cx, attended)
    }

    pub fn bind<'p>(&self, store: &'p ParamStore) -> Result<AttentionRef<'p>> {
        Ok(AttentionRef {
            cfg: self.cfg,
            query: self.query.bind(store)?,
            key: self.key.bind(store)?,
            value: self.value.bind(store)?,
            output: self.output.bind(store)?,
            offset_bias: if self.cfg.relative_bias { Some(store.get(&self.bias_name)?) } else { None },
        })
    }
}

/// Per-position form of [`MultiHeadAttention`] for incremental inference.
#[derive(Clone, Copy, Debug)]
pub struct AttentionRef<'p> {
    pub cfg: AttentionConfig,
    query: LinearRef<'p>,
    key: LinearRef<'p>,
    value: LinearRef<'p>,
    output: LinearRef<'p>,
    offset_bias: Option<&'p Tensor>,
}

impl AttentionRef<'_> {
    /// Query, key and value rows of one input position.
    pub fn project(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        (self.query.apply(x), self.key.apply(x), self.value.apply(x))
    }

    /// Output at position `t` given the keys/values of positions
    /// `first..first + keys.len()`.
    pub fn attend(&self, t: usize, query: &[f64], first: usize, keys: &[&[f64]], values: &[&[f64]]) -> Vec<f64> {
        let bias: Option<Vec<f64>> = self.offset_bias.map(|b| {
            let left = self.cfg.left.unwrap_or(0);
            (first..first + keys.len()).map(|j| b.data()[j + left - t]).collect()
        });
        let (mixed, _) = kernels::attend(query, keys, values, self.cfg.heads, bias.as_deref());
        self.output.apply(&mixed)
    }
}
