use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Ctx, ParamStore, Var};

use super::attention::{AttentionConfig, MultiHeadAttention};
use super::basic::{FeedForward, LayerNorm};
use super::recurrent::{Lstm, MemoryInput, MemoryPath};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKind {
    /// Windowed attention plus an LSTM memory path.
    Msa,
    /// Windowed attention only.
    RestrictedSa,
    /// Unidirectional LSTM layer.
    Lstm,
    /// Bidirectional LSTM layer (offline only).
    Blstm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub kind: BlockKind,
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    /// Attention window; `None` is unbounded.
    pub left: Option<usize>,
    pub right: Option<usize>,
    #[serde(default)]
    pub relative_bias: bool,
    #[serde(default)]
    pub memory_input: MemoryInput,
}

impl BlockConfig {
    pub fn attention(&self) -> AttentionConfig {
        AttentionConfig {
            d_model: self.d_model,
            heads: self.heads,
            left: self.left,
            right: self.right,
            relative_bias: self.relative_bias,
        }
    }

    /// Future positions an output depends on; `None` when unbounded.
    pub fn lookahead(&self) -> Option<usize> {
        match self.kind {
            BlockKind::Msa | BlockKind::RestrictedSa => self.right,
            BlockKind::Lstm => Some(0),
            BlockKind::Blstm => None,
        }
    }

    pub fn with_kind(mut self, kind: BlockKind) -> Self {
        self.kind = kind;
        self
    }
}

/// `f = LN(m + h + x)`, `out = LN(FFN(f) + f)` with `m` the windowed
/// attention output and `h` the memory LSTM state.
#[derive(Clone, Debug)]
pub struct MsaBlock {
    pub attention: MultiHeadAttention,
    pub memory: MemoryPath,
    pub norm1: LayerNorm,
    pub ffn: FeedForward,
    pub norm2: LayerNorm,
}

/// [`MsaBlock`] without the memory path: `f = LN(m + x)`.
#[derive(Clone, Debug)]
pub struct RestrictedBlock {
    pub attention: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ffn: FeedForward,
    pub norm2: LayerNorm,
}

#[derive(Clone, Debug)]
pub enum Block {
    Msa(MsaBlock),
    Restricted(RestrictedBlock),
    Lstm(Lstm),
    /// Forward and backward LSTMs, outputs summed.
    Blstm(Lstm, Lstm),
}

impl Block {
    /// Parameter names are `{prefix}.attn.*`, `{prefix}.memory.*`,
    /// `{prefix}.norm1.*`, `{prefix}.ffn.*`, `{prefix}.norm2.*` for attention
    /// blocks, so an MSA block and a restricted block with the same prefix
    /// share every attention-side parameter.
    pub fn new(prefix: &str, cfg: &BlockConfig) -> Result<Self> {
        let d = cfg.d_model;
        if d < 2 {
            return Err(Error::Config("d_model must be at least 2".into()));
        }
        Ok(match cfg.kind {
            BlockKind::Msa => Block::Msa(MsaBlock {
                attention: MultiHeadAttention::new(&format!("{prefix}.attn"), cfg.attention())?,
                memory: MemoryPath::new(&format!("{prefix}.memory"), d, cfg.memory_input, cfg.left, cfg.right)?,
                norm1: LayerNorm::new(format!("{prefix}.norm1"), d),
                ffn: FeedForward::new(&format!("{prefix}.ffn"), d, cfg.d_ff),
                norm2: LayerNorm::new(format!("{prefix}.norm2"), d),
            }),
            BlockKind::RestrictedSa => Block::Restricted(RestrictedBlock {
                attention: MultiHeadAttention::new(&format!("{prefix}.attn"), cfg.attention())?,
                norm1: LayerNorm::new(format!("{prefix}.norm1"), d),
                ffn: FeedForward::new(&format!("{prefix}.ffn"), d, cfg.d_ff),
                norm2: LayerNorm::new(format!("{prefix}.norm2"), d),
            }),
            BlockKind::Lstm => Block::Lstm(Lstm::new(format!("{prefix}.lstm"), d, d)),
            BlockKind::Blstm => Block::Blstm(
                Lstm::new(format!("{prefix}.lstm_fwd"), d, d),
                Lstm::new(format!("{prefix}.lstm_bwd"), d, d),
            ),
        })
    }

    /// Closed-form parameter count. With `A = 4(d² + d) [+ l + r + 1]`,
    /// `N = 4d` (two LayerNorms), `F = 2·d·d_ff + d_ff + d`,
    /// `L(i) = 4d(i + d + 1)` and memory input width `w = d` (center) or
    /// `(l + r + 1)·d` (window):
    ///
    /// * MSA: `A + (w·d + d) + L(d) + N + F`
    /// * restricted: `A + N + F`
    /// * LSTM: `L(d)`; BLSTM: `2·L(d)`
    pub fn param_count(&self) -> usize {
        match self {
            Block::Msa(b) => {
                b.attention.param_count()
                    + b.memory.param_count()
                    + b.norm1.param_count()
                    + b.ffn.param_count()
                    + b.norm2.param_count()
            }
            Block::Restricted(b) => {
                b.attention.param_count() + b.norm1.param_count() + b.ffn.param_count() + b.norm2.param_count()
            }
            Block::Lstm(l) => l.param_count(),
            Block::Blstm(f, b) => f.param_count() + b.param_count(),
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        match self {
            Block::Msa(b) => {
                b.attention.init(store, rng);
                b.memory.init(store, rng);
                b.norm1.init(store);
                b.ffn.init(store, rng);
                b.norm2.init(store);
            }
            Block::Restricted(b) => {
                b.attention.init(store, rng);
                b.norm1.init(store);
                b.ffn.init(store, rng);
                b.norm2.init(store);
            }
            Block::Lstm(l) => l.init(store, rng),
            Block::Blstm(f, b) => {
                f.init(store, rng);
                b.init(store, rng);
            }
        }
    }

    pub fn forward<'g>(&self, cx: &Ctx<'g, '_>, x: Var<'g>) -> Result<Var<'g>> {
        match self {
            Block::Msa(b) => {
                let m = b.attention.forward(cx, x)?;
                let h = b.memory.forward(cx, x)?;
                let f = b.norm1.forward(cx, m.add(h)?.add(x)?)?;
                let y = b.ffn.forward(cx, f)?;
                b.norm2.forward(cx, y.add(f)?)
            }
            Block::Restricted(b) => {
                let m = b.attention.forward(cx, x)?;
                let f = b.norm1.forward(cx, m.add(x)?)?;
                let y = b.ffn.forward(cx, f)?;
                b.norm2.forward(cx, y.add(f)?)
            }
            Block::Lstm(l) => l.forward(cx, x),
            Block::Blstm(fwd, bwd) => {
                let forward = fwd.forward(cx, x)?;
                let backward = bwd.forward(cx, x.reverse_rows()?)?.reverse_rows()?;
                forward.add(backward)
            }
        }
    }
}
