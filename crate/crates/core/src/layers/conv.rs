use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::nn::{self, ConvGeometry};
use crate::numcore::{kernels, Ctx, ParamStore, Tensor, Var};

use super::basic::{LayerNorm, LayerNormRef, Linear};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvKind {
    /// Kernel over (frequency, time); input is single-channel `[T, freq]`.
    TwoD,
    /// Kernel over time only; input channels are the feature vector.
    OneD,
}

/// One conv block: `layers_per_block × (conv → LayerNorm → ReLU)`, with the
/// time stride applied by the last layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlockConfig {
    pub kind: ConvKind,
    /// Ignored for [`ConvKind::OneD`].
    pub kernel_freq: usize,
    pub kernel_time: usize,
    pub channels: usize,
    pub time_stride: usize,
    pub layers_per_block: usize,
    /// Causal blocks put every time tap in the past (no lookahead);
    /// otherwise taps are centered.
    #[serde(default)]
    pub causal: bool,
}

impl ConvBlockConfig {
    /// 21×5 (frequency × time) kernels, 32 channels.
    pub fn full_2d(time_stride: usize) -> Self {
        Self { kind: ConvKind::TwoD, kernel_freq: 21, kernel_time: 5, channels: 32, time_stride, layers_per_block: 2, causal: false }
    }

    /// Causal 5-tap time kernel with stride 1.
    pub fn full_1d(channels: usize) -> Self {
        Self { kind: ConvKind::OneD, kernel_freq: 1, kernel_time: 5, channels, time_stride: 1, layers_per_block: 2, causal: true }
    }

    /// Future frames read by one layer: `⌊kernel_time/2⌋` when centered.
    pub fn layer_lookahead(&self) -> usize {
        if self.causal { 0 } else { self.kernel_time / 2 }
    }
}

#[derive(Clone, Debug)]
pub struct ConvLayer {
    pub geo: ConvGeometry,
    weight: String,
    bias: String,
    norm: LayerNorm,
}

impl ConvLayer {
    pub fn new(prefix: &str, geo: ConvGeometry) -> Self {
        Self {
            geo,
            weight: format!("{prefix}.weight"),
            bias: format!("{prefix}.bias"),
            norm: LayerNorm::new(format!("{prefix}.norm"), geo.c_out * geo.freq),
        }
    }

    pub fn param_count(&self) -> usize {
        let g = &self.geo;
        g.c_out * g.c_in * g.kernel_freq * g.kernel_time + g.c_out + self.norm.param_count()
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        let g = &self.geo;
        let fan_in = g.c_in * g.kernel_freq * g.kernel_time;
        let fan_out = g.c_out * g.kernel_freq * g.kernel_time;
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        store.insert(self.weight.clone(), Tensor::uniform(g.weight_shape(), bound, rng));
        store.insert(self.bias.clone(), Tensor::zeros(vec![g.c_out]));
        self.norm.init(store);
    }

    /// Convolution alone, without normalization or activation.
    pub fn conv<'g>(&self, cx: &Ctx<'g, '_>, x: Var<'g>) -> Result<Var<'g>> {
        nn::conv_time(x, cx.param(&self.weight)?, cx.param(&self.bias)?, self.geo)
    }

    pub fn forward<'g>(&self, cx: &Ctx<'g, '_>, x: Var<'g>) -> Result<Var<'g>> {
        self.norm.forward(cx, self.conv(cx, x)?)?.relu()
    }

    pub fn bind<'p>(&self, store: &'p ParamStore) -> Result<ConvLayerRef<'p>> {
        Ok(ConvLayerRef {
            geo: self.geo,
            weight: store.get(&self.weight)?,
            bias: store.get(&self.bias)?,
            norm: self.norm.bind(store)?,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConvLayerRef<'p> {
    pub geo: ConvGeometry,
    weight: &'p Tensor,
    bias: &'p Tensor,
    norm: LayerNormRef<'p>,
}

impl ConvLayerRef<'_> {
    /// One output frame from the `kernel_time` input frames under the kernel.
    pub fn frame(&self, frames: &[&[f64]]) -> Vec<f64> {
        let g = &self.geo;
        let y = kernels::conv_frame(frames, self.weight.data(), self.bias.data(), g.c_in, g.c_out, g.freq, g.kernel_freq);
        self.norm.apply(&y).into_iter().map(|v| v.max(0.0)).collect()
    }
}

/// Conv blocks followed by a linear projection of each frame to `d_model`.
#[derive(Clone, Debug)]
pub struct ConvFrontend {
    pub layers: Vec<ConvLayer>,
    pub proj: Linear,
}

impl ConvFrontend {
    /// `d_in` is the feature width (frequency bins for 2-D blocks, channels
    /// for 1-D blocks).
    pub fn new(prefix: &str, d_in: usize, blocks: &[ConvBlockConfig], d_model: usize) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::Config("frontend needs at least one conv block".into()));
        };
        if blocks.iter().any(|b| b.kind != first.kind) {
            return Err(Error::Config("conv blocks in one frontend must share a kind".into()));
        }
        let (freq, mut c_in) = match first.kind {
            ConvKind::TwoD => (d_in, 1),
            ConvKind::OneD => (1, d_in),
        };
        let mut layers = Vec::new();
        for (bi, b) in blocks.iter().enumerate() {
            if b.layers_per_block == 0 || b.kernel_time == 0 || b.time_stride == 0 || b.channels == 0 {
                return Err(Error::Config(format!("conv block {bi}: zero-sized setting")));
            }
            let kernel_freq = match b.kind {
                ConvKind::TwoD => b.kernel_freq,
                ConvKind::OneD => 1,
            };
            if kernel_freq % 2 == 0 {
                return Err(Error::Config(format!("conv block {bi}: frequency kernel must be odd")));
            }
            if !b.causal && b.kernel_time % 2 == 0 {
                return Err(Error::Config(format!("conv block {bi}: centered time kernel must be odd")));
            }
            for li in 0..b.layers_per_block {
                let stride = if li + 1 == b.layers_per_block { b.time_stride } else { 1 };
                let left = if b.causal { b.kernel_time - 1 } else { b.kernel_time / 2 };
                let geo = ConvGeometry {
                    c_in,
                    c_out: b.channels,
                    freq,
                    kernel_freq,
                    kernel_time: b.kernel_time,
                    left,
                    stride,
                };
                layers.push(ConvLayer::new(&format!("{prefix}.conv{bi}.{li}"), geo));
                c_in = b.channels;
            }
        }
        let width = c_in * freq;
        Ok(Self { layers, proj: Linear::new(format!("{prefix}.proj"), width, d_model) })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::param_count).sum::<usize>() + self.proj.param_count()
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        for l in &self.layers {
            l.init(store, rng);
        }
        self.proj.init(store, rng);
    }

    pub fn forward<'g>(&self, cx: &Ctx<'g, '_>, x: Var<'g>) -> Result<Var<'g>> {
        let mut h = x;
        for l in &self.layers {
            h = l.forward(cx, h)?;
        }
        self.proj.forward(cx, h)
    }

    /// Overall time stride.
    pub fn stride(&self) -> usize {
        self.layers.iter().map(|l| l.geo.stride).product()
    }

    pub fn out_len(&self, t_in: usize) -> usize {
        self.layers.iter().fold(t_in, |t, l| l.geo.out_len(t))
    }
}
