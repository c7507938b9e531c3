use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{Block, ConvFrontend, Linear};
use crate::numcore::{gather_rows, kernels, Ctx, Graph, ParamStore, Tensor, Var};

use super::config::ModelConfig;
use super::vocab::Vocabulary;

pub const ENCODER_PREFIX: &str = "encoder.";
pub const PREDICTOR_PREFIX: &str = "predictor.";
pub const JOINT_PREFIX: &str = "joint.";
pub const CTC_HEAD_PREFIX: &str = "ctc_head.";
pub const CE_HEAD_PREFIX: &str = "ce_head.";

/// Layer descriptors of a model. Parameter names are derived from the
/// prefixes above, so the encoder subset is everything under `encoder.`.
#[derive(Clone, Debug)]
pub struct Architecture {
    pub encoder_frontend: ConvFrontend,
    pub encoder_blocks: Vec<Block>,
    pub embedding: String,
    pub predictor_frontend: ConvFrontend,
    pub predictor_blocks: Vec<Block>,
    pub joint_encoder: Linear,
    pub joint_predictor: Linear,
    pub joint_output: Linear,
    pub ctc_hidden: Linear,
    pub ctc_output: Linear,
    pub ce_output: Linear,
}

impl Architecture {
    pub fn new(cfg: &ModelConfig, vocab_size: usize) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let enc = cfg.encoder_block();
        let pred = cfg.predictor_block();
        Ok(Self {
            encoder_frontend: ConvFrontend::new("encoder.frontend", cfg.d_in, &cfg.encoder.conv, d)?,
            encoder_blocks: (0..cfg.encoder.layers)
                .map(|i| Block::new(&format!("encoder.block{i}"), &enc))
                .collect::<Result<_>>()?,
            embedding: "predictor.embedding".into(),
            predictor_frontend: ConvFrontend::new("predictor.frontend", d, &cfg.predictor.conv, d)?,
            predictor_blocks: (0..cfg.predictor.layers)
                .map(|i| Block::new(&format!("predictor.block{i}"), &pred))
                .collect::<Result<_>>()?,
            joint_encoder: Linear::new("joint.encoder", d, d),
            joint_predictor: Linear::new("joint.predictor", d, d),
            joint_output: Linear::new("joint.output", d, vocab_size),
            ctc_hidden: Linear::new("ctc_head.hidden", d, d),
            ctc_output: Linear::new("ctc_head.output", d, vocab_size),
            ce_output: Linear::new("ce_head.output", d, vocab_size - 1),
        })
    }

    /// Future input frames an encoder output depends on, or `None` when
    /// unbounded. Output `j` reads inputs up to `j·stride + lookahead`.
    pub fn encoder_lookahead(&self, cfg: &ModelConfig) -> Option<usize> {
        let blocks = cfg.encoder_block().lookahead()? * cfg.encoder.layers;
        Some(self.encoder_frontend.layers.iter().rev().fold(blocks, |b, l| b * l.geo.stride + l.geo.right()))
    }
}

/// Encoder, prediction network and joint network with their parameters.
#[derive(Clone, Debug)]
pub struct TransducerModel {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore,
    pub arch: Architecture,
}

impl TransducerModel {
    /// Fresh model with parameters drawn from `seed`.
    pub fn new(config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        let arch = Architecture::new(&config, vocab.len())?;
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        arch.encoder_frontend.init(&mut params, &mut rng);
        for b in &arch.encoder_blocks {
            b.init(&mut params, &mut rng);
        }
        params.insert(arch.embedding.clone(), Tensor::randn(vec![vocab.len(), config.d_model], 1.0, &mut rng));
        arch.predictor_frontend.init(&mut params, &mut rng);
        for b in &arch.predictor_blocks {
            b.init(&mut params, &mut rng);
        }
        for l in [
            &arch.joint_encoder,
            &arch.joint_predictor,
            &arch.joint_output,
            &arch.ctc_hidden,
            &arch.ctc_output,
            &arch.ce_output,
        ] {
            l.init(&mut params, &mut rng);
        }
        Ok(Self { config, vocab, params, arch })
    }

    /// Builds a model around existing parameters, checking names and shapes.
    pub fn from_parts(config: ModelConfig, vocab: Vocabulary, params: ParamStore) -> Result<Self> {
        let reference = Self::new(config, vocab, 0)?;
        let expected: Vec<(&String, &[usize])> = reference.params.iter().map(|(n, t)| (n, t.shape())).collect();
        let got: Vec<(&String, &[usize])> = params.iter().map(|(n, t)| (n, t.shape())).collect();
        if expected != got {
            let missing = expected.iter().find(|e| !got.contains(e)).or_else(|| got.iter().find(|g| !expected.contains(g)));
            return Err(Error::Checkpoint(format!("parameters do not match the config (first difference: {missing:?})")));
        }
        Ok(Self { params, ..reference })
    }

    pub fn blank(&self) -> usize {
        Vocabulary::BLANK
    }

    pub fn encoder_lookahead(&self) -> Option<usize> {
        self.arch.encoder_lookahead(&self.config)
    }

    pub fn encoder_out_len(&self, t_in: usize) -> usize {
        self.arch.encoder_frontend.out_len(t_in)
    }

    /// `features [T, d_in] -> [T', d_model]`.
    pub fn encode<'g>(&self, cx: &Ctx<'g, '_>, features: Var<'g>) -> Result<Var<'g>> {
        let shape = features.shape();
        if shape.len() != 2 || shape[1] != self.config.d_in {
            return Err(Error::dim("encode", format!("features {shape:?}, expected [T, {}]", self.config.d_in)));
        }
        if shape[0] == 0 {
            return Err(Error::Input("encode: empty feature sequence".into()));
        }
        let mut h = self.arch.encoder_frontend.forward(cx, features)?;
        for b in &self.arch.encoder_blocks {
            h = b.forward(cx, h)?;
        }
        Ok(h)
    }

    /// Checks that `labels` are transcript symbols.
    pub fn check_labels(&self, labels: &[usize]) -> Result<()> {
        match labels.iter().find(|l| !self.vocab.label_ids().contains(l)) {
            Some(&Vocabulary::BLANK) => Err(Error::Contract("blank in label sequence".into())),
            Some(l) => Err(Error::Contract(format!("label {l} is not a transcript symbol"))),
            None => Ok(()),
        }
    }

    /// `labels [U] -> [U+1, d_model]`; row 0 is the ∅ state and row `u`
    /// has seen `y_1..y_u`.
    pub fn predict<'g>(&self, cx: &Ctx<'g, '_>, labels: &[usize]) -> Result<Var<'g>> {
        self.check_labels(labels)?;
        let ids: Vec<usize> = std::iter::once(Vocabulary::SOS).chain(labels.iter().copied()).collect();
        let mut h = gather_rows(cx.param(&self.arch.embedding)?, &ids)?;
        h = self.arch.predictor_frontend.forward(cx, h)?;
        for b in &self.arch.predictor_blocks {
            h = b.forward(cx, h)?;
        }
        Ok(h)
    }

    /// `e [T', d]`, `d_states [U+1, d] -> [T', U+1, |V|]` log-probabilities.
    pub fn joint<'g>(&self, cx: &Ctx<'g, '_>, e: Var<'g>, d_states: Var<'g>) -> Result<Var<'g>> {
        let (t_len, u1) = (e.shape()[0], d_states.shape()[0]);
        let pe = self.arch.joint_encoder.forward(cx, e)?;
        let pd = self.arch.joint_predictor.forward(cx, d_states)?;
        let hidden = crate::numcore::nn::outer_add(pe, pd)?.tanh()?;
        let logits = self.arch.joint_output.forward(cx, hidden)?;
        logits.log_softmax(1)?.reshape(vec![t_len, u1, self.vocab.len()])
    }

    /// CTC head over encoder states: `[T', |V|]` log-probabilities.
    pub fn ctc_log_probs<'g>(&self, cx: &Ctx<'g, '_>, e: Var<'g>) -> Result<Var<'g>> {
        let h = self.arch.ctc_hidden.forward(cx, e)?.relu()?;
        self.arch.ctc_output.forward(cx, h)?.log_softmax(1)
    }

    /// Next-symbol logits over the `|V|−1` non-blank classes; class `k`
    /// is symbol `k + 1`.
    pub fn ce_logits<'g>(&self, cx: &Ctx<'g, '_>, d_states: Var<'g>) -> Result<Var<'g>> {
        self.arch.ce_output.forward(cx, d_states)
    }

    /// Inference-only encoder pass.
    pub fn encode_tensor(&self, features: &Tensor) -> Result<Tensor> {
        let g = Graph::new();
        let cx = Ctx::new(&g, &self.params);
        Ok(self.encode(&cx, g.constant(features.clone()))?.to_tensor())
    }

    pub fn predict_tensor(&self, labels: &[usize]) -> Result<Tensor> {
        let g = Graph::new();
        let cx = Ctx::new(&g, &self.params);
        Ok(self.predict(&cx, labels)?.to_tensor())
    }

    pub fn joint_tensor(&self, e: &Tensor, d_states: &Tensor) -> Result<Tensor> {
        let g = Graph::new();
        let cx = Ctx::new(&g, &self.params);
        Ok(self.joint(&cx, g.constant(e.clone()), g.constant(d_states.clone()))?.to_tensor())
    }

    pub fn ctc_tensor(&self, e: &Tensor) -> Result<Tensor> {
        let g = Graph::new();
        let cx = Ctx::new(&g, &self.params);
        Ok(self.ctc_log_probs(&cx, g.constant(e.clone()))?.to_tensor())
    }

    /// Row-level joint evaluation for decoders, split so the encoder
    /// projection is computed once per frame.
    pub fn joint_kernel(&self) -> Result<JointKernel<'_>> {
        Ok(JointKernel {
            encoder: self.arch.joint_encoder.bind(&self.params)?,
            predictor: self.arch.joint_predictor.bind(&self.params)?,
            output: self.arch.joint_output.bind(&self.params)?,
        })
    }
}

/// Joint network on single rows, without a graph.
pub struct JointKernel<'p> {
    encoder: crate::layers::LinearRef<'p>,
    predictor: crate::layers::LinearRef<'p>,
    output: crate::layers::LinearRef<'p>,
}

impl JointKernel<'_> {
    pub fn project_encoder(&self, e: &[f64]) -> Vec<f64> {
        self.encoder.apply(e)
    }

    pub fn project_predictor(&self, d: &[f64]) -> Vec<f64> {
        self.predictor.apply(d)
    }

    /// Log-probabilities from the two projections.
    pub fn log_probs(&self, pe: &[f64], pd: &[f64]) -> Vec<f64> {
        let hidden: Vec<f64> = pe.iter().zip(pd).map(|(a, b)| (a + b).tanh()).collect();
        kernels::log_softmax_row(&self.output.apply(&hidden))
    }
}
