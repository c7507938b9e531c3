use crate::decoding::LabelScorer;
use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::transducer::{JointKernel, TransducerModel, Vocabulary};

use super::stage::{Stage, StageStack};

/// Encoder as a stage pipeline: conv frontend, projection, blocks.
pub fn encoder_stack(model: &TransducerModel) -> Result<StageStack<'_>> {
    let arch = &model.arch;
    let mut stack = StageStack::new();
    stack.add_frontend("encoder.frontend", &arch.encoder_frontend, &model.params)?;
    for (i, b) in arch.encoder_blocks.iter().enumerate() {
        stack.add(format!("encoder.block{i}"), Stage::block(b, &model.params)?);
    }
    Ok(stack)
}

/// Prediction network as a stage pipeline (causal, so every push emits).
pub fn predictor_stack(model: &TransducerModel) -> Result<StageStack<'_>> {
    let arch = &model.arch;
    let mut stack = StageStack::new();
    stack.add_frontend("predictor.frontend", &arch.predictor_frontend, &model.params)?;
    for (i, b) in arch.predictor_blocks.iter().enumerate() {
        stack.add(format!("predictor.block{i}"), Stage::block(b, &model.params)?);
    }
    Ok(stack)
}

/// Prediction-network state after some label prefix.
#[derive(Clone, Debug)]
pub struct PredictorState<'m> {
    stack: StageStack<'m>,
    /// Predictor output for the prefix.
    pub output: Vec<f64>,
    /// Its joint-network projection.
    pub projected: Vec<f64>,
}

impl PredictorState<'_> {
    pub fn state_len(&self) -> usize {
        self.stack.state_len() + self.output.len() + self.projected.len()
    }
}

/// A [`TransducerModel`] as a [`LabelScorer`]. Frames handed to
/// `log_probs` are encoder rows already projected by the joint encoder
/// weights ([`TransducerScorer::project`]).
pub struct TransducerScorer<'m> {
    embedding: &'m Tensor,
    joint: JointKernel<'m>,
    fresh: StageStack<'m>,
    vocab_size: usize,
}

impl<'m> TransducerScorer<'m> {
    pub fn new(model: &'m TransducerModel) -> Result<Self> {
        Ok(Self {
            embedding: model.params.get(&model.arch.embedding)?,
            joint: model.joint_kernel()?,
            fresh: predictor_stack(model)?,
            vocab_size: model.vocab.len(),
        })
    }

    /// Joint-encoder projection of one encoder output row.
    pub fn project(&self, encoder_row: &[f64]) -> Vec<f64> {
        self.joint.project_encoder(encoder_row)
    }

    fn feed(&self, mut stack: StageStack<'m>, symbol: usize) -> Result<PredictorState<'m>> {
        let out = stack.push(self.embedding.row(symbol).to_vec(), None);
        let output = out.into_iter().last().ok_or_else(|| Error::State("predictor produced no output".into()))?;
        Ok(PredictorState { stack, projected: self.joint.project_predictor(&output), output })
    }
}

impl<'m> LabelScorer for TransducerScorer<'m> {
    type State = PredictorState<'m>;

    fn blank(&self) -> usize {
        Vocabulary::BLANK
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn start(&self) -> Result<PredictorState<'m>> {
        self.feed(self.fresh.clone(), Vocabulary::SOS)
    }

    fn extend(&self, state: &PredictorState<'m>, label: usize) -> Result<PredictorState<'m>> {
        if label == Vocabulary::BLANK || label >= self.vocab_size {
            return Err(Error::Contract(format!("cannot extend with symbol {label}")));
        }
        self.feed(state.stack.clone(), label)
    }

    fn log_probs(&self, frame: &[f64], state: &PredictorState<'m>) -> Vec<f64> {
        self.joint.log_probs(frame, &state.projected)
    }
}
