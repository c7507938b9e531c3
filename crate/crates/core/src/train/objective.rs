use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{ctc_loss, label_cross_entropy, rnnt_loss};
use crate::numcore::{Ctx, Graph, ParamGrads, Tensor, Var};
use crate::transducer::{TransducerModel, Vocabulary};

/// The three training stages, in protocol order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    /// Encoder plus CTC head.
    CtcPretrain,
    /// Prediction network plus next-symbol head.
    CePretrain,
    /// Whole transducer.
    RnntFinetune,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::CtcPretrain, Stage::CePretrain, Stage::RnntFinetune];

    pub fn name(self) -> &'static str {
        match self {
            Stage::CtcPretrain => "ctc-pretrain",
            Stage::CePretrain => "ce-pretrain",
            Stage::RnntFinetune => "rnnt-finetune",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown stage {s:?} (expected ctc-pretrain, ce-pretrain or rnnt-finetune)")))
    }
}

fn forward<'g>(
    model: &TransducerModel,
    cx: &Ctx<'g, '_>,
    stage: Stage,
    features: &Tensor,
    labels: &[usize],
) -> Result<Var<'g>> {
    let g = cx.graph();
    match stage {
        Stage::CtcPretrain => {
            let e = model.encode(cx, g.constant(features.clone()))?;
            ctc_loss(model.ctc_log_probs(cx, e)?, labels, Vocabulary::BLANK)
        }
        Stage::CePretrain => {
            if labels.is_empty() {
                return Err(Error::Input("cross-entropy pretraining needs a non-empty transcript".into()));
            }
            model.check_labels(labels)?;
            let states = model.predict(cx, &labels[..labels.len() - 1])?;
            let targets: Vec<usize> = labels.iter().map(|&l| l - 1).collect();
            label_cross_entropy(model.ce_logits(cx, states)?, &targets)
        }
        Stage::RnntFinetune => {
            let e = model.encode(cx, g.constant(features.clone()))?;
            let d = model.predict(cx, labels)?;
            rnnt_loss(model.joint(cx, e, d)?, labels, Vocabulary::BLANK)
        }
    }
}

fn finite(stage: Stage, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::numeric("objective", format!("{} loss is {value}", stage.name())))
    }
}

/// Loss of one utterance and the gradient of every parameter it touched.
pub fn objective(
    model: &TransducerModel,
    stage: Stage,
    features: &Tensor,
    labels: &[usize],
    dropout: f64,
    seed: u64,
) -> Result<(f64, ParamGrads)> {
    let g = Graph::new();
    let cx = Ctx::training(&g, &model.params, dropout, seed);
    let loss = forward(model, &cx, stage, features, labels)?;
    let value = finite(stage, loss.value().item())?;
    let grads = g.backward(loss)?;
    Ok((value, cx.param_grads(&grads)))
}

/// Loss only, without dropout.
pub fn evaluate(model: &TransducerModel, stage: Stage, features: &Tensor, labels: &[usize]) -> Result<f64> {
    let g = Graph::new();
    let cx = Ctx::new(&g, &model.params);
    let loss = forward(model, &cx, stage, features, labels)?;
    let value = loss.value().item();
    finite(stage, value)
}
