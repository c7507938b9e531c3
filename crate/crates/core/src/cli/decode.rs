use std::fs;
use std::io::Write;
use std::path::Path;

use crate::decoding::NGramLm;
use crate::error::{Error, Result};
use crate::eval::{score, DecodeMode, ScoreReport};
use crate::transducer::{load_checkpoint, TransducerModel};

use super::data::load_data_dir;
use super::{report, DecodeArgs};

/// Outcome of `decode`.
#[derive(Clone, Debug)]
pub struct DecodeReport {
    pub ids: Vec<String>,
    /// Hypothesis text per utterance, in `ids` order.
    pub texts: Vec<String>,
    pub score: ScoreReport,
}

pub(crate) fn load_lm(path: Option<&Path>, model: &TransducerModel) -> Result<Option<NGramLm>> {
    let Some(path) = path else { return Ok(None) };
    let lm = NGramLm::load(path)?;
    lm.check_vocabulary(&model.vocab)?;
    Ok(Some(lm))
}

/// `decode`: transcribes a data directory, writes `hyps.txt` and prints
/// error rates.
pub fn cmd_decode(args: &DecodeArgs, out: &mut dyn Write) -> Result<DecodeReport> {
    let mode = DecodeMode::from_args(&args.mode, args.beam, args.lambda)?;
    let model = load_checkpoint(&args.checkpoint)?;
    let lm = load_lm(args.lm.as_deref(), &model)?;
    let data = load_data_dir(&args.data)?;
    if let Some(f) = data.features.iter().find(|f| f.shape()[1] != model.config.d_in) {
        return Err(Error::Config(format!(
            "{} holds {}-dim features but the model expects {}",
            args.data.display(),
            f.shape()[1],
            model.config.d_in
        )));
    }
    if let Some(i) = data.features.iter().position(|f| f.data().iter().any(|v| !v.is_finite())) {
        return Err(Error::numeric("decode", format!("non-finite feature values in {}", data.ids[i])));
    }
    let labels = data.texts.iter().map(|t| model.vocab.encode(t)).collect::<Result<Vec<_>>>()?;
    let pairs = data.features.iter().zip(labels.iter().map(Vec::as_slice));
    let score = score(&model, pairs, &mode, lm.as_ref())?;
    let texts: Vec<String> = score.hypotheses.iter().map(|h| model.vocab.decode(h)).collect();

    fs::create_dir_all(&args.run_dir).map_err(|e| Error::io(&args.run_dir, e))?;
    let path = args.run_dir.join("hyps.txt");
    let body: String = data.ids.iter().zip(&texts).map(|(id, t)| format!("{id}\t{t}\n")).collect();
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    report(
        out,
        format!(
            "{} utterances  CER {:.4}  WER {:.4}  exact {:.4}  ({mode:?})",
            texts.len(),
            score.cer,
            score.wer,
            score.sequence_accuracy
        ),
    )?;
    report(out, format!("wrote {}", path.display()))?;
    Ok(DecodeReport { ids: data.ids, texts, score })
}
