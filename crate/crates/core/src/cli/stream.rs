use std::io::Write;
use std::time::Instant;

use crate::decoding::{BeamConfig, DEFAULT_MAX_SYMBOLS};
use crate::error::{Error, Result};
use crate::features::{read_wav, FeatureConfig, OnlineFrontend};
use crate::streaming::{SearchMode, StreamSession};
use crate::transducer::load_checkpoint;

use super::decode::load_lm;
use super::{report, StreamArgs};

/// Symbols that became final, and how much audio had been delivered then.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamEvent {
    pub audio_secs: f64,
    pub text: String,
}

/// Outcome of `stream`.
#[derive(Clone, Debug)]
pub struct StreamReport {
    pub transcript: String,
    pub events: Vec<StreamEvent>,
    /// Symbols emitted before the end of input was signalled.
    pub emitted_before_end: usize,
    pub feature_frames: usize,
    pub mean_frame_ms: f64,
    pub max_frame_ms: f64,
}

/// `stream`: feeds a WAV file through the online frontend and the
/// streaming decoder in `chunk_ms` pieces.
pub fn cmd_stream(args: &StreamArgs, out: &mut dyn Write) -> Result<StreamReport> {
    if !(args.chunk_ms > 0.0) {
        return Err(Error::Usage("--chunk-ms must be positive".into()));
    }
    if args.beam == 0 {
        return Err(Error::Usage("beam width must be at least 1".into()));
    }
    let frontend_cfg = match &args.features {
        Some(p) => FeatureConfig::from_toml(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => FeatureConfig::desk(),
    };
    let model = load_checkpoint(&args.checkpoint)?;
    if frontend_cfg.dim() != model.config.d_in {
        return Err(Error::Config(format!(
            "frontend produces {}-dim frames but the model expects {}",
            frontend_cfg.dim(),
            model.config.d_in
        )));
    }
    let lm = load_lm(args.lm.as_deref(), &model)?;
    let mode = if args.beam == 1 {
        SearchMode::Greedy { max_symbols: DEFAULT_MAX_SYMBOLS }
    } else {
        SearchMode::Beam(BeamConfig { lm_weight: args.lambda, ..BeamConfig::new(args.beam) })
    };
    let rate = frontend_cfg.sample_rate_hz;
    let pcm = read_wav(&args.wav, rate)?;
    let mut frontend = OnlineFrontend::new(&frontend_cfg)?;
    let mut session = StreamSession::new(&model, mode, lm.as_ref())?;

    let chunk = ((args.chunk_ms * 1e-3 * rate as f64).round() as usize).max(1);
    let mut events = Vec::new();
    let (mut frames, mut total_ms, mut max_ms) = (0usize, 0.0f64, 0.0f64);
    let mut delivered = 0usize;
    let mut note = |emissions: Vec<crate::streaming::Emission>, delivered: usize, out: &mut dyn Write| -> Result<()> {
        for e in emissions {
            let ev = StreamEvent { audio_secs: delivered as f64 / rate as f64, text: model.vocab.decode(&e.symbols) };
            report(out, format!("[{:7.3}s] frame {:4}  +{:?}", ev.audio_secs, e.frame, ev.text))?;
            events.push(ev);
        }
        Ok(())
    };
    let mut feed = |rows: Vec<Vec<f64>>, session: &mut StreamSession| -> Result<Vec<crate::streaming::Emission>> {
        let mut all = Vec::new();
        for r in rows {
            let start = Instant::now();
            all.extend(session.push(&r)?);
            let ms = start.elapsed().as_secs_f64() * 1e3;
            frames += 1;
            total_ms += ms;
            max_ms = max_ms.max(ms);
        }
        Ok(all)
    };
    for piece in pcm.chunks(chunk) {
        delivered += piece.len();
        let emissions = feed(frontend.push(piece)?, &mut session)?;
        note(emissions, delivered, out)?;
    }
    let emitted_before_end = session.transcript().len();
    let emissions = feed(frontend.flush()?, &mut session)?;
    note(emissions, delivered, out)?;
    note(session.flush()?, delivered, out)?;

    let transcript = model.vocab.decode(session.transcript());
    let mean_frame_ms = if frames == 0 { 0.0 } else { total_ms / frames as f64 };
    report(out, format!("transcript: {transcript}"))?;
    report(
        out,
        format!(
            "{frames} feature frames, {emitted_before_end} of {} symbols before end of input, {mean_frame_ms:.3} ms/frame (max {max_ms:.3})",
            session.transcript().len()
        ),
    )?;
    Ok(StreamReport { transcript, events, emitted_before_end, feature_frames: frames, mean_frame_ms, max_frame_ms: max_ms })
}
