//! A learnable stand-in for transcribed speech.
//!
//! Every symbol owns a fixed template; an utterance is a random grapheme
//! string in which each symbol occupies 3 to 6 frames of its template,
//! plus a per-utterance channel offset and Gaussian frame noise. Word
//! separators (`-`) use the silence template. Adjacent symbols are always
//! distinct, so symbol boundaries stay recoverable.
//!
//! The same strings can also be rendered as audio: each symbol becomes a
//! two-tone chord, word separators and padding are low-level noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::transducer::Vocabulary;

use super::{extract, FeatureConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// Seed of the symbol templates; utterance seeds are separate.
    pub task_seed: u64,
    /// Width of template features.
    pub d_in: usize,
    /// Letters in use, taken from the start of the alphabet.
    pub letters: usize,
    /// Inclusive range of transcript lengths, separators included.
    pub min_len: usize,
    pub max_len: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Probability of a word separator after a letter.
    pub word_break: f64,
    /// Silence frames before and after the transcript.
    pub pad_frames: usize,
    /// Frame noise standard deviation.
    pub sigma: f64,
    /// Standard deviation of the per-utterance channel offset.
    pub offset: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            task_seed: 7,
            d_in: 16,
            letters: 10,
            min_len: 3,
            max_len: 8,
            min_frames: 3,
            max_frames: 6,
            word_break: 0.15,
            pad_frames: 2,
            sigma: 0.5,
            offset: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.d_in == 0 {
            return bad("d_in must be positive");
        }
        if !(2..=27).contains(&self.letters) {
            return bad("letters must be in 2..=27");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad("need 1 ≤ min_len ≤ max_len");
        }
        if self.min_frames == 0 || self.min_frames > self.max_frames {
            return bad("need 1 ≤ min_frames ≤ max_frames");
        }
        if !(0.0..1.0).contains(&self.word_break) {
            return bad("word_break must be in [0, 1)");
        }
        if !(self.sigma >= 0.0 && self.offset >= 0.0) {
            return bad("sigma and offset must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub features: Tensor,
    pub labels: Vec<usize>,
    /// Frame span `[start, end)` of every label.
    pub spans: Vec<(usize, usize)>,
}

/// A synthetic task: fixed templates plus a seeded utterance generator.
#[derive(Clone, Debug)]
pub struct SynthTask {
    pub cfg: SynthConfig,
    vocab: Vocabulary,
    alphabet: Vec<usize>,
    separator: usize,
    templates: Vec<Vec<f64>>,
}

const SAMPLE_RATE: f64 = 16_000.0;

impl SynthTask {
    pub fn new(cfg: SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let vocab = Vocabulary::graphemes();
        let separator = vocab.id(Vocabulary::WORD_SEPARATOR).expect("grapheme separator");
        let letters: Vec<String> = ('A'..='Z').map(String::from).chain(["'".to_string()]).collect();
        let alphabet: Vec<usize> = letters[..cfg.letters].iter().map(|s| vocab.id(s).expect("grapheme")).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.task_seed);
        let templates = (0..vocab.len())
            .map(|id| {
                if id == separator {
                    vec![0.0; cfg.d_in]
                } else {
                    (0..cfg.d_in).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
                }
            })
            .collect();
        Ok(Self { cfg, vocab, alphabet, separator, templates })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Noise-free frame of a label id (the separator is all zeros).
    pub fn template(&self, id: usize) -> &[f64] {
        &self.templates[id]
    }

    /// The random transcript of an utterance seed.
    pub fn transcript(&self, seed: u64) -> Vec<usize> {
        self.plan(&mut self.rng(seed)).0
    }

    fn rng(&self, seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed ^ self.cfg.task_seed.rotate_left(32))
    }

    /// Transcript and frames per label.
    fn plan(&self, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
        let c = &self.cfg;
        let len = rng.random_range(c.min_len..=c.max_len);
        let mut labels: Vec<usize> = Vec::with_capacity(len);
        while labels.len() < len {
            let last = labels.last().copied();
            let room = labels.len() + 1 < len;
            let sym = if room && last.is_some_and(|l| l != self.separator) && rng.random_bool(c.word_break) {
                self.separator
            } else {
                loop {
                    let s = self.alphabet[rng.random_range(0..self.alphabet.len())];
                    if Some(s) != last {
                        break s;
                    }
                }
            };
            labels.push(sym);
        }
        let frames = labels.iter().map(|_| rng.random_range(c.min_frames..=c.max_frames)).collect();
        (labels, frames)
    }

    fn spans(&self, frames: &[usize]) -> Vec<(usize, usize)> {
        let mut at = self.cfg.pad_frames;
        frames
            .iter()
            .map(|&n| {
                at += n;
                (at - n, at)
            })
            .collect()
    }

    /// Template features `[T, d_in]` and labels for an utterance seed.
    pub fn utterance(&self, seed: u64) -> Utterance {
        let c = &self.cfg;
        let mut rng = self.rng(seed);
        let (labels, frames) = self.plan(&mut rng);
        let offset: Vec<f64> = (0..c.d_in).map(|_| c.offset * rng.sample::<f64, _>(StandardNormal)).collect();
        let spans = self.spans(&frames);
        let total = frames.iter().sum::<usize>() + 2 * c.pad_frames;
        let mut ids = vec![self.separator; total];
        for (&label, &(a, b)) in labels.iter().zip(&spans) {
            ids[a..b].fill(label);
        }
        let data = ids
            .iter()
            .flat_map(|&id| self.templates[id].iter().zip(&offset).map(|(t, o)| t + o).collect::<Vec<_>>())
            .map(|v| v + c.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let features = Tensor::new(vec![total, c.d_in], data).expect("shape matches");
        Utterance { features, labels, spans }
    }

    /// The two tone frequencies of a label id.
    pub fn chord(&self, id: usize) -> (f64, f64) {
        let k = self.alphabet.iter().position(|&a| a == id).unwrap_or(0);
        let grid = |i: usize| 250.0 * 1.3f64.powi(i as i32);
        (grid(k % 6), grid(6 + k / 6))
    }

    /// The utterance as 16 kHz audio: 10 ms per frame, chords for letters,
    /// noise at level `sigma · 0.01` throughout, and a random gain.
    pub fn audio(&self, seed: u64) -> (Vec<f64>, Vec<usize>) {
        let c = &self.cfg;
        let mut rng = self.rng(seed);
        let (labels, frames) = self.plan(&mut rng);
        let gain = 0.3 * (c.offset * rng.sample::<f64, _>(StandardNormal)).exp().min(2.5);
        let hop = (SAMPLE_RATE / 100.0) as usize;
        let pad = vec![0.0; c.pad_frames * hop];
        let noise = Normal::new(0.0, 0.01 * c.sigma.max(1e-3)).expect("valid std");
        let mut pcm = pad.clone();
        for (&label, &n) in labels.iter().zip(&frames) {
            let len = n * hop;
            if label == self.separator {
                pcm.extend(std::iter::repeat_n(0.0, len));
                continue;
            }
            let (fa, fb) = self.chord(label);
            let start = pcm.len();
            pcm.extend((0..len).map(|i| {
                let t = (start + i) as f64 / SAMPLE_RATE;
                let ramp = ((i.min(len - 1 - i) as f64) / 40.0).min(1.0);
                0.5 * ramp * gain * ((std::f64::consts::TAU * fa * t).sin() + (std::f64::consts::TAU * fb * t).sin())
            }));
        }
        pcm.extend(&pad);
        // Extra tail so the last frame window fits.
        pcm.extend(std::iter::repeat_n(0.0, 240));
        for v in &mut pcm {
            *v += noise.sample(&mut rng);
        }
        (pcm, labels)
    }

    /// Audio rendering passed through the offline frontend.
    pub fn audio_utterance(&self, seed: u64, fcfg: &FeatureConfig) -> Result<Utterance> {
        let (pcm, labels) = self.audio(seed);
        let features = extract(&pcm, fcfg)?;
        let (_, frames) = self.plan(&mut self.rng(seed));
        let spans = self.spans(&frames);
        Ok(Utterance { features, labels, spans })
    }
}
