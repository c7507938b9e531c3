//! Data directories:
//!
//! ```text
//! <dir>/data.toml        data section of the generating config
//! <dir>/transcripts.txt  `id<TAB>text` per utterance
//! <dir>/<id>.f32         feature dump (+ <id>.f32.txt manifest)
//! <dir>/<id>.wav         audio, when rendered
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::decoding::NGramLm;
use crate::error::{Error, Result};
use crate::features::{extract, read_feature_dump, read_wav, write_feature_dump, write_wav, FeatureConfig, FeatureDump, SynthTask};
use crate::numcore::Tensor;
use crate::train::{DataConfig, DataSource, VALID_SEED_BASE};
use crate::transducer::Vocabulary;

use super::train::load_config;
use super::{report, LmTrainArgs, SynthDataArgs};

pub const DATA_CONFIG: &str = "data.toml";
pub const TRANSCRIPTS: &str = "transcripts.txt";

fn data_hash(cfg: &DataConfig) -> String {
    hex::encode(Sha256::digest(data_toml(cfg).as_bytes()))
}

fn data_toml(cfg: &DataConfig) -> String {
    toml::to_string(cfg).expect("data config serializes")
}

/// `synth-data`: writes `count` utterances; returns their ids.
pub fn cmd_synth_data(args: &SynthDataArgs, out: &mut dyn Write) -> Result<Vec<String>> {
    let mut data = load_config(args.config.as_deref(), args.preset)?.data;
    if args.audio {
        data.source = DataSource::Audio;
    }
    if let Some(n) = args.min_len {
        data.synth.min_len = n;
    }
    if let Some(n) = args.max_len {
        data.synth.max_len = n;
    }
    let task = SynthTask::new(data.synth.clone())?;
    data.features.validate()?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let cfg_path = args.out.join(DATA_CONFIG);
    fs::write(&cfg_path, data_toml(&data)).map_err(|e| Error::io(&cfg_path, e))?;
    let hash = data_hash(&data);
    let first = args.first_seed.unwrap_or(VALID_SEED_BASE);
    let mut ids = Vec::with_capacity(args.count);
    let mut transcripts = String::new();
    for i in 0..args.count as u64 {
        let id = format!("u{i:05}");
        let seed = first + i;
        let (features, labels) = match data.source {
            DataSource::Templates => {
                let u = task.utterance(seed);
                (u.features, u.labels)
            }
            DataSource::Audio => {
                let (pcm, labels) = task.audio(seed);
                write_wav(&args.out.join(format!("{id}.wav")), &pcm, data.features.sample_rate_hz)?;
                (extract(&pcm, &data.features)?, labels)
            }
        };
        write_feature_dump(&args.out.join(format!("{id}.f32")), &FeatureDump { features, config_hash: hash.clone() })?;
        transcripts.push_str(&format!("{id}\t{}\n", task.vocab().decode(&labels)));
        ids.push(id);
    }
    let tpath = args.out.join(TRANSCRIPTS);
    fs::write(&tpath, transcripts).map_err(|e| Error::io(&tpath, e))?;
    report(out, format!("wrote {} utterances ({:?} source) to {}", ids.len(), data.source, args.out.display()))?;
    Ok(ids)
}

/// A loaded data directory.
#[derive(Clone, Debug)]
pub struct DataDir {
    pub ids: Vec<String>,
    pub texts: Vec<String>,
    pub features: Vec<Tensor>,
    pub config: Option<DataConfig>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads every utterance listed in `transcripts.txt`, preferring feature
/// dumps over WAV files. Dumps must carry the hash of `data.toml`.
pub fn load_data_dir(dir: &Path) -> Result<DataDir> {
    let cfg_path = dir.join(DATA_CONFIG);
    let config: Option<DataConfig> = if cfg_path.is_file() {
        Some(toml::from_str(&read_text(&cfg_path)?).map_err(|e| Error::Config(format!("{}: {e}", cfg_path.display())))?)
    } else {
        None
    };
    let hash = config.as_ref().map(data_hash);
    let frontend = config.as_ref().map_or_else(FeatureConfig::desk, |c| c.features.clone());
    let mut out = DataDir { ids: vec![], texts: vec![], features: vec![], config };
    for (n, line) in read_text(&dir.join(TRANSCRIPTS))?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::Input(format!("{TRANSCRIPTS} line {}: expected `id<TAB>text`", n + 1)))?;
        let dump = dir.join(format!("{id}.f32"));
        let wav = dir.join(format!("{id}.wav"));
        let features = if dump.is_file() {
            let d = read_feature_dump(&dump)?;
            if hash.as_ref().is_some_and(|h| *h != d.config_hash) {
                return Err(Error::Config(format!("{}: made with a different data config", dump.display())));
            }
            d.features
        } else if wav.is_file() {
            extract(&read_wav(&wav, frontend.sample_rate_hz)?, &frontend)?
        } else {
            return Err(Error::Input(format!("no {id}.f32 or {id}.wav in {}", dir.display())));
        };
        out.ids.push(id.to_string());
        out.texts.push(text.to_string());
        out.features.push(features);
    }
    if out.ids.is_empty() {
        return Err(Error::Input(format!("{} lists no utterances", dir.join(TRANSCRIPTS).display())));
    }
    Ok(out)
}

/// `lm-train`: counts n-grams over the grapheme vocabulary.
pub fn cmd_lm_train(args: &LmTrainArgs, out: &mut dyn Write) -> Result<()> {
    let vocab = Vocabulary::graphemes();
    let lines = read_text(&args.text)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| vocab.encode(l.split_once('\t').map_or(l, |(_, t)| t)))
        .collect::<Result<Vec<_>>>()?;
    let lm = NGramLm::train(&lines, &vocab, args.order, args.k)?;
    lm.save(&args.out)?;
    report(out, format!("{}-gram LM over {} lines written to {}", args.order, lines.len(), args.out.display()))
}
