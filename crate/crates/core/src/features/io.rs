//! WAV input and feature dumps.
//!
//! A feature dump is a flat little-endian fp32 blob of rows plus a sidecar
//! `<blob>.txt` manifest of `key=value` lines: `format`, `dtype`, `shape`
//! (`T,d`) and `config_hash`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numcore::Tensor;

const FORMAT: &str = "msa-feature-dump";

/// Reads a mono 16-bit PCM WAV as samples in [-1, 1).
pub fn read_wav(path: &Path, sample_rate_hz: u32) -> Result<Vec<f64>> {
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Input(format!(
            "{}: expected mono 16-bit PCM, got {} channel(s), {} bits",
            path.display(),
            spec.channels,
            spec.bits_per_sample
        )));
    }
    if spec.sample_rate != sample_rate_hz {
        return Err(Error::Input(format!(
            "{}: sample rate {} Hz, expected {sample_rate_hz} Hz",
            path.display(),
            spec.sample_rate
        )));
    }
    reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0).map_err(|e| wav_error(path, e)))
        .collect()
}

/// Writes samples (clipped to [-1, 1]) as mono 16-bit PCM.
pub fn write_wav(path: &Path, pcm: &[f64], sample_rate_hz: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &x in pcm {
        let v = (x.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(source) => Error::io(path, source),
        other => Error::Input(format!("{}: {other}", path.display())),
    }
}

/// Features of one utterance with the hash of the config that made them.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDump {
    pub features: Tensor,
    pub config_hash: String,
}

fn manifest_path(blob: &Path) -> PathBuf {
    let mut name = blob.as_os_str().to_owned();
    name.push(".txt");
    PathBuf::from(name)
}

pub fn write_feature_dump(blob: &Path, dump: &FeatureDump) -> Result<()> {
    let f = &dump.features;
    if f.rank() != 2 {
        return Err(Error::dim("write_feature_dump", format!("expected [T, d], got {:?}", f.shape())));
    }
    let bytes: Vec<u8> = f.data().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    fs::write(blob, bytes).map_err(|e| Error::io(blob, e))?;
    let manifest = format!(
        "format={FORMAT}\ndtype=f32\nshape={},{}\nconfig_hash={}\n",
        f.shape()[0],
        f.shape()[1],
        dump.config_hash
    );
    let path = manifest_path(blob);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

pub fn read_feature_dump(blob: &Path) -> Result<FeatureDump> {
    let path = manifest_path(blob);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let bad = |msg: String| Error::Input(format!("{}: {msg}", path.display()));
    let mut format = None;
    let mut shape = None;
    let mut hash = None;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("malformed line {line:?}")))?;
        match k {
            "format" => format = Some(v.to_string()),
            "dtype" if v != "f32" => return Err(bad(format!("unsupported dtype {v:?}"))),
            "dtype" => {}
            "shape" => {
                let dims: Vec<usize> = v
                    .split(',')
                    .map(|d| d.trim().parse().map_err(|_| bad(format!("bad shape {v:?}"))))
                    .collect::<Result<_>>()?;
                if dims.len() != 2 {
                    return Err(bad(format!("shape {v:?} is not [T, d]")));
                }
                shape = Some((dims[0], dims[1]));
            }
            "config_hash" => hash = Some(v.to_string()),
            other => return Err(bad(format!("unknown key {other:?}"))),
        }
    }
    if format.as_deref() != Some(FORMAT) {
        return Err(bad(format!("not a {FORMAT} manifest")));
    }
    let (t, d) = shape.ok_or_else(|| bad("missing shape".into()))?;
    let config_hash = hash.ok_or_else(|| bad("missing config_hash".into()))?;
    let bytes = fs::read(blob).map_err(|e| Error::io(blob, e))?;
    if Some(bytes.len()) != t.checked_mul(d).and_then(|n| n.checked_mul(4)) {
        return Err(bad(format!("shape {t}x{d} does not match a {}-byte blob", bytes.len())));
    }
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect();
    Ok(FeatureDump { features: Tensor::new(vec![t, d], data)?, config_hash })
}
