use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::numcore::Tensor;

use super::FeatureConfig;

/// Floor applied before every logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(hz: f64) -> f64 {
    1127.0 * (1.0 + hz / 700.0).ln()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * ((mel / 1127.0).exp() - 1.0)
}

/// Triangular HTK-style mel filters over the one-sided power spectrum,
/// spanning 0 Hz to Nyquist, with a Hamming window and FFT plan.
#[derive(Clone)]
pub struct MelBank {
    pub frame_len: usize,
    pub fft_len: usize,
    /// `filters[m][k]`: weight of FFT bin `k` in mel band `m`.
    pub filters: Vec<Vec<f64>>,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    include_energy: bool,
}

impl std::fmt::Debug for MelBank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MelBank").field("frame_len", &self.frame_len).field("fft_len", &self.fft_len).finish()
    }
}

impl MelBank {
    pub fn new(cfg: &FeatureConfig) -> Self {
        let frame_len = cfg.frame_len();
        let fft_len = frame_len.next_power_of_two();
        let bins = fft_len / 2 + 1;
        let rate = cfg.sample_rate_hz as f64;
        let (lo, hi) = (hz_to_mel(0.0), hz_to_mel(rate / 2.0));
        let centers: Vec<f64> =
            (0..cfg.n_mels + 2).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64)).collect();
        let filters = (0..cfg.n_mels)
            .map(|m| {
                let (left, center, right) = (centers[m], centers[m + 1], centers[m + 2]);
                (0..bins)
                    .map(|k| {
                        let f = k as f64 * rate / fft_len as f64;
                        if f <= left || f >= right {
                            0.0
                        } else if f <= center {
                            (f - left) / (center - left)
                        } else {
                            (right - f) / (right - center)
                        }
                    })
                    .collect()
            })
            .collect();
        let window = (0..frame_len)
            .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (frame_len - 1) as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(fft_len);
        Self { frame_len, fft_len, filters, window, fft, include_energy: cfg.include_energy }
    }

    pub fn dim(&self) -> usize {
        self.filters.len() + usize::from(self.include_energy)
    }

    /// One-sided power spectrum of a Hamming-windowed, zero-padded frame.
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .zip(&self.window)
            .map(|(x, w)| Complex::new(x * w, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(self.fft_len)
            .collect();
        self.fft.process(&mut buf);
        buf[..self.fft_len / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
    }

    /// Log mel energies of one frame, then the log frame energy.
    pub fn frame(&self, frame: &[f64]) -> Vec<f64> {
        debug_assert_eq!(frame.len(), self.frame_len);
        let power = self.power_spectrum(frame);
        let mut out: Vec<f64> = self
            .filters
            .iter()
            .map(|f| f.iter().zip(&power).map(|(w, p)| w * p).sum::<f64>().max(LOG_FLOOR).ln())
            .collect();
        if self.include_energy {
            out.push(frame.iter().map(|x| x * x).sum::<f64>().max(LOG_FLOOR).ln());
        }
        out
    }
}

/// Number of whole frames in `n` samples.
pub fn frame_count(n: usize, frame_len: usize, shift: usize) -> usize {
    if n < frame_len {
        0
    } else {
        1 + (n - frame_len) / shift
    }
}

/// Log mel filterbank (plus log energy) features, `[T, n_mels + 1]`.
pub fn fbank(pcm: &[f64], cfg: &FeatureConfig) -> Result<Tensor> {
    let bank = MelBank::new(cfg);
    fbank_with(&bank, pcm, cfg)
}

pub fn fbank_with(bank: &MelBank, pcm: &[f64], cfg: &FeatureConfig) -> Result<Tensor> {
    let (len, shift) = (cfg.frame_len(), cfg.frame_shift());
    let t = frame_count(pcm.len(), len, shift);
    if t == 0 {
        return Err(Error::Input(format!("{} samples is shorter than one {len}-sample frame", pcm.len())));
    }
    if let Some(bad) = pcm.iter().find(|v| !v.is_finite()) {
        return Err(Error::Input(format!("non-finite sample {bad}")));
    }
    let rows: Vec<Vec<f64>> = (0..t).map(|i| bank.frame(&pcm[i * shift..i * shift + len])).collect();
    Tensor::from_rows(&rows, bank.dim())
}
