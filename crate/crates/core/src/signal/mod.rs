//! Deterministic DSP kernel shared by attacks, metrics, and models: framing,
//! spectra, MFCC, filtering, channel simulation, and WAV I/O.
//!
//! Every operation is a pure function of its inputs; randomized operations
//! (noise, synthetic impulse responses) take explicit seeds and draw from
//! ChaCha8, so identical seeds give bit-identical outputs.

mod channel;
pub(crate) mod fft;
mod mfcc;
mod wav;

pub use channel::{apply_channel, convolve_ir, correlate_adjoint, ChannelModel};
pub use mfcc::{mfcc, FeatureMatrix, MfccConfig, MfccPlan};
pub use wav::{wav_read, wav_write};

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("signal too short: {context} needs at least {needed} samples, got {got}")]
    TooShort {
        context: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("wav format error in {field}: {message}")]
    Format { field: &'static str, message: String },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Mono sampled audio. Samples are dimensionless amplitudes, nominally in
/// `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self, SignalError> {
        if samples.is_empty() {
            return Err(SignalError::TooShort {
                context: "waveform",
                needed: 1,
                got: 0,
            });
        }
        if sample_rate_hz == 0 {
            return Err(SignalError::Parameter("sample rate must be > 0".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(SignalError::NonFinite(i));
        }
        Ok(Waveform {
            samples,
            sample_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Mean power (1/T)Σx².
    pub fn power(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64
    }

    pub fn rms(&self) -> f64 {
        self.power().sqrt()
    }
}

/// frames × bins matrix of spectral values (power, or log-power after
/// [`log_power`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Vec<f64>,
    pub frames: usize,
    pub bins: usize,
    pub frame_len: usize,
    pub hop: usize,
}

impl Spectrogram {
    pub fn row(&self, f: usize) -> &[f64] {
        &self.values[f * self.bins..(f + 1) * self.bins]
    }

    pub fn total_energy(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Number of full frames: `1 + floor((T - frame_len)/hop)` for `T >= frame_len`.
pub fn frame_count(t: usize, frame_len: usize, hop: usize) -> Option<usize> {
    if t < frame_len || frame_len == 0 || hop == 0 {
        None
    } else {
        Some(1 + (t - frame_len) / hop)
    }
}

/// Power spectrogram: Hann-windowed frames, magnitude-squared real DFT,
/// `bins = frame_len/2 + 1`.
pub fn stft(w: &Waveform, frame_len: usize, hop: usize) -> Result<Spectrogram, SignalError> {
    if frame_len == 0 || hop == 0 {
        return Err(SignalError::Parameter(
            "frame_len and hop must be >= 1".into(),
        ));
    }
    let frames = frame_count(w.len(), frame_len, hop).ok_or(SignalError::TooShort {
        context: "stft",
        needed: frame_len,
        got: w.len(),
    })?;
    let window = hann_window(frame_len);
    let bins = frame_len / 2 + 1;
    let mut values = Vec::with_capacity(frames * bins);
    let mut buf = vec![0.0; frame_len];
    for f in 0..frames {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = w.samples[f * hop + i] * window[i];
        }
        let spec = fft::real_power_spectrum(&buf);
        values.extend_from_slice(&spec);
    }
    Ok(Spectrogram {
        values,
        frames,
        bins,
        frame_len,
        hop,
    })
}

/// Elementwise `ln(max(power, floor))`.
pub fn log_power(s: &Spectrogram, floor: f64) -> Result<Spectrogram, SignalError> {
    if floor <= 0.0 {
        return Err(SignalError::Parameter(format!(
            "log floor must be > 0, got {floor}"
        )));
    }
    let values = s.values.iter().map(|&p| p.max(floor).ln()).collect();
    Ok(Spectrogram { values, ..s.clone() })
}

/// Zero-phase band-pass by frequency-domain masking with raised-cosine
/// transitions of `TRANSITION_HZ` on each edge. Length-preserving.
pub fn bandpass(w: &Waveform, low_hz: f64, high_hz: f64) -> Result<Waveform, SignalError> {
    let nyquist = w.sample_rate_hz as f64 / 2.0;
    if !(0.0 < low_hz && low_hz < high_hz && high_hz < nyquist) {
        return Err(SignalError::Parameter(format!(
            "band edges ({low_hz}, {high_hz}) must satisfy 0 < low < high < {nyquist}"
        )));
    }
    let samples = fft::apply_frequency_mask(&w.samples, w.sample_rate_hz, |f| {
        band_mask(f, low_hz, high_hz)
    });
    Ok(Waveform {
        samples,
        sample_rate_hz: w.sample_rate_hz,
    })
}

/// Transition width of the band-pass mask edges.
pub const TRANSITION_HZ: f64 = 100.0;

fn raised_cosine_step(x: f64) -> f64 {
    // 0 at x<=0, 1 at x>=1, half-cosine in between
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        0.5 * (1.0 - (std::f64::consts::PI * x).cos())
    }
}

fn band_mask(f: f64, low: f64, high: f64) -> f64 {
    let rise = raised_cosine_step((f - (low - TRANSITION_HZ)) / TRANSITION_HZ);
    let fall = 1.0 - raised_cosine_step((f - high) / TRANSITION_HZ);
    rise * fall
}

/// The band-pass mask as a raw linear operator on samples. Zero-phase and
/// real, so the operator is self-adjoint; gradient code reuses it as its own
/// transpose.
pub fn bandpass_adjointable(
    samples: &[f64],
    low_hz: f64,
    high_hz: f64,
    sample_rate_hz: u32,
) -> Vec<f64> {
    fft::apply_frequency_mask(samples, sample_rate_hz, |f| band_mask(f, low_hz, high_hz))
}

/// Zero-phase low-pass (used for envelope smoothing in the metrics).
pub fn lowpass(w: &Waveform, cutoff_hz: f64) -> Result<Waveform, SignalError> {
    let nyquist = w.sample_rate_hz as f64 / 2.0;
    if !(0.0 < cutoff_hz && cutoff_hz < nyquist) {
        return Err(SignalError::Parameter(format!(
            "cutoff {cutoff_hz} must lie in (0, {nyquist})"
        )));
    }
    let samples = fft::apply_frequency_mask(&w.samples, w.sample_rate_hz, |f| {
        1.0 - raised_cosine_step((f - cutoff_hz) / TRANSITION_HZ)
    });
    Ok(Waveform {
        samples,
        sample_rate_hz: w.sample_rate_hz,
    })
}

/// Additive white Gaussian noise drawn from ChaCha8 seeded with `seed`.
/// `sigma = 0` returns the input unchanged.
pub fn add_white_noise(w: &Waveform, sigma: f64, seed: u64) -> Result<Waveform, SignalError> {
    if sigma < 0.0 {
        return Err(SignalError::Parameter(format!(
            "noise sigma must be >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(w.clone());
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let samples = w
        .samples
        .iter()
        .map(|&x| x + normal.sample(&mut rng))
        .collect();
    Ok(Waveform {
        samples,
        sample_rate_hz: w.sample_rate_hz,
    })
}

#[cfg(test)]
mod tests;
