//! MFCC extraction as fixed matrix products.
//!
//! The whole pipeline — framing gather, Hann window, DFT magnitude via paired
//! cosine/sine bases, triangular mel filterbank, log with floor, truncated
//! DCT-II — is expressed as matrix products and elementwise maps so the
//! gradient engine can differentiate an identical graph all the way back to
//! the waveform.

use super::{frame_count, hann_window, SignalError, Waveform};
use crate::tensorgrad::Tensor;
use serde::{Deserialize, Serialize};

/// frames × n_coeff feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Vec<f64>,
    pub frames: usize,
    pub n_coeff: usize,
}

impl FeatureMatrix {
    pub fn row(&self, f: usize) -> &[f64] {
        &self.values[f * self.n_coeff..(f + 1) * self.n_coeff]
    }

    /// Euclidean distance to another feature matrix of identical shape.
    pub fn l2_distance(&self, other: &FeatureMatrix) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub n_coeff: usize,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            frame_len: 512,
            hop: 256,
            n_mels: 26,
            n_coeff: 13,
            log_floor: 1e-10,
        }
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Precomputed MFCC bases for one (config, sample-rate) pair. Building the
/// plan costs a few hundred thousand trig evaluations; reuse it in loops.
#[derive(Debug, Clone)]
pub struct MfccPlan {
    pub config: MfccConfig,
    pub sample_rate_hz: u32,
    /// Hann window, `[frame_len]`.
    pub window: Vec<f64>,
    /// `[frame_len, bins]` cosine DFT basis.
    pub cos_basis: Tensor,
    /// `[frame_len, bins]` sine DFT basis.
    pub sin_basis: Tensor,
    /// `[bins, n_mels]` triangular mel filterbank.
    pub mel_weights: Tensor,
    /// `[n_mels, n_coeff]` truncated DCT-II basis.
    pub dct_basis: Tensor,
}

impl MfccPlan {
    pub fn new(config: MfccConfig, sample_rate_hz: u32) -> Result<Self, SignalError> {
        if config.n_coeff > config.n_mels {
            return Err(SignalError::Parameter(format!(
                "n_coeff ({}) must not exceed n_mels ({})",
                config.n_coeff, config.n_mels
            )));
        }
        if config.frame_len == 0 || config.hop == 0 || config.n_mels == 0 || config.n_coeff == 0 {
            return Err(SignalError::Parameter(
                "mfcc dimensions must all be >= 1".into(),
            ));
        }
        if config.log_floor <= 0.0 {
            return Err(SignalError::Parameter("mfcc log floor must be > 0".into()));
        }
        let n = config.frame_len;
        let bins = n / 2 + 1;
        let mut cos_basis = vec![0.0; n * bins];
        let mut sin_basis = vec![0.0; n * bins];
        for i in 0..n {
            for k in 0..bins {
                let angle = -2.0 * std::f64::consts::PI * (i * k) as f64 / n as f64;
                cos_basis[i * bins + k] = angle.cos();
                sin_basis[i * bins + k] = angle.sin();
            }
        }

        let nyquist = sample_rate_hz as f64 / 2.0;
        let mel_max = hz_to_mel(nyquist);
        let centers: Vec<f64> = (0..config.n_mels + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (config.n_mels + 1) as f64))
            .collect();
        let mut mel_weights = vec![0.0; bins * config.n_mels];
        for k in 0..bins {
            let f = k as f64 * sample_rate_hz as f64 / n as f64;
            for m in 0..config.n_mels {
                let (lo, mid, hi) = (centers[m], centers[m + 1], centers[m + 2]);
                let w = if f <= lo || f >= hi {
                    0.0
                } else if f <= mid {
                    (f - lo) / (mid - lo)
                } else {
                    (hi - f) / (hi - mid)
                };
                mel_weights[k * config.n_mels + m] = w;
            }
        }

        let mut dct_basis = vec![0.0; config.n_mels * config.n_coeff];
        for m in 0..config.n_mels {
            for j in 0..config.n_coeff {
                dct_basis[m * config.n_coeff + j] = (std::f64::consts::PI * j as f64
                    * (m as f64 + 0.5)
                    / config.n_mels as f64)
                    .cos();
            }
        }

        Ok(MfccPlan {
            config,
            sample_rate_hz,
            window: hann_window(n),
            cos_basis: Tensor::new(vec![n, bins], cos_basis).expect("basis shape"),
            sin_basis: Tensor::new(vec![n, bins], sin_basis).expect("basis shape"),
            mel_weights: Tensor::new(vec![bins, config.n_mels], mel_weights)
                .expect("filterbank shape"),
            dct_basis: Tensor::new(vec![config.n_mels, config.n_coeff], dct_basis)
                .expect("dct shape"),
        })
    }

    pub fn bins(&self) -> usize {
        self.config.frame_len / 2 + 1
    }

    pub fn frames_for(&self, t: usize) -> Option<usize> {
        frame_count(t, self.config.frame_len, self.config.hop)
    }

    /// MFCC features by plain (ungraphed) evaluation of the matrix pipeline.
    pub fn compute(&self, w: &Waveform) -> Result<FeatureMatrix, SignalError> {
        let cfg = &self.config;
        let frames = self.frames_for(w.len()).ok_or(SignalError::TooShort {
            context: "mfcc",
            needed: cfg.frame_len,
            got: w.len(),
        })?;
        let n = cfg.frame_len;
        let bins = self.bins();
        let mut windowed = vec![0.0; frames * n];
        for f in 0..frames {
            for i in 0..n {
                windowed[f * n + i] = w.samples[f * cfg.hop + i] * self.window[i];
            }
        }
        let re = crate::tensorgrad::matmul(&windowed, self.cos_basis.data(), frames, n, bins);
        let im = crate::tensorgrad::matmul(&windowed, self.sin_basis.data(), frames, n, bins);
        let mut power = vec![0.0; frames * bins];
        for i in 0..power.len() {
            power[i] = re[i] * re[i] + im[i] * im[i];
        }
        let mut logmel = crate::tensorgrad::matmul(
            &power,
            self.mel_weights.data(),
            frames,
            bins,
            cfg.n_mels,
        );
        for v in logmel.iter_mut() {
            *v = v.max(cfg.log_floor).ln();
        }
        let values = crate::tensorgrad::matmul(
            &logmel,
            self.dct_basis.data(),
            frames,
            cfg.n_mels,
            cfg.n_coeff,
        );
        Ok(FeatureMatrix {
            values,
            frames,
            n_coeff: cfg.n_coeff,
        })
    }
}

/// One-shot MFCC extraction with a freshly built plan. For repeated calls
/// construct an [`MfccPlan`] once.
pub fn mfcc(w: &Waveform, config: MfccConfig) -> Result<FeatureMatrix, SignalError> {
    MfccPlan::new(config, w.sample_rate_hz)?.compute(w)
}
