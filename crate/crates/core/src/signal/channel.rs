//! Simulated playback/recording channel: impulse-response convolution,
//! perturbation band-passing, and additive Gaussian noise.

use super::{add_white_noise, bandpass, fft, SignalError, Waveform};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Impulse-response bank plus band-pass edges and noise level for the
/// over-the-air model `x̄ = Conv(x + BPF(v), h) + w`.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    pub impulse_responses: Vec<Waveform>,
    pub bpf_low_hz: f64,
    pub bpf_high_hz: f64,
    pub noise_sigma: f64,
}

impl ChannelModel {
    pub fn new(
        impulse_responses: Vec<Waveform>,
        bpf_low_hz: f64,
        bpf_high_hz: f64,
        noise_sigma: f64,
    ) -> Result<Self, SignalError> {
        if impulse_responses.is_empty() {
            return Err(SignalError::Parameter(
                "channel bank must contain at least one impulse response".into(),
            ));
        }
        if noise_sigma < 0.0 {
            return Err(SignalError::Parameter("noise sigma must be >= 0".into()));
        }
        let sr = impulse_responses[0].sample_rate_hz;
        for ir in &impulse_responses {
            if ir.sample_rate_hz != sr {
                return Err(SignalError::Parameter(
                    "all impulse responses must share one sample rate".into(),
                ));
            }
        }
        let nyquist = sr as f64 / 2.0;
        if !(0.0 < bpf_low_hz && bpf_low_hz < bpf_high_hz && bpf_high_hz < nyquist) {
            return Err(SignalError::Parameter(format!(
                "band edges ({bpf_low_hz}, {bpf_high_hz}) must satisfy 0 < low < high < {nyquist}"
            )));
        }
        Ok(ChannelModel {
            impulse_responses,
            bpf_low_hz,
            bpf_high_hz,
            noise_sigma,
        })
    }

    /// Bank of `n` synthetic exponentially-decaying sparse-echo responses.
    /// Stands in for a measured bank; deterministic per seed.
    pub fn synthetic_bank(
        n: usize,
        ir_len: usize,
        sample_rate_hz: u32,
        bpf_low_hz: f64,
        bpf_high_hz: f64,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Self, SignalError> {
        if n == 0 || ir_len < 2 {
            return Err(SignalError::Parameter(
                "synthetic bank needs n >= 1 and ir_len >= 2".into(),
            ));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut bank = Vec::with_capacity(n);
        for _ in 0..n {
            let mut h = vec![0.0; ir_len];
            h[0] = 1.0;
            let echoes = rng.gen_range(4..=10);
            for _ in 0..echoes {
                let lag = rng.gen_range(1..ir_len);
                let amp: f64 = rng.gen_range(0.05..0.4);
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                h[lag] += sign * amp * (-3.0 * lag as f64 / ir_len as f64).exp();
            }
            bank.push(Waveform::new(h, sample_rate_hz)?);
        }
        ChannelModel::new(bank, bpf_low_hz, bpf_high_hz, noise_sigma)
    }

    /// Uniform draw of an impulse-response index (the bank distribution is
    /// not specified by the channel model and is taken as uniform).
    pub fn draw_ir_index(&self, seed: u64) -> usize {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        rng.gen_range(0..self.impulse_responses.len())
    }

    pub fn save(&self, dir: &Path) -> Result<(), SignalError> {
        std::fs::create_dir_all(dir)?;
        let mut ir_files = Vec::new();
        for (i, ir) in self.impulse_responses.iter().enumerate() {
            let name = format!("ir_{i:03}.wav");
            super::wav_write(ir, &dir.join(&name))?;
            ir_files.push(name);
        }
        let desc = ChannelDescriptor {
            bpf_low_hz: self.bpf_low_hz,
            bpf_high_hz: self.bpf_high_hz,
            noise_sigma: self.noise_sigma,
            ir_files,
        };
        let json = serde_json::to_string_pretty(&desc)
            .map_err(|e| SignalError::Parameter(format!("channel descriptor: {e}")))?;
        std::fs::write(dir.join("channel.json"), json)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, SignalError> {
        let text = std::fs::read_to_string(dir.join("channel.json"))?;
        let desc: ChannelDescriptor = serde_json::from_str(&text)
            .map_err(|e| SignalError::Parameter(format!("channel descriptor: {e}")))?;
        let bank = desc
            .ir_files
            .iter()
            .map(|f| super::wav_read(&dir.join(f)))
            .collect::<Result<Vec<_>, _>>()?;
        ChannelModel::new(bank, desc.bpf_low_hz, desc.bpf_high_hz, desc.noise_sigma)
    }
}

#[derive(Serialize, Deserialize)]
struct ChannelDescriptor {
    bpf_low_hz: f64,
    bpf_high_hz: f64,
    noise_sigma: f64,
    ir_files: Vec<String>,
}

/// Linear convolution with `h`, truncated to the input length.
pub fn convolve_ir(w: &Waveform, h: &Waveform) -> Result<Waveform, SignalError> {
    if h.is_empty() {
        return Err(SignalError::Parameter("empty impulse response".into()));
    }
    let full = fft::conv_full(&w.samples, &h.samples);
    Ok(Waveform {
        samples: full[..w.len()].to_vec(),
        sample_rate_hz: w.sample_rate_hz,
    })
}

/// Adjoint of [`convolve_ir`] for gradient propagation: correlation of the
/// upstream gradient with `h`, truncated to the input length.
pub fn correlate_adjoint(grad: &[f64], h: &[f64]) -> Vec<f64> {
    // corr(g, h)_s = sum_k h_k g_{s+k}  ==  conv(g, reverse(h))_{s + K - 1}
    let rev: Vec<f64> = h.iter().rev().copied().collect();
    let full = fft::conv_full(grad, &rev);
    full[h.len() - 1..h.len() - 1 + grad.len()].to_vec()
}

/// The over-the-air composition `Conv(x + BPF(v), h[ir_index]) + noise`,
/// band-pass applied to the perturbation only.
pub fn apply_channel(
    x: &Waveform,
    v: &Waveform,
    channel: &ChannelModel,
    ir_index: usize,
    seed: u64,
) -> Result<Waveform, SignalError> {
    if x.len() != v.len() || x.sample_rate_hz != v.sample_rate_hz {
        return Err(SignalError::Parameter(format!(
            "carrier ({} @ {}) and perturbation ({} @ {}) must match",
            x.len(),
            x.sample_rate_hz,
            v.len(),
            v.sample_rate_hz
        )));
    }
    let h = channel
        .impulse_responses
        .get(ir_index)
        .ok_or_else(|| {
            SignalError::Parameter(format!(
                "ir_index {ir_index} out of range for bank of {}",
                channel.impulse_responses.len()
            ))
        })?;
    let filtered_v = bandpass(v, channel.bpf_low_hz, channel.bpf_high_hz)?;
    let mixed = Waveform {
        samples: x
            .samples
            .iter()
            .zip(&filtered_v.samples)
            .map(|(a, b)| a + b)
            .collect(),
        sample_rate_hz: x.sample_rate_hz,
    };
    let convolved = convolve_ir(&mixed, h)?;
    add_white_noise(&convolved, channel.noise_sigma, seed)
}
