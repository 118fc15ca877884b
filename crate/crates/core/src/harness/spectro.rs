//! PPM spectrogram export.

use super::HarnessError;
use crate::signal::{log_power, stft, Waveform};
use std::io::Write;
use std::path::Path;

const FRAME_LEN: usize = 512;
const HOP: usize = 256;
const LOG_FLOOR: f64 = 1e-10;

/// Log-power spectrogram rendered as a binary PPM (P6): width = frames,
/// height = bins, low frequencies at the bottom, intensity on a fixed
/// monochrome ramp. Byte-deterministic for fixed input.
pub fn export_spectrogram(w: &Waveform, path: &Path) -> Result<(), HarnessError> {
    let spec = stft(w, FRAME_LEN, HOP)?;
    let logp = log_power(&spec, LOG_FLOOR)?;
    let (min, max) = logp
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = max - min;
    let mut bytes = Vec::with_capacity(spec.frames * spec.bins * 3 + 32);
    bytes.extend_from_slice(format!("P6\n{} {}\n255\n", spec.frames, spec.bins).as_bytes());
    for row in 0..spec.bins {
        let bin = spec.bins - 1 - row; // low frequency at the bottom
        for frame in 0..spec.frames {
            let v = logp.values[frame * spec.bins + bin];
            let intensity = if span > 0.0 {
                (255.0 * (v - min) / span).round().clamp(0.0, 255.0) as u8
            } else {
                0
            };
            bytes.extend_from_slice(&[intensity, intensity, intensity]);
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}
