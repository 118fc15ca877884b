//! Short-time objective intelligibility.
//!
//! 400-sample Hann frames at 50% overlap (512-point FFT), 15 one-third
//! octave bands from 150 Hz, 30-frame segments. Per band and segment the
//! degraded vector is scaled to the clean energy, clipped at -15 dB
//! signal-to-distortion, and correlated with the clean vector; the score is
//! the mean correlation. Frames more than 40 dB below the clean peak are
//! removed first.

use super::MetricError;
use crate::signal::{fft, hann_window, Waveform};

const FRAME_LEN: usize = 400;
const HOP: usize = 200;
const FFT_LEN: usize = 512;
const N_BANDS: usize = 15;
const FIRST_CENTER_HZ: f64 = 150.0;
const SEGMENT_FRAMES: usize = 30;
const SILENCE_RANGE_DB: f64 = 40.0;
const CLIP_SDR_DB: f64 = -15.0;

/// Band amplitude per frame: `[frames][N_BANDS]`.
fn third_octave_levels(w: &Waveform, keep: Option<&[usize]>) -> Vec<Vec<f64>> {
    let window = hann_window(FRAME_LEN);
    let sr = w.sample_rate_hz as f64;
    // band edge bins
    let mut band_bins: Vec<Vec<usize>> = vec![Vec::new(); N_BANDS];
    for bin in 0..FFT_LEN / 2 + 1 {
        let f = bin as f64 * sr / FFT_LEN as f64;
        for (b, bins) in band_bins.iter_mut().enumerate() {
            let center = FIRST_CENTER_HZ * 2f64.powf(b as f64 / 3.0);
            let lo = center / 2f64.powf(1.0 / 6.0);
            let hi = center * 2f64.powf(1.0 / 6.0);
            if f >= lo && f < hi {
                bins.push(bin);
            }
        }
    }
    let frame_starts: Vec<usize> = match keep {
        Some(idx) => idx.iter().map(|&f| f * HOP).collect(),
        None => (0..1 + (w.len() - FRAME_LEN) / HOP).map(|f| f * HOP).collect(),
    };
    let mut out = Vec::with_capacity(frame_starts.len());
    let mut buf = vec![0.0; FFT_LEN];
    for &start in &frame_starts {
        buf[..FRAME_LEN]
            .iter_mut()
            .enumerate()
            .for_each(|(i, b)| *b = w.samples[start + i] * window[i]);
        buf[FRAME_LEN..].fill(0.0);
        let power = fft::real_power_spectrum(&buf);
        let levels: Vec<f64> = band_bins
            .iter()
            .map(|bins| bins.iter().map(|&k| power[k]).sum::<f64>().sqrt())
            .collect();
        out.push(levels);
    }
    out
}

/// Pearson correlation with an exact shortcut: equal vectors (as happens for
/// an undistorted channel after normalization) must score exactly 1.
fn pearson(x: &[f64], y: &[f64]) -> f64 {
    if x == y {
        return 1.0;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let denom = (sxx * syy).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        sxy / denom
    }
}

/// STOI score; exactly 1.0 for identical inputs and invariant to degraded
/// amplitude scaling by powers of two.
pub fn stoi(clean: &Waveform, degraded: &Waveform) -> Result<f64, MetricError> {
    if clean.len() != degraded.len() || clean.sample_rate_hz != degraded.sample_rate_hz {
        return Err(MetricError::Parameter(format!(
            "length/rate mismatch: clean {} vs degraded {}",
            clean.len(),
            degraded.len()
        )));
    }
    if clean.len() < FRAME_LEN {
        return Err(MetricError::TooShort {
            context: "stoi",
            needed: FRAME_LEN,
            got: clean.len(),
        });
    }
    // silence removal on clean-frame energy
    let n_frames = 1 + (clean.len() - FRAME_LEN) / HOP;
    let energies: Vec<f64> = (0..n_frames)
        .map(|f| {
            clean.samples[f * HOP..f * HOP + FRAME_LEN]
                .iter()
                .map(|x| x * x)
                .sum()
        })
        .collect();
    let peak = energies.iter().cloned().fold(0.0f64, f64::max);
    let threshold = peak * 10f64.powf(-SILENCE_RANGE_DB / 10.0);
    let keep: Vec<usize> = (0..n_frames).filter(|&f| energies[f] > threshold).collect();
    if keep.len() < SEGMENT_FRAMES {
        return Err(MetricError::TooShort {
            context: "stoi segments",
            needed: SEGMENT_FRAMES,
            got: keep.len(),
        });
    }

    let xl = third_octave_levels(clean, Some(&keep));
    let yl = third_octave_levels(degraded, Some(&keep));

    let clip_gain = 1.0 + 10f64.powf(CLIP_SDR_DB / 20.0);
    let mut total = 0.0;
    let mut count = 0usize;
    let mut xseg = vec![0.0; SEGMENT_FRAMES];
    let mut yseg = vec![0.0; SEGMENT_FRAMES];
    for band in 0..N_BANDS {
        for end in SEGMENT_FRAMES..=xl.len() {
            let seg = end - SEGMENT_FRAMES..end;
            for (i, f) in seg.clone().enumerate() {
                xseg[i] = xl[f][band];
                yseg[i] = yl[f][band];
            }
            let ex: f64 = xseg.iter().map(|v| v * v).sum();
            let ey: f64 = yseg.iter().map(|v| v * v).sum();
            let alpha = if ey > 0.0 { (ex / ey).sqrt() } else { 0.0 };
            let clipped: Vec<f64> = yseg
                .iter()
                .zip(&xseg)
                .map(|(&y, &x)| (y * alpha).min(x * clip_gain))
                .collect();
            total += pearson(&xseg, &clipped);
            count += 1;
        }
    }
    Ok(total / count as f64)
}
