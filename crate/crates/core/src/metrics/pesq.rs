//! PESQ-core: the `a0 + a1*d_sym + a2*d_asym` aggregation over a simplified
//! bark-loudness disturbance model.
//!
//! Per frame, power spectra are binned into 20 equal-width bark bands and
//! compressed to loudness `L = P^0.23`. The symmetric disturbance is the
//! band-space L2 difference after subtracting a masking offset of 10% of the
//! larger loudness per band (floored at 0); the asymmetric disturbance keeps
//! only added-distortion terms, each weighted by
//! `min(3, ((L_deg+50)/(L_ref+50))^1.2)`.

use super::MetricError;
use crate::signal::{stft, Waveform};

const A0: f64 = 4.5;
const A1: f64 = -0.1;
const A2: f64 = -0.0309;
const N_BANDS: usize = 20;
const FRAME_LEN: usize = 512;
const HOP: usize = 256;
const COMPRESSION: f64 = 0.23;

/// The aggregation of the disturbance terms alone.
pub fn pesq_from_disturbances(d_sym: f64, d_asym: f64) -> f64 {
    A0 + A1 * d_sym + A2 * d_asym
}

fn bark(f: f64) -> f64 {
    13.0 * (0.00076 * f).atan() + 3.5 * ((f / 7500.0) * (f / 7500.0)).atan()
}

/// Map each spectrum bin to its bark band.
fn band_of_bins(bins: usize, sample_rate: u32) -> Vec<usize> {
    let nyquist = sample_rate as f64 / 2.0;
    let top = bark(nyquist);
    (0..bins)
        .map(|k| {
            let f = k as f64 * sample_rate as f64 / FRAME_LEN as f64;
            (((bark(f) / top) * N_BANDS as f64) as usize).min(N_BANDS - 1)
        })
        .collect()
}

fn loudness_frames(w: &Waveform) -> Result<Vec<[f64; N_BANDS]>, MetricError> {
    let spec = stft(w, FRAME_LEN, HOP).map_err(|e| match e {
        crate::signal::SignalError::TooShort { needed, got, .. } => MetricError::TooShort {
            context: "pesq_core",
            needed,
            got,
        },
        other => MetricError::Signal(other),
    })?;
    let bands = band_of_bins(spec.bins, w.sample_rate_hz);
    let mut out = Vec::with_capacity(spec.frames);
    for f in 0..spec.frames {
        let row = spec.row(f);
        let mut acc = [0.0f64; N_BANDS];
        for (k, &p) in row.iter().enumerate() {
            acc[bands[k]] += p;
        }
        for a in acc.iter_mut() {
            *a = a.powf(COMPRESSION);
        }
        out.push(acc);
    }
    Ok(out)
}

/// PESQ-core score of a degraded signal against its clean reference.
/// Identical inputs score exactly 4.5.
pub fn pesq_core(clean: &Waveform, degraded: &Waveform) -> Result<f64, MetricError> {
    if clean.len() != degraded.len() || clean.sample_rate_hz != degraded.sample_rate_hz {
        return Err(MetricError::Parameter(format!(
            "length/rate mismatch: clean {}@{} vs degraded {}@{}",
            clean.len(),
            clean.sample_rate_hz,
            degraded.len(),
            degraded.sample_rate_hz
        )));
    }
    let lc = loudness_frames(clean)?;
    let ld = loudness_frames(degraded)?;
    let mut d_sym = 0.0;
    let mut d_asym = 0.0;
    for (fc, fd) in lc.iter().zip(&ld) {
        let mut sym_sq = 0.0;
        let mut asym_sq = 0.0;
        for b in 0..N_BANDS {
            let (lr, lg) = (fc[b], fd[b]);
            let mask = 0.1 * lr.max(lg);
            let sym = ((lg - lr).abs() - mask).max(0.0);
            sym_sq += sym * sym;
            if lg > lr {
                let weight = ((lg + 50.0) / (lr + 50.0)).powf(1.2).min(3.0);
                let asym = ((lg - lr) - mask).max(0.0) * weight;
                asym_sq += asym * asym;
            }
        }
        d_sym += sym_sq.sqrt();
        d_asym += asym_sq.sqrt();
    }
    let n = lc.len() as f64;
    Ok(pesq_from_disturbances(d_sym / n, d_asym / n))
}
