//! Evaluation indices: SNR, PESQ-core, STI, STOI, WER, edit similarity,
//! and report bundling.
//!
//! PESQ here is "PESQ-core": the published aggregation
//! `4.5 - 0.1*d_sym - 0.0309*d_asym` computed over a simplified bark-loudness
//! disturbance model, not an ITU-T P.862 implementation. STI drops the 8 kHz
//! octave band (unreachable at 16 kHz sampling) and renormalizes the band
//! weights.

mod pesq;
mod report;
mod sti;
mod stoi;
mod text;

pub use pesq::{pesq_core, pesq_from_disturbances};
pub use report::{reports_to_csv, reports_to_markdown, EvalReport};
pub use sti::{sti, transmission_index};
pub use stoi::stoi;
pub use text::{edit_similarity, levenshtein, wer};

use crate::signal::{SignalError, Waveform};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("silent reference signal")]
    SilentReference,
    #[error("insufficient modulation in octave band {band_hz} Hz")]
    InsufficientModulation { band_hz: f64 },
    #[error("signal too short for {context}: need {needed} samples, got {got}")]
    TooShort {
        context: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("empty reference")]
    EmptyReference,
    #[error("{field}: {source}")]
    Field {
        field: &'static str,
        #[source]
        source: Box<MetricError>,
    },
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Signal-to-noise ratio of a perturbation against a reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr {
    Db(f64),
    /// Zero-power perturbation.
    Infinite,
}

impl Snr {
    /// dB value, with `Infinite` mapped to `f64::INFINITY`.
    pub fn as_db(self) -> f64 {
        match self {
            Snr::Db(v) => v,
            Snr::Infinite => f64::INFINITY,
        }
    }
}

/// `10*log10(P_x / P_v)` with `P = (1/T) Σ s_t²`.
pub fn snr(reference: &Waveform, perturbation: &Waveform) -> Result<Snr, MetricError> {
    if reference.len() != perturbation.len() {
        return Err(MetricError::Parameter(format!(
            "length mismatch: reference {} vs perturbation {}",
            reference.len(),
            perturbation.len()
        )));
    }
    let px = reference.power();
    if px == 0.0 {
        return Err(MetricError::SilentReference);
    }
    let pv = perturbation.power();
    if pv == 0.0 {
        return Ok(Snr::Infinite);
    }
    Ok(Snr::Db(10.0 * (px / pv).log10()))
}

/// Like [`snr`] but failing on the zero-perturbation case as well, for
/// callers that need a finite number.
pub fn snr_db(reference: &Waveform, perturbation: &Waveform) -> Result<f64, MetricError> {
    match snr(reference, perturbation)? {
        Snr::Db(v) => Ok(v),
        Snr::Infinite => Err(MetricError::Parameter(
            "zero-power perturbation has infinite SNR".into(),
        )),
    }
}

/// Evaluate every computable index of a (clean, degraded) pair. Texts are
/// optional; without them `wer_pct` stays empty. `rosa_pct` is an
/// aggregate quantity and is filled by attack campaigns, not here.
pub fn evaluate_bundle(
    clean: &Waveform,
    degraded: &Waveform,
    reference_text: Option<&str>,
    hypothesis_text: Option<&str>,
    condition: impl Into<String>,
) -> Result<EvalReport, MetricError> {
    fn attribute<T>(field: &'static str, r: Result<T, MetricError>) -> Result<T, MetricError> {
        r.map_err(|e| MetricError::Field {
            field,
            source: Box::new(e),
        })
    }

    if clean.len() != degraded.len() {
        return Err(MetricError::Parameter(format!(
            "length mismatch: clean {} vs degraded {}",
            clean.len(),
            degraded.len()
        )));
    }
    let perturbation = Waveform {
        samples: clean
            .samples
            .iter()
            .zip(&degraded.samples)
            .map(|(c, d)| d - c)
            .collect(),
        sample_rate_hz: clean.sample_rate_hz,
    };
    let snr_val = attribute("snr", snr(clean, &perturbation))?;
    let pesq = attribute("pesq", pesq_core(clean, degraded))?;
    let sti_val = attribute("sti", sti(clean, degraded))?;
    let stoi_val = attribute("stoi", stoi(clean, degraded))?;
    let wer_pct = match (reference_text, hypothesis_text) {
        (Some(r), Some(h)) => {
            let rw: Vec<&str> = r.split_whitespace().collect();
            let hw: Vec<&str> = h.split_whitespace().collect();
            Some(attribute("wer", wer(&rw, &hw))?)
        }
        _ => None,
    };
    EvalReport::new(condition, pesq, sti_val, stoi_val, snr_val.as_db(), wer_pct, None)
}

#[cfg(test)]
mod tests;
