//! The defense: speech enhancement by source separation.
//!
//! Three model kinds share one interface:
//!
//! - `unet_at` — 1-D U-Net whose up path gates each skip connection with
//!   causal windowed scaled-dot-product attention before concatenation;
//! - `unet_w` — the same topology with plain skip concatenation;
//! - `dnn` — a log-power-spectrogram regression MLP with ±3 frame context,
//!   rebuilt to a waveform with the noisy phase.
//!
//! Training minimizes waveform MSE against the clean source (two-source
//! models also regress the separated perturbation); adversarial training
//! blends the clean-batch loss with a loss on FGSM-perturbed mixtures.

mod dnn;
mod train;
mod unet;

pub use dnn::{dnn_enhanced_log_power, DnnConfig};
pub use train::{adversarial_train, train_enhancer, TrainReport, TrainingConfig};
pub use unet::{attention_gate, UNetConfig};

use crate::signal::{SignalError, Waveform};
use crate::tensorgrad::{GradError, Graph, ParameterSet, Tensor, Var};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnhanceError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Attack(#[from] Box<crate::attack::AttackError>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnhancerKind {
    Dnn,
    UnetW,
    UnetAt,
}

impl std::fmt::Display for EnhancerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EnhancerKind::Dnn => "dnn",
            EnhancerKind::UnetW => "unet_w",
            EnhancerKind::UnetAt => "unet_at",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnhancerConfig {
    Unet(UNetConfig),
    Dnn(DnnConfig),
}

impl EnhancerConfig {
    pub fn input_len(&self) -> usize {
        match self {
            EnhancerConfig::Unet(c) => c.input_len,
            EnhancerConfig::Dnn(c) => c.input_len,
        }
    }
}

/// An enhancement model: immutable parameters plus its architecture config.
#[derive(Debug, Clone)]
pub struct EnhancerModel {
    pub kind: EnhancerKind,
    pub params: ParameterSet,
    pub config: EnhancerConfig,
}

impl EnhancerModel {
    /// Seeded random initialization for the requested kind.
    pub fn new_random(kind: EnhancerKind, config: EnhancerConfig, seed: u64) -> Result<Self, EnhanceError> {
        let params = match (&kind, &config) {
            (EnhancerKind::Dnn, EnhancerConfig::Dnn(c)) => dnn::init_params(c, seed)?,
            (EnhancerKind::UnetW, EnhancerConfig::Unet(c)) => unet::init_params(c, false, seed)?,
            (EnhancerKind::UnetAt, EnhancerConfig::Unet(c)) => unet::init_params(c, true, seed)?,
            _ => {
                return Err(EnhanceError::Parameter(
                    "config kind does not match model kind".into(),
                ))
            }
        };
        Ok(EnhancerModel {
            kind,
            params,
            config,
        })
    }

    pub fn input_len(&self) -> usize {
        self.config.input_len()
    }

    /// Build the forward graph from a 1-D waveform variable of `input_len`
    /// samples. Returns `(s_clean, s_adv)`; the DNN has no second source.
    ///
    /// With `bound` the parameters enter as gradient targets (training);
    /// otherwise they are constants.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        wave: Var,
        bound: Option<&crate::tensorgrad::BoundParams>,
    ) -> Result<(Var, Option<Var>), EnhanceError> {
        let t = g.value(wave).len();
        if t != self.input_len() {
            return Err(EnhanceError::Shape(format!(
                "input length {} != configured input_len {}",
                t,
                self.input_len()
            )));
        }
        match (&self.kind, &self.config) {
            (EnhancerKind::Dnn, EnhancerConfig::Dnn(c)) => {
                let out = dnn::forward_graph(c, &self.params, g, wave, bound)?;
                Ok((out, None))
            }
            (kind, EnhancerConfig::Unet(c)) => {
                let gated = *kind == EnhancerKind::UnetAt;
                let (s_clean, s_adv) =
                    unet::forward_graph(c, &self.params, g, wave, gated, bound)?;
                Ok((s_clean, Some(s_adv)))
            }
            _ => Err(EnhanceError::Parameter(
                "config kind does not match model kind".into(),
            )),
        }
    }

    /// Separate one exact-length window; returns `(s_clean, s_adv)` values.
    pub fn separate(&self, w: &Waveform) -> Result<(Waveform, Option<Waveform>), EnhanceError> {
        let mut g = Graph::new();
        let wave = g.constant(Tensor::from_vec(w.samples.clone()));
        let (clean, adv) = self.forward_graph(&mut g, wave, None)?;
        let s_clean = Waveform {
            samples: g.value(clean).data().to_vec(),
            sample_rate_hz: w.sample_rate_hz,
        };
        let s_adv = adv.map(|v| Waveform {
            samples: g.value(v).data().to_vec(),
            sample_rate_hz: w.sample_rate_hz,
        });
        Ok((s_clean, s_adv))
    }

    pub fn save(
        &self,
        checkpoint: &Path,
        sidecar: &Path,
        manifest: Option<&train::TrainingManifest>,
    ) -> Result<(), EnhanceError> {
        crate::tensorgrad::save_ntv1(&self.params, checkpoint)?;
        let meta = EnhancerSidecar {
            kind: self.kind,
            config: self.config.clone(),
            training: manifest.cloned(),
        };
        let json = serde_json::to_string_pretty(&meta)
            .map_err(|e| EnhanceError::Checkpoint(e.to_string()))?;
        std::fs::write(sidecar, json).map_err(|e| EnhanceError::Checkpoint(e.to_string()))?;
        Ok(())
    }

    pub fn load(checkpoint: &Path, sidecar: &Path) -> Result<Self, EnhanceError> {
        let params = crate::tensorgrad::load_ntv1(checkpoint)?;
        let text = std::fs::read_to_string(sidecar)
            .map_err(|e| EnhanceError::Checkpoint(e.to_string()))?;
        let meta: EnhancerSidecar =
            serde_json::from_str(&text).map_err(|e| EnhanceError::Checkpoint(e.to_string()))?;
        match (&meta.kind, &meta.config) {
            (EnhancerKind::Dnn, EnhancerConfig::Dnn(_)) => {}
            (EnhancerKind::UnetW | EnhancerKind::UnetAt, EnhancerConfig::Unet(_)) => {}
            _ => {
                return Err(EnhanceError::Checkpoint(
                    "sidecar kind does not match its config flavor".into(),
                ))
            }
        }
        Ok(EnhancerModel {
            kind: meta.kind,
            params,
            config: meta.config,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct EnhancerSidecar {
    kind: EnhancerKind,
    config: EnhancerConfig,
    training: Option<train::TrainingManifest>,
}

/// Enhance a waveform of any length: chunk into `input_len` windows at 50%
/// overlap, forward each, and reassemble by triangular-weighted overlap-add
/// (normalized by the accumulated weight). Short signals are zero-padded and
/// trimmed back.
pub fn enhance_waveform(model: &EnhancerModel, w: &Waveform) -> Result<Waveform, EnhanceError> {
    let chunk = model.input_len();
    let hop = chunk / 2;
    let padded_len = if w.len() <= chunk {
        chunk
    } else {
        // cover the tail with a final full chunk
        hop * w.len().div_ceil(hop) + chunk - hop
    };
    let mut padded = w.samples.clone();
    padded.resize(padded_len, 0.0);

    let tri: Vec<f64> = (0..chunk)
        .map(|i| {
            let x = (i as f64 + 0.5) / chunk as f64;
            1.0 - (2.0 * x - 1.0).abs()
        })
        .collect();
    let mut acc = vec![0.0; padded_len];
    let mut weight = vec![0.0; padded_len];
    let mut start = 0usize;
    while start + chunk <= padded_len {
        let piece = Waveform {
            samples: padded[start..start + chunk].to_vec(),
            sample_rate_hz: w.sample_rate_hz,
        };
        let (s_clean, _) = model.separate(&piece)?;
        for i in 0..chunk {
            acc[start + i] += tri[i] * s_clean.samples[i];
            weight[start + i] += tri[i];
        }
        if start + chunk == padded_len {
            break;
        }
        start += hop;
    }
    let samples = (0..w.len())
        .map(|i| acc[i] / weight[i].max(1e-12))
        .collect();
    Ok(Waveform {
        samples,
        sample_rate_hz: w.sample_rate_hz,
    })
}

#[cfg(test)]
mod tests;
