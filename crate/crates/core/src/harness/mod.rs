//! Experiment orchestration: synthetic corpus generation, quality/ASR table
//! reproduction, budget sweeps, spectrogram export, and run manifests.

mod corpus;
mod spectro;
mod tables;

pub use corpus::{gen_corpus, Corpus, CorpusItem, CorpusSpec, NoiseKind, NoisyVariant};
pub use spectro::export_spectrogram;
pub use tables::{
    run_asr_table, run_budget_sweep, run_quality_tables, AsrTableInputs, AttackCase,
    DirectionalCheck, NamedTable, QualityTableInputs, QualityTables, SweepSummary,
};

use crate::signal::SignalError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("configuration error: missing checkpoint {0}")]
    MissingCheckpoint(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Asr(#[from] crate::asr::AsrError),
    #[error(transparent)]
    Attack(#[from] crate::attack::AttackError),
    #[error("enhance: {0}")]
    Enhance(String),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(String),
}

impl From<crate::enhance::EnhanceError> for HarnessError {
    fn from(e: crate::enhance::EnhanceError) -> Self {
        HarnessError::Enhance(e.to_string())
    }
}

/// Everything needed to re-run a pipeline step bit-identically, plus
/// wall-clock provenance (the timestamp is informational and excluded from
/// reproducibility comparisons).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub checkpoint_hashes: BTreeMap<String, String>,
    pub command_line: Vec<String>,
    pub timestamp_unix_s: u64,
}

impl ExperimentManifest {
    pub fn new(config_json: &str, seeds: Vec<u64>) -> Self {
        ExperimentManifest {
            config_hash: sha256_hex(config_json.as_bytes()),
            seeds,
            checkpoint_hashes: BTreeMap::new(),
            command_line: std::env::args().collect(),
            timestamp_unix_s: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn record_file(&mut self, label: &str, path: &Path) -> Result<(), HarnessError> {
        let bytes = std::fs::read(path)?;
        self.checkpoint_hashes
            .insert(label.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        let json = serde_json::to_string_pretty(self).map_err(|e| HarnessError::Serde(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Serde(e.to_string()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Stable hash of a training dataset (sample bytes in pair order).
pub fn dataset_hash(pairs: &[(crate::signal::Waveform, crate::signal::Waveform)]) -> String {
    let mut hasher = Sha256::new();
    for (a, b) in pairs {
        for s in a.samples.iter().chain(&b.samples) {
            hasher.update(s.to_le_bytes());
        }
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests;
