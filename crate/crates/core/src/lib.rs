//! Adversarial speech workbench.
//!
//! A self-contained laboratory for studying adversarial examples against a
//! toy CTC speech recognizer and defending it with speech enhancement:
//!
//! - [`signal`] — deterministic DSP kernel: framing, spectra, MFCC, filtering,
//!   channel simulation, and WAV I/O.
//! - [`tensorgrad`] — minimal reverse-mode gradient engine and Adam optimizer.
//! - [`metrics`] — SNR, PESQ-core, STI, STOI, WER, edit similarity, report
//!   bundling.
//! - [`asr`] — surrogate recognizer: MFCC → 1-D conv stack → CTC loss and
//!   greedy decoding.
//! - [`attack`] — gradient, over-the-air, evolutionary, FGSM, and adaptive
//!   budget-sweep adversarial example generators.
//! - [`enhance`] — attention-gated U-Net separator plus plain U-Net and DNN
//!   baselines, with standard and adversarial training.
//! - [`harness`] — corpus synthesis, experiment orchestration, and report
//!   emission.
//!
//! All randomized operations take explicit seeds and are deterministic;
//! completed models are immutable snapshots safe to share across threads.

pub mod asr;
pub mod attack;
pub mod enhance;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod signal;
pub mod tensorgrad;

pub use error::Error;
