//! Toy sequence-to-text recognizer: MFCC features feed a three-layer 1-D
//! convolutional frame classifier trained with CTC and decoded greedily.
//!
//! The whole forward pass (including MFCC extraction) can be built inside a
//! [`Graph`] so attack objectives differentiate end-to-end back to the
//! waveform.

use crate::signal::{FeatureMatrix, MfccConfig, MfccPlan, SignalError, Waveform};
use crate::tensorgrad::{
    adam_step, bind_parameters, AdamState, GradError, Graph, ParameterSet, Tensor, Var,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AsrError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("character {0:?} not in vocabulary")]
    OutOfVocabulary(char),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Ordered character set with exactly one blank symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    characters: Vec<char>,
    blank_index: usize,
}

impl Vocabulary {
    /// 26 lowercase letters + space + blank (blank last).
    pub fn default_lowercase() -> Self {
        let mut characters: Vec<char> = ('a'..='z').collect();
        characters.push(' ');
        characters.push('\u{2205}'); // blank marker, never emitted
        Vocabulary {
            blank_index: characters.len() - 1,
            characters,
        }
    }

    pub fn new(characters: Vec<char>, blank_index: usize) -> Result<Self, AsrError> {
        if characters.len() < 2 {
            return Err(AsrError::Parameter("vocabulary needs size >= 2".into()));
        }
        if blank_index >= characters.len() {
            return Err(AsrError::Parameter("blank index out of range".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if !characters.iter().all(|c| seen.insert(*c)) {
            return Err(AsrError::Parameter("duplicate vocabulary entry".into()));
        }
        Ok(Vocabulary {
            characters,
            blank_index,
        })
    }

    pub fn len(&self) -> usize {
        self.characters.len()
    }

    pub fn blank_index(&self) -> usize {
        self.blank_index
    }

    /// Index of a non-blank character.
    pub fn index_of(&self, c: char) -> Option<usize> {
        self.characters
            .iter()
            .position(|&x| x == c)
            .filter(|&i| i != self.blank_index)
    }

    /// Character at an index; `None` for the blank.
    pub fn char_at(&self, i: usize) -> Option<char> {
        if i == self.blank_index {
            None
        } else {
            self.characters.get(i).copied()
        }
    }
}

/// Text over the vocabulary (blank excluded).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transcript(pub String);

impl Transcript {
    pub fn new(text: impl Into<String>, vocab: &Vocabulary) -> Result<Self, AsrError> {
        let text = text.into();
        for c in text.chars() {
            if vocab.index_of(c).is_none() {
                return Err(AsrError::OutOfVocabulary(c));
            }
        }
        Ok(Transcript(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn label_indices(&self, vocab: &Vocabulary) -> Result<Vec<usize>, AsrError> {
        self.0
            .chars()
            .map(|c| vocab.index_of(c).ok_or(AsrError::OutOfVocabulary(c)))
            .collect()
    }

    pub fn words(&self) -> Vec<&str> {
        self.0.split_whitespace().collect()
    }
}

const HIDDEN: usize = 32;
const KERNEL: usize = 5;
const LEAKY_SLOPE: f64 = 0.1;

/// The surrogate recognizer: immutable once trained; forwards are pure.
#[derive(Debug, Clone)]
pub struct SurrogateAsr {
    pub params: ParameterSet,
    pub vocab: Vocabulary,
    pub mfcc: MfccConfig,
    pub sample_rate_hz: u32,
    plan: MfccPlan,
}

impl SurrogateAsr {
    pub fn layer_widths(vocab: &Vocabulary, mfcc: &MfccConfig) -> [usize; 4] {
        [mfcc.n_coeff, HIDDEN, HIDDEN, vocab.len()]
    }

    /// Fresh model with seeded uniform fan-in initialization.
    pub fn new_random(
        vocab: Vocabulary,
        mfcc: MfccConfig,
        sample_rate_hz: u32,
        seed: u64,
    ) -> Result<Self, AsrError> {
        let plan = MfccPlan::new(mfcc, sample_rate_hz)?;
        let widths = Self::layer_widths(&vocab, &mfcc);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterSet::new();
        for layer in 0..3 {
            let (c_in, c_out) = (widths[layer], widths[layer + 1]);
            let limit = (6.0 / (c_in * KERNEL) as f64).sqrt();
            let kernel: Vec<f64> = (0..c_out * c_in * KERNEL)
                .map(|_| rng.gen_range(-limit..limit))
                .collect();
            params.insert(
                format!("conv{layer}.weight"),
                Tensor::new(vec![c_out, c_in, KERNEL], kernel)?,
            )?;
            params.insert(format!("conv{layer}.bias"), Tensor::zeros(vec![c_out]))?;
        }
        Ok(SurrogateAsr {
            params,
            vocab,
            mfcc,
            sample_rate_hz,
            plan,
        })
    }

    pub fn plan(&self) -> &MfccPlan {
        &self.plan
    }

    /// Differentiable MFCC pipeline from a waveform variable.
    pub fn mfcc_graph(&self, g: &mut Graph, wave: Var) -> Result<Var, GradError> {
        mfcc_graph(&self.plan, g, wave)
    }

    /// Conv-stack logits `[frames, k]` from a feature variable
    /// `[frames, n_coeff]`. With `params` bound, gradients reach the weights
    /// (training); otherwise weights enter as constants (attacks).
    pub fn logits_from_features_graph(
        &self,
        g: &mut Graph,
        features: Var,
        params: Option<&crate::tensorgrad::BoundParams>,
    ) -> Result<Var, GradError> {
        let mut layer_in = g.transpose(features)?; // [n_coeff, frames]
        for layer in 0..3 {
            let wname = format!("conv{layer}.weight");
            let bname = format!("conv{layer}.bias");
            let (w, b) = match params {
                Some(bound) => (
                    bound.var(&wname).expect("bound weight"),
                    bound.var(&bname).expect("bound bias"),
                ),
                None => (
                    g.constant(self.params.get(&wname).expect("weight").clone()),
                    g.constant(self.params.get(&bname).expect("bias").clone()),
                ),
            };
            let conv = g.conv1d(layer_in, w, 1, KERNEL / 2)?;
            let biased = g.add_channel_bias(conv, b)?;
            layer_in = if layer < 2 {
                g.leaky_relu(biased, LEAKY_SLOPE)
            } else {
                biased
            };
        }
        g.transpose(layer_in) // [frames, k]
    }

    /// Full waveform→logits graph (used by gradient attacks).
    pub fn logits_graph(&self, g: &mut Graph, wave: Var) -> Result<Var, GradError> {
        let features = self.mfcc_graph(g, wave)?;
        self.logits_from_features_graph(g, features, None)
    }

    /// Plain forward pass: logits tensor `[frames, k]`.
    pub fn forward(&self, w: &Waveform) -> Result<Tensor, AsrError> {
        if self.plan.frames_for(w.len()).is_none() {
            return Err(AsrError::Signal(SignalError::TooShort {
                context: "asr_forward",
                needed: self.mfcc.frame_len,
                got: w.len(),
            }));
        }
        let mut g = Graph::new();
        let wave = g.constant(Tensor::from_vec(w.samples.clone()));
        let logits = self.logits_graph(&mut g, wave)?;
        Ok(g.value(logits).clone())
    }

    /// Logits from precomputed features (the fast decode path).
    pub fn forward_features(&self, f: &FeatureMatrix) -> Result<Tensor, AsrError> {
        let mut g = Graph::new();
        let feat = g.constant(Tensor::new(vec![f.frames, f.n_coeff], f.values.clone())?);
        let logits = self.logits_from_features_graph(&mut g, feat, None)?;
        Ok(g.value(logits).clone())
    }

    /// Greedy transcription of a waveform.
    pub fn transcribe(&self, w: &Waveform) -> Result<Transcript, AsrError> {
        let features = self.plan.compute(w)?;
        let logits = self.forward_features(&features)?;
        Ok(greedy_decode(&logits, &self.vocab))
    }

    pub fn save(&self, checkpoint: &Path, sidecar: &Path) -> Result<(), AsrError> {
        crate::tensorgrad::save_ntv1(&self.params, checkpoint)?;
        let meta = AsrSidecar {
            vocab: self.vocab.clone(),
            mfcc: self.mfcc,
            sample_rate_hz: self.sample_rate_hz,
            layer_widths: Self::layer_widths(&self.vocab, &self.mfcc).to_vec(),
        };
        let json = serde_json::to_string_pretty(&meta)
            .map_err(|e| AsrError::Checkpoint(e.to_string()))?;
        std::fs::write(sidecar, json).map_err(|e| AsrError::Checkpoint(e.to_string()))?;
        Ok(())
    }

    pub fn load(checkpoint: &Path, sidecar: &Path) -> Result<Self, AsrError> {
        let params = crate::tensorgrad::load_ntv1(checkpoint)?;
        let text =
            std::fs::read_to_string(sidecar).map_err(|e| AsrError::Checkpoint(e.to_string()))?;
        let meta: AsrSidecar =
            serde_json::from_str(&text).map_err(|e| AsrError::Checkpoint(e.to_string()))?;
        let plan = MfccPlan::new(meta.mfcc, meta.sample_rate_hz)?;
        Ok(SurrogateAsr {
            params,
            vocab: meta.vocab,
            mfcc: meta.mfcc,
            sample_rate_hz: meta.sample_rate_hz,
            plan,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct AsrSidecar {
    vocab: Vocabulary,
    mfcc: MfccConfig,
    sample_rate_hz: u32,
    layer_widths: Vec<usize>,
}

/// Differentiable MFCC pipeline over an existing plan: framing gather, Hann
/// window, paired cosine/sine DFT bases, mel filterbank, floored log,
/// truncated DCT — matrix products and elementwise maps only.
pub fn mfcc_graph(plan: &MfccPlan, g: &mut Graph, wave: Var) -> Result<Var, GradError> {
    let cfg = &plan.config;
    let frames = g.frame_signal(wave, cfg.frame_len, cfg.hop)?;
    let n_frames = g.value(frames).shape()[0];
    let mut window_rows = Vec::with_capacity(n_frames * cfg.frame_len);
    for _ in 0..n_frames {
        window_rows.extend_from_slice(&plan.window);
    }
    let window = g.constant(Tensor::new(vec![n_frames, cfg.frame_len], window_rows)?);
    let windowed = g.mul(frames, window)?;
    let cos_b = g.constant(plan.cos_basis.clone());
    let sin_b = g.constant(plan.sin_basis.clone());
    let re = g.matmul(windowed, cos_b)?;
    let im = g.matmul(windowed, sin_b)?;
    let re2 = g.mul(re, re)?;
    let im2 = g.mul(im, im)?;
    let power = g.add(re2, im2)?;
    let mel_w = g.constant(plan.mel_weights.clone());
    let mel = g.matmul(power, mel_w)?;
    let floored = g.clamp_min(mel, cfg.log_floor);
    let logmel = g.ln(floored)?;
    let dct = g.constant(plan.dct_basis.clone());
    g.matmul(logmel, dct)
}

/// CTC negative log-likelihood of `target` under `logits` (raw scores; a
/// log-softmax is applied internally).
pub fn ctc_loss(logits: &Tensor, target: &Transcript, vocab: &Vocabulary) -> Result<f64, AsrError> {
    let labels = target.label_indices(vocab)?;
    let mut g = Graph::new();
    let l = g.constant(logits.clone());
    let logp = g.log_softmax(l)?;
    let loss = g.ctc_loss(logp, &labels, vocab.blank_index())?;
    Ok(g.value(loss).item()?)
}

/// Per-frame argmax (ties toward the lower index), collapse repeats, strip
/// blanks.
pub fn greedy_decode(logits: &Tensor, vocab: &Vocabulary) -> Transcript {
    let k = vocab.len();
    let mut out = String::new();
    let mut prev: Option<usize> = None;
    for row in logits.data().chunks(k) {
        let mut best = 0usize;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        if prev != Some(best) {
            if let Some(c) = vocab.char_at(best) {
                out.push(c);
            }
        }
        prev = Some(best);
    }
    Transcript(out)
}

/// One training item: precomputed features plus the reference transcript.
#[derive(Debug, Clone)]
pub struct AsrTrainItem {
    pub features: FeatureMatrix,
    pub transcript: Transcript,
}

/// Whole-corpus-batch Adam training of a fresh surrogate. Returns the model
/// and the per-epoch mean CTC loss history. Deterministic per seed.
pub fn train_surrogate(
    vocab: Vocabulary,
    mfcc: MfccConfig,
    sample_rate_hz: u32,
    items: &[AsrTrainItem],
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<(SurrogateAsr, Vec<f64>), AsrError> {
    if items.is_empty() {
        return Err(AsrError::Parameter("empty training corpus".into()));
    }
    let mut model = SurrogateAsr::new_random(vocab, mfcc, sample_rate_hz, seed)?;
    let mut state = AdamState::new(&model.params, lr);
    let mut history = Vec::with_capacity(epochs);
    let scale = 1.0 / items.len() as f64;
    for _ in 0..epochs {
        let mut g = Graph::new();
        let bound = bind_parameters(&mut g, &model.params);
        let mut total: Option<Var> = None;
        for item in items {
            let feat = g.constant(Tensor::new(
                vec![item.features.frames, item.features.n_coeff],
                item.features.values.clone(),
            )?);
            let logits = model.logits_from_features_graph(&mut g, feat, Some(&bound))?;
            let logp = g.log_softmax(logits)?;
            let labels = item.transcript.label_indices(&model.vocab)?;
            let loss = g.ctc_loss(logp, &labels, model.vocab.blank_index())?;
            total = Some(match total {
                Some(t) => g.add(t, loss)?,
                None => loss,
            });
        }
        let mean_loss = g.mul_scalar(total.expect("non-empty corpus"), scale);
        history.push(g.value(mean_loss).item()?);
        let grads = g.backward(mean_loss)?;
        let grad_vec = bound.collect_grads(&grads)?;
        adam_step(&mut model.params, &grad_vec, &mut state)?;
    }
    Ok((model, history))
}

/// Greedy-decode WER (%) over a feature-matrix evaluation set.
pub fn eval_wer(model: &SurrogateAsr, items: &[AsrTrainItem]) -> Result<f64, AsrError> {
    if items.is_empty() {
        return Err(AsrError::Parameter("empty evaluation set".into()));
    }
    let mut total = 0.0;
    for item in items {
        let logits = model.forward_features(&item.features)?;
        let decoded = greedy_decode(&logits, &model.vocab);
        let r = item.transcript.words();
        let h = decoded.words();
        total +=
            crate::metrics::wer(&r, &h).map_err(|e| AsrError::Parameter(format!("wer: {e}")))?;
    }
    Ok(total / items.len() as f64)
}

#[cfg(test)]
mod tests;
