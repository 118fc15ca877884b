//! Synthetic formant-style corpus.
//!
//! Each character maps to a voiced segment of three harmonics of a
//! per-character base frequency (120–300 Hz); the harmonic numbers are also
//! character-dependent so segments are spectrally distinctive. Words are
//! separated by the space character's silence. Noisy variants mix seeded
//! noise at exact SNR levels.

use super::HarnessError;
use crate::asr::{Transcript, Vocabulary};
use crate::attack::mix_seed;
use crate::metrics::snr_db;
use crate::signal::{fft, Waveform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    White,
    Pink,
    BabbleLike,
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
            NoiseKind::BabbleLike => "babble",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_utterances: usize,
    pub utterance_len: usize,
    pub phrases: Vec<String>,
    pub snr_levels_db: Vec<f64>,
    pub noise_kinds: Vec<NoiseKind>,
    pub sample_rate_hz: u32,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_utterances: 16,
            utterance_len: 16384,
            phrases: vec![
                "red cat".into(),
                "blue sky".into(),
                "green bird".into(),
                "hot tea".into(),
                "cold rain".into(),
                "big dog".into(),
                "old map".into(),
                "new song".into(),
            ],
            snr_levels_db: vec![15.0, 10.0, 5.0, 0.0],
            noise_kinds: vec![NoiseKind::White],
            sample_rate_hz: 16000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NoisyVariant {
    pub kind: NoiseKind,
    pub snr_db: f64,
    pub waveform: Waveform,
}

#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub id: String,
    pub clean: Waveform,
    pub transcript: Transcript,
    pub noisy: Vec<NoisyVariant>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub spec: CorpusSpec,
    pub items: Vec<CorpusItem>,
}

/// Per-character voicing parameters: base frequency in 120–300 Hz plus the
/// two upper harmonic numbers that make characters spectrally separable.
fn char_voice(c: char) -> (f64, usize, usize) {
    let idx = (c as u8 - b'a') as usize;
    let f0 = 120.0 + 180.0 * idx as f64 / 25.0;
    (f0, 2 + idx % 6, 8 + idx % 13)
}

/// One clean utterance: leading/trailing margins, per-character harmonic
/// segments with rise/fall envelopes, silence for spaces.
fn synthesize_utterance(
    phrase: &str,
    len: usize,
    sample_rate_hz: u32,
    rng: &mut ChaCha8Rng,
) -> Waveform {
    let chars: Vec<char> = phrase.chars().collect();
    let margin = len / 16;
    let body = len - 2 * margin;
    let seg_len = body / chars.len();
    let pitch_jitter = 1.0 + rng.gen_range(-0.03..0.03);
    let amp_jitter = 1.0 + rng.gen_range(-0.1..0.1);
    let mut samples = vec![0.0; len];
    let sr = sample_rate_hz as f64;
    for (ci, &c) in chars.iter().enumerate() {
        if c == ' ' {
            continue;
        }
        let (f0, k2, k3) = char_voice(c);
        let f0 = f0 * pitch_jitter;
        let start = margin + ci * seg_len;
        let ramp = (seg_len / 8).max(1);
        for i in 0..seg_len {
            let t = (start + i) as f64 / sr;
            let env = (i as f64 / ramp as f64).min(1.0)
                * ((seg_len - 1 - i) as f64 / ramp as f64).min(1.0);
            let mut v = (2.0 * std::f64::consts::PI * f0 * t).sin();
            v += 0.6 * (2.0 * std::f64::consts::PI * f0 * k2 as f64 * t).sin();
            v += 0.4 * (2.0 * std::f64::consts::PI * f0 * k3 as f64 * t).sin();
            samples[start + i] = 0.22 * amp_jitter * env * v;
        }
    }
    Waveform {
        samples,
        sample_rate_hz,
    }
}

fn unit_noise(kind: NoiseKind, len: usize, sample_rate_hz: u32, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        NoiseKind::White => (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        NoiseKind::Pink => {
            let white: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            fft::apply_frequency_mask(&white, sample_rate_hz, |f| {
                if f <= 0.0 {
                    0.0
                } else {
                    (20.0 / f.max(20.0)).sqrt()
                }
            })
        }
        NoiseKind::BabbleLike => {
            // a few overlapping pseudo-utterances of random characters
            let vocabulary: Vec<char> = ('a'..='z').collect();
            let mut acc = vec![0.0; len];
            for _ in 0..6 {
                let phrase: String = (0..8)
                    .map(|_| vocabulary[rng.gen_range(0..26)])
                    .collect();
                let sub_seed = rng.gen::<u64>();
                let mut sub_rng = ChaCha8Rng::seed_from_u64(sub_seed);
                let utt = synthesize_utterance(&phrase, len, sample_rate_hz, &mut sub_rng);
                let shift = rng.gen_range(0..len);
                for (i, s) in utt.samples.iter().enumerate() {
                    acc[(i + shift) % len] += s / 6.0;
                }
            }
            acc
        }
    }
}

/// Deterministic corpus synthesis; the measured SNR of every noisy variant
/// matches the requested level by construction.
pub fn gen_corpus(spec: &CorpusSpec) -> Result<Corpus, HarnessError> {
    if spec.phrases.is_empty() {
        return Err(HarnessError::Parameter("empty phrase inventory".into()));
    }
    if spec.n_utterances == 0 || spec.utterance_len < 1024 {
        return Err(HarnessError::Parameter(
            "need n_utterances >= 1 and utterance_len >= 1024".into(),
        ));
    }
    let vocab = Vocabulary::default_lowercase();
    let mut items = Vec::with_capacity(spec.n_utterances);
    for u in 0..spec.n_utterances {
        let phrase = &spec.phrases[u % spec.phrases.len()];
        let transcript = Transcript::new(phrase.clone(), &vocab)
            .map_err(|e| HarnessError::Parameter(format!("phrase {phrase:?}: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, u as u64, 0));
        let clean = synthesize_utterance(phrase, spec.utterance_len, spec.sample_rate_hz, &mut rng);
        let p_clean = clean.power();
        let mut noisy = Vec::new();
        for (ki, &kind) in spec.noise_kinds.iter().enumerate() {
            for (si, &snr) in spec.snr_levels_db.iter().enumerate() {
                let noise_seed = mix_seed(spec.seed, u as u64, (1 + ki * 97 + si) as u64);
                let unit = unit_noise(kind, spec.utterance_len, spec.sample_rate_hz, noise_seed);
                let p_unit: f64 =
                    unit.iter().map(|s| s * s).sum::<f64>() / unit.len() as f64;
                let scale = (p_clean / (p_unit * 10f64.powf(snr / 10.0))).sqrt();
                let waveform = Waveform {
                    samples: clean
                        .samples
                        .iter()
                        .zip(&unit)
                        .map(|(c, n)| c + scale * n)
                        .collect(),
                    sample_rate_hz: spec.sample_rate_hz,
                };
                noisy.push(NoisyVariant {
                    kind,
                    snr_db: snr,
                    waveform,
                });
            }
        }
        items.push(CorpusItem {
            id: format!("utt{u:03}"),
            clean,
            transcript,
            noisy,
        });
    }
    let corpus = Corpus {
        spec: spec.clone(),
        items,
    };
    // the mixing definition is the SNR definition; double-check one variant
    if let Some(item) = corpus.items.first() {
        if let Some(v) = item.noisy.first() {
            let noise = Waveform {
                samples: v
                    .waveform
                    .samples
                    .iter()
                    .zip(&item.clean.samples)
                    .map(|(n, c)| n - c)
                    .collect(),
                sample_rate_hz: spec.sample_rate_hz,
            };
            let measured = snr_db(&item.clean, &noise)?;
            debug_assert!((measured - v.snr_db).abs() < 0.1);
        }
    }
    Ok(corpus)
}

#[derive(Serialize, Deserialize)]
struct CorpusIndex {
    spec: CorpusSpec,
    items: Vec<CorpusIndexItem>,
}

#[derive(Serialize, Deserialize)]
struct CorpusIndexItem {
    id: String,
    clean_file: String,
    text: String,
    noisy: Vec<(NoiseKind, f64, String)>,
}

impl Corpus {
    /// Write WAVs plus `transcripts.csv` (`file,text`) and a JSON index.
    pub fn save(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        let mut csv = String::from("file,text\n");
        let mut index = CorpusIndex {
            spec: self.spec.clone(),
            items: Vec::new(),
        };
        for item in &self.items {
            let clean_file = format!("{}.wav", item.id);
            crate::signal::wav_write(&item.clean, &dir.join(&clean_file))?;
            csv.push_str(&format!("{},{}\n", clean_file, item.transcript.as_str()));
            let mut noisy = Vec::new();
            for v in &item.noisy {
                let file = format!("{}_{}_{}db.wav", item.id, v.kind, v.snr_db.round() as i64);
                crate::signal::wav_write(&v.waveform, &dir.join(&file))?;
                noisy.push((v.kind, v.snr_db, file));
            }
            index.items.push(CorpusIndexItem {
                id: item.id.clone(),
                clean_file,
                text: item.transcript.as_str().to_string(),
                noisy,
            });
        }
        std::fs::write(dir.join("transcripts.csv"), csv)?;
        let json = serde_json::to_string_pretty(&index)
            .map_err(|e| HarnessError::Serde(e.to_string()))?;
        std::fs::write(dir.join("corpus_index.json"), json)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Corpus, HarnessError> {
        let text = std::fs::read_to_string(dir.join("corpus_index.json"))?;
        let index: CorpusIndex =
            serde_json::from_str(&text).map_err(|e| HarnessError::Serde(e.to_string()))?;
        let vocab = Vocabulary::default_lowercase();
        let mut items = Vec::new();
        for it in index.items {
            let clean = crate::signal::wav_read(&dir.join(&it.clean_file))?;
            let transcript = Transcript::new(it.text, &vocab)?;
            let mut noisy = Vec::new();
            for (kind, snr, file) in it.noisy {
                noisy.push(NoisyVariant {
                    kind,
                    snr_db: snr,
                    waveform: crate::signal::wav_read(&dir.join(&file))?,
                });
            }
            items.push(CorpusItem {
                id: it.id,
                clean,
                transcript,
                noisy,
            });
        }
        Ok(Corpus {
            spec: index.spec,
            items,
        })
    }

    /// Split by utterance: the first `n_train` utterances train, the rest
    /// are held out.
    pub fn split(&self, n_train: usize) -> (Vec<&CorpusItem>, Vec<&CorpusItem>) {
        let n = n_train.min(self.items.len());
        let (a, b) = self.items.split_at(n);
        (a.iter().collect(), b.iter().collect())
    }
}

/// Feature items (clean + all noisy variants) for surrogate training.
pub fn asr_items(
    items: &[&CorpusItem],
    plan: &crate::signal::MfccPlan,
) -> Result<Vec<crate::asr::AsrTrainItem>, HarnessError> {
    let mut out = Vec::new();
    for item in items {
        out.push(crate::asr::AsrTrainItem {
            features: plan.compute(&item.clean)?,
            transcript: item.transcript.clone(),
        });
        for v in &item.noisy {
            out.push(crate::asr::AsrTrainItem {
                features: plan.compute(&v.waveform)?,
                transcript: item.transcript.clone(),
            });
        }
    }
    Ok(out)
}
