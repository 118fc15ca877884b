//! Spectrogram-regression DNN baseline.
//!
//! Log-power frames with ±3 frames of context pass through three
//! leaky-rectifier hidden layers; the final layer predicts a residual on the
//! center frame (zero-initialized, so the untrained model is the identity in
//! the log-power domain). The waveform is rebuilt by inverse STFT with the
//! noisy phase and weighted overlap-add.

use super::EnhanceError;
use crate::signal::hann_window;
use crate::tensorgrad::{BoundParams, GradError, Graph, ParameterSet, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const CONTEXT: usize = 3;
pub const HIDDEN: usize = 256;
const LEAKY_SLOPE: f64 = 0.1;
const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DnnConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub input_len: usize,
}

impl Default for DnnConfig {
    fn default() -> Self {
        DnnConfig {
            frame_len: 512,
            hop: 256,
            input_len: 16384,
        }
    }
}

impl DnnConfig {
    pub fn bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    pub fn frames(&self) -> usize {
        1 + (self.input_len - self.frame_len) / self.hop
    }

    pub fn validate(&self) -> Result<(), EnhanceError> {
        if self.frame_len == 0 || self.hop == 0 || self.input_len < self.frame_len {
            return Err(EnhanceError::Parameter(
                "dnn frame/hop/input_len configuration invalid".into(),
            ));
        }
        Ok(())
    }
}

pub fn init_params(cfg: &DnnConfig, seed: u64) -> Result<ParameterSet, EnhanceError> {
    cfg.validate()?;
    let bins = cfg.bins();
    let ctx_width = bins * (2 * CONTEXT + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParameterSet::new();
    let mut dense = |rng: &mut ChaCha8Rng, rows: usize, cols: usize| {
        let limit = (6.0 / rows as f64).sqrt();
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
        Tensor::new(vec![rows, cols], data).expect("dense shape")
    };
    params.insert("fc0.weight", dense(&mut rng, ctx_width, HIDDEN))?;
    params.insert("fc0.bias", Tensor::zeros(vec![HIDDEN]))?;
    params.insert("fc1.weight", dense(&mut rng, HIDDEN, HIDDEN))?;
    params.insert("fc1.bias", Tensor::zeros(vec![HIDDEN]))?;
    params.insert("fc2.weight", dense(&mut rng, HIDDEN, HIDDEN))?;
    params.insert("fc2.bias", Tensor::zeros(vec![HIDDEN]))?;
    // residual head starts at zero: the fresh model is the identity map
    params.insert("out.weight", Tensor::zeros(vec![HIDDEN, bins]))?;
    params.insert("out.bias", Tensor::zeros(vec![bins]))?;
    Ok(params)
}

struct Bases {
    /// `[frame_len, bins]` DFT cosine basis.
    cos: Tensor,
    /// `[frame_len, bins]` DFT sine basis.
    sin: Tensor,
    /// `[bins, frame_len]` inverse-DFT cosine basis (real-signal weights).
    inv_cos: Tensor,
    /// `[bins, frame_len]` inverse-DFT sine basis.
    inv_sin: Tensor,
}

fn dft_bases(frame_len: usize) -> Bases {
    let bins = frame_len / 2 + 1;
    let n = frame_len as f64;
    let mut cos = vec![0.0; frame_len * bins];
    let mut sin = vec![0.0; frame_len * bins];
    let mut inv_cos = vec![0.0; bins * frame_len];
    let mut inv_sin = vec![0.0; bins * frame_len];
    for k in 0..bins {
        let fold = if k == 0 || k == frame_len / 2 { 1.0 } else { 2.0 };
        for i in 0..frame_len {
            let angle = 2.0 * std::f64::consts::PI * (i * k) as f64 / n;
            cos[i * bins + k] = angle.cos();
            sin[i * bins + k] = -angle.sin();
            inv_cos[k * frame_len + i] = fold * angle.cos() / n;
            inv_sin[k * frame_len + i] = -fold * angle.sin() / n;
        }
    }
    Bases {
        cos: Tensor::new(vec![frame_len, bins], cos).expect("basis"),
        sin: Tensor::new(vec![frame_len, bins], sin).expect("basis"),
        inv_cos: Tensor::new(vec![bins, frame_len], inv_cos).expect("basis"),
        inv_sin: Tensor::new(vec![bins, frame_len], inv_sin).expect("basis"),
    }
}

struct Analysis {
    log_power: Var,
    /// Phase factors of the (noisy) input spectra, `[frames, bins]` each.
    cos_phase: Tensor,
    sin_phase: Tensor,
}

/// Windowed framing + DFT + floored log power, with the phase captured as
/// constants for resynthesis.
fn analysis_graph(
    cfg: &DnnConfig,
    bases: &Bases,
    g: &mut Graph,
    wave: Var,
) -> Result<Analysis, GradError> {
    let frames = g.frame_signal(wave, cfg.frame_len, cfg.hop)?;
    let n_frames = g.value(frames).shape()[0];
    let window = hann_window(cfg.frame_len);
    let mut window_rows = Vec::with_capacity(n_frames * cfg.frame_len);
    for _ in 0..n_frames {
        window_rows.extend_from_slice(&window);
    }
    let window_m = g.constant(Tensor::new(vec![n_frames, cfg.frame_len], window_rows)?);
    let windowed = g.mul(frames, window_m)?;
    let cos_b = g.constant(bases.cos.clone());
    let sin_b = g.constant(bases.sin.clone());
    let re = g.matmul(windowed, cos_b)?;
    let im = g.matmul(windowed, sin_b)?;
    let re2 = g.mul(re, re)?;
    let im2 = g.mul(im, im)?;
    let power = g.add(re2, im2)?;
    let floored = g.clamp_min(power, LOG_FLOOR);
    let log_power = g.ln(floored)?;

    // phase of the input spectra, treated as fixed during enhancement
    let bins = cfg.bins();
    let mut cos_phase = vec![0.0; n_frames * bins];
    let mut sin_phase = vec![0.0; n_frames * bins];
    let (re_v, im_v) = (g.value(re).data(), g.value(im).data());
    for i in 0..n_frames * bins {
        let mag = (re_v[i] * re_v[i] + im_v[i] * im_v[i]).sqrt();
        if mag > 0.0 {
            cos_phase[i] = re_v[i] / mag;
            sin_phase[i] = im_v[i] / mag;
        } else {
            cos_phase[i] = 1.0;
        }
    }
    Ok(Analysis {
        log_power,
        cos_phase: Tensor::new(vec![n_frames, bins], cos_phase)?,
        sin_phase: Tensor::new(vec![n_frames, bins], sin_phase)?,
    })
}

/// Stack ±CONTEXT neighbouring rows (zero-padded at the edges) along the
/// feature axis: `[F, bins]` → `[F, bins*(2*CONTEXT+1)]`.
fn context_stack(g: &mut Graph, rows: Var) -> Result<Var, GradError> {
    let shape = g.value(rows).shape().to_vec();
    let (f, bins) = (shape[0], shape[1]);
    let mut stacked: Option<Var> = None;
    for offset in -(CONTEXT as isize)..=(CONTEXT as isize) {
        let shifted = if offset == 0 {
            rows
        } else if offset < 0 {
            // rows shifted down: pad top with zeros
            let k = (-offset) as usize;
            let body = g.slice(rows, 0, 0, f - k)?;
            let pad = g.constant(Tensor::zeros(vec![k, bins]));
            g.concat(pad, body, 0)?
        } else {
            let k = offset as usize;
            let body = g.slice(rows, 0, k, f - k)?;
            let pad = g.constant(Tensor::zeros(vec![k, bins]));
            g.concat(body, pad, 0)?
        };
        stacked = Some(match stacked {
            Some(acc) => g.concat(acc, shifted, 1)?,
            None => shifted,
        });
    }
    Ok(stacked.expect("non-empty context"))
}

/// Enhanced log-power frames for a waveform (identity for the
/// zero-initialized residual head).
pub fn dnn_enhanced_log_power(
    model: &super::EnhancerModel,
    w: &crate::signal::Waveform,
) -> Result<Tensor, EnhanceError> {
    let cfg = match &model.config {
        super::EnhancerConfig::Dnn(c) => *c,
        _ => return Err(EnhanceError::Parameter("not a dnn model".into())),
    };
    let mut g = Graph::new();
    let wave = g.constant(Tensor::from_vec(w.samples.clone()));
    let bases = dft_bases(cfg.frame_len);
    let analysis = analysis_graph(&cfg, &bases, &mut g, wave)?;
    let enhanced = regression_graph(&cfg, &model.params, &mut g, analysis.log_power, None)?;
    Ok(g.value(enhanced).clone())
}

fn regression_graph(
    _cfg: &DnnConfig,
    params: &ParameterSet,
    g: &mut Graph,
    log_power: Var,
    bound: Option<&BoundParams>,
) -> Result<Var, GradError> {
    let var_of = |g: &mut Graph, name: &str| -> Result<Var, GradError> {
        if let Some(b) = bound {
            b.var(name)
                .ok_or_else(|| GradError::Parameter(format!("unbound parameter {name:?}")))
        } else {
            let t = params
                .get(name)
                .ok_or_else(|| GradError::Parameter(format!("missing parameter {name:?}")))?;
            Ok(g.constant(t.clone()))
        }
    };
    let ctx = context_stack(g, log_power)?;
    let mut h = ctx;
    for layer in 0..3 {
        let w = var_of(g, &format!("fc{layer}.weight"))?;
        let b = var_of(g, &format!("fc{layer}.bias"))?;
        let lin = g.matmul(h, w)?;
        let lin = g.add_row_bias(lin, b)?;
        h = g.leaky_relu(lin, LEAKY_SLOPE);
    }
    let w = var_of(g, "out.weight")?;
    let b = var_of(g, "out.bias")?;
    let residual = g.matmul(h, w)?;
    let residual = g.add_row_bias(residual, b)?;
    g.add(log_power, residual)
}

/// Full waveform→waveform graph: analysis, regression in the log-power
/// domain, resynthesis with the noisy phase, weighted overlap-add.
pub fn forward_graph(
    cfg: &DnnConfig,
    params: &ParameterSet,
    g: &mut Graph,
    wave: Var,
    bound: Option<&BoundParams>,
) -> Result<Var, EnhanceError> {
    cfg.validate()?;
    let t_len = g.value(wave).len();
    let bases = dft_bases(cfg.frame_len);
    let analysis = analysis_graph(cfg, &bases, g, wave)?;
    let enhanced_logp = regression_graph(cfg, params, g, analysis.log_power, bound)?;

    // amplitude = exp(0.5 * log_power)
    let half = g.mul_scalar(enhanced_logp, 0.5);
    let amplitude = g.exp(half);
    let cos_ph = g.constant(analysis.cos_phase.clone());
    let sin_ph = g.constant(analysis.sin_phase.clone());
    let re = g.mul(amplitude, cos_ph)?;
    let im = g.mul(amplitude, sin_ph)?;
    let inv_cos = g.constant(bases.inv_cos.clone());
    let inv_sin = g.constant(bases.inv_sin.clone());
    let part_re = g.matmul(re, inv_cos)?;
    let part_im = g.matmul(im, inv_sin)?;
    let frames_time = g.add(part_re, part_im)?;

    // weighted overlap-add with the analysis window, normalized by the
    // accumulated squared window
    let n_frames = g.value(frames_time).shape()[0];
    let window = hann_window(cfg.frame_len);
    let mut window_rows = Vec::with_capacity(n_frames * cfg.frame_len);
    for _ in 0..n_frames {
        window_rows.extend_from_slice(&window);
    }
    let window_m = g.constant(Tensor::new(vec![n_frames, cfg.frame_len], window_rows)?);
    let weighted = g.mul(frames_time, window_m)?;
    let ola = g.overlap_add(weighted, cfg.hop, t_len)?;
    let mut norm = vec![0.0; t_len];
    for f in 0..n_frames {
        for (i, w) in window.iter().enumerate() {
            norm[f * cfg.hop + i] += w * w;
        }
    }
    let inv_norm: Vec<f64> = norm.iter().map(|&v| 1.0 / v.max(1e-8)).collect();
    let inv_norm = g.constant(Tensor::from_vec(inv_norm));
    Ok(g.mul(ola, inv_norm)?)
}
