//! 1-D U-Net source separator with optional attention-gated skips.
//!
//! Down path: `depth` blocks of (conv k=15 same-padded, leaky 0.1,
//! decimate ×2), channel widths growing linearly per block. Bottleneck conv.
//! Up path: linear ×2 upsample, gate the matching skip (attention over the
//! causal window, or plain pass-through for the ungated variant),
//! concatenate with the upsampled features, conv k=5, leaky. A final
//! filter-size-1 convolution with two filters and a tanh yields the clean
//! and adversarial sources.

use super::EnhanceError;
use crate::tensorgrad::{BoundParams, GradError, Graph, ParameterSet, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DOWN_KERNEL: usize = 15;
pub const UP_KERNEL: usize = 5;
pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UNetConfig {
    /// Down/up block pairs. 4 is the desk-scale default; 17 matches the
    /// published block count and stays runnable, just slow.
    pub depth: usize,
    /// Channel width of the first block; width grows linearly per block.
    pub base_filters: usize,
    /// Attention projection dimension.
    pub attention_dim: usize,
    /// Causal attention window in (downsampled) steps.
    pub attention_window: usize,
    /// Window length the model separates; must be divisible by 2^depth.
    pub input_len: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            depth: 4,
            base_filters: 8,
            attention_dim: 16,
            attention_window: 32,
            input_len: 16384,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<(), EnhanceError> {
        if self.depth == 0 || self.base_filters == 0 {
            return Err(EnhanceError::Parameter(
                "depth and base_filters must be >= 1".into(),
            ));
        }
        if self.attention_dim == 0 || self.attention_window == 0 {
            return Err(EnhanceError::Parameter(
                "attention dim and window must be >= 1".into(),
            ));
        }
        if self.input_len == 0 || self.input_len % (1 << self.depth) != 0 {
            return Err(EnhanceError::Parameter(format!(
                "input_len {} must be divisible by 2^depth ({})",
                self.input_len,
                1 << self.depth
            )));
        }
        Ok(())
    }

    fn width(&self, block: usize) -> usize {
        self.base_filters * (block + 1)
    }
}

fn conv_init(rng: &mut ChaCha8Rng, c_out: usize, c_in: usize, k: usize) -> Tensor {
    let limit = (6.0 / (c_in * k) as f64).sqrt();
    let data = (0..c_out * c_in * k)
        .map(|_| rng.gen_range(-limit..limit))
        .collect();
    Tensor::new(vec![c_out, c_in, k], data).expect("conv shape")
}

fn dense_init(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / rows as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::new(vec![rows, cols], data).expect("dense shape")
}

/// Parameter set for a U-Net; `gated` adds the per-block attention
/// projections (so the gated model strictly exceeds the plain one in
/// parameter count).
pub fn init_params(cfg: &UNetConfig, gated: bool, seed: u64) -> Result<ParameterSet, EnhanceError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParameterSet::new();
    let mut c_in = 1usize;
    for i in 0..cfg.depth {
        let c_out = cfg.width(i);
        params.insert(format!("down{i}.weight"), conv_init(&mut rng, c_out, c_in, DOWN_KERNEL))?;
        params.insert(format!("down{i}.bias"), Tensor::zeros(vec![c_out]))?;
        c_in = c_out;
    }
    let c_bottleneck = cfg.width(cfg.depth);
    params.insert(
        "bottleneck.weight".to_string(),
        conv_init(&mut rng, c_bottleneck, c_in, DOWN_KERNEL),
    )?;
    params.insert("bottleneck.bias".to_string(), Tensor::zeros(vec![c_bottleneck]))?;
    let mut c_below = c_bottleneck;
    for i in (0..cfg.depth).rev() {
        let c_skip = cfg.width(i);
        if gated {
            params.insert(
                format!("up{i}.wq"),
                dense_init(&mut rng, c_below, cfg.attention_dim),
            )?;
            params.insert(
                format!("up{i}.wk"),
                dense_init(&mut rng, c_skip, cfg.attention_dim),
            )?;
        }
        params.insert(
            format!("up{i}.weight"),
            conv_init(&mut rng, c_skip, c_skip + c_below, UP_KERNEL),
        )?;
        params.insert(format!("up{i}.bias"), Tensor::zeros(vec![c_skip]))?;
        c_below = c_skip;
    }
    params.insert(
        "out.weight".to_string(),
        conv_init(&mut rng, 2, cfg.base_filters, 1),
    )?;
    params.insert("out.bias".to_string(), Tensor::zeros(vec![2]))?;
    Ok(params)
}

struct ParamSource<'a> {
    params: &'a ParameterSet,
    bound: Option<&'a BoundParams>,
}

impl ParamSource<'_> {
    fn var(&self, g: &mut Graph, name: &str) -> Result<Var, GradError> {
        if let Some(bound) = self.bound {
            return bound
                .var(name)
                .ok_or_else(|| GradError::Parameter(format!("unbound parameter {name:?}")));
        }
        let t = self
            .params
            .get(name)
            .ok_or_else(|| GradError::Parameter(format!("missing parameter {name:?}")))?;
        Ok(g.constant(t.clone()))
    }
}

/// The attention gate: project decoder features to queries and skip features
/// to keys, score by scaled dot product over the causal window, and return
/// the context sequence of attended skip values.
///
/// `queries`/`keys` are `[T, d]`, `values` is `[T, C]`.
pub fn attention_gate(
    g: &mut Graph,
    queries: Var,
    keys: Var,
    values: Var,
    window: usize,
) -> Result<Var, GradError> {
    g.windowed_causal_attention(queries, keys, values, window, true)
}

/// Forward pass building `(s_clean, s_adv)` from a 1-D waveform variable.
pub fn forward_graph(
    cfg: &UNetConfig,
    params: &ParameterSet,
    g: &mut Graph,
    wave: Var,
    gated: bool,
    bound: Option<&BoundParams>,
) -> Result<(Var, Var), EnhanceError> {
    cfg.validate()?;
    let src = ParamSource { params, bound };
    let t_len = g.value(wave).len();
    let mut h = g.reshape(wave, vec![1, t_len])?;
    let mut skips: Vec<Var> = Vec::with_capacity(cfg.depth);
    for i in 0..cfg.depth {
        let w = src.var(g, &format!("down{i}.weight"))?;
        let b = src.var(g, &format!("down{i}.bias"))?;
        let conv = g.conv1d(h, w, 1, DOWN_KERNEL / 2)?;
        let biased = g.add_channel_bias(conv, b)?;
        let act = g.leaky_relu(biased, LEAKY_SLOPE);
        skips.push(act);
        h = g.decimate2(act)?;
    }
    let w = src.var(g, "bottleneck.weight")?;
    let b = src.var(g, "bottleneck.bias")?;
    let conv = g.conv1d(h, w, 1, DOWN_KERNEL / 2)?;
    let biased = g.add_channel_bias(conv, b)?;
    h = g.leaky_relu(biased, LEAKY_SLOPE);

    for i in (0..cfg.depth).rev() {
        let up = g.upsample2_linear(h)?;
        let skip = skips[i];
        let context = if gated {
            let wq = src.var(g, &format!("up{i}.wq"))?;
            let wk = src.var(g, &format!("up{i}.wk"))?;
            let up_t = g.transpose(up)?; // [T, C_below]
            let skip_t = g.transpose(skip)?; // [T, C_skip]
            let queries = g.matmul(up_t, wq)?;
            let keys = g.matmul(skip_t, wk)?;
            let ctx_t = attention_gate(g, queries, keys, skip_t, cfg.attention_window)?;
            g.transpose(ctx_t)? // [C_skip, T]
        } else {
            skip
        };
        let cat = g.concat(context, up, 0)?;
        let w = src.var(g, &format!("up{i}.weight"))?;
        let b = src.var(g, &format!("up{i}.bias"))?;
        let conv = g.conv1d(cat, w, 1, UP_KERNEL / 2)?;
        let biased = g.add_channel_bias(conv, b)?;
        h = g.leaky_relu(biased, LEAKY_SLOPE);
    }

    let w = src.var(g, "out.weight")?;
    let b = src.var(g, "out.bias")?;
    let conv = g.conv1d(h, w, 1, 0)?;
    let biased = g.add_channel_bias(conv, b)?;
    let two = g.tanh(biased); // [2, T]
    let s_clean = g.slice(two, 0, 0, 1)?;
    let s_clean = g.reshape(s_clean, vec![t_len])?;
    let s_adv = g.slice(two, 0, 1, 1)?;
    let s_adv = g.reshape(s_adv, vec![t_len])?;
    Ok((s_clean, s_adv))
}
