//! White-box gradient attacks: Adam on the perturbation against
//! `ctc(logits(x + v), target) + penalty * ||v||₂`, with an ℓ∞ clamp after
//! every step, and the over-the-air variant that averages the objective over
//! impulse-response and noise draws with the perturbation band-passed inside
//! the graph.

use super::{mix_seed, AdversarialResult, AttackError, PerturbationBudget};
use crate::asr::{SurrogateAsr, Transcript};
use crate::signal::{bandpass_adjointable, ChannelModel, Waveform};
use crate::tensorgrad::{adam_step, AdamState, GradError, Graph, ParameterSet, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const DECODE_CHECK_EVERY: usize = 10;
const LR_FLOOR_FACTOR: f64 = 1.0 / 1024.0;

pub(crate) struct AttackLoop {
    v: ParameterSet,
    state: AdamState,
    pub(crate) best_objective: f64,
    pub(crate) best_v: Vec<f64>,
    pub(crate) log: Vec<f64>,
    lr_floor: f64,
}

impl AttackLoop {
    pub(crate) fn new(init_v: Vec<f64>, lr: f64) -> Self {
        let mut v = ParameterSet::new();
        v.insert("v", Tensor::from_vec(init_v.clone())).expect("fresh set");
        let state = AdamState::new(&v, lr);
        AttackLoop {
            v,
            state,
            best_objective: f64::INFINITY,
            best_v: init_v,
            log: Vec::new(),
            lr_floor: lr * LR_FLOOR_FACTOR,
        }
    }

    pub(crate) fn current(&self) -> &[f64] {
        self.v.get("v").expect("v").data()
    }

    /// Overwrite the live perturbation (projection steps).
    pub(crate) fn set_current(&mut self, v: Vec<f64>) {
        self.v
            .get_mut("v")
            .expect("v")
            .data_mut()
            .copy_from_slice(&v);
    }

    /// Track the best objective; halve the step size on regression.
    pub(crate) fn observe(&mut self, objective: f64) {
        if objective < self.best_objective {
            self.best_objective = objective;
            self.best_v = self.current().to_vec();
        } else {
            self.state.lr = (self.state.lr * 0.5).max(self.lr_floor);
        }
        self.log.push(self.best_objective);
    }

    pub(crate) fn step(&mut self, grad: Tensor, delta_inf: f64) -> Result<(), GradError> {
        adam_step(&mut self.v, &[grad], &mut self.state)?;
        for s in self.v.get_mut("v").expect("v").data_mut() {
            *s = s.clamp(-delta_inf, delta_inf);
        }
        Ok(())
    }
}

fn seeded_init(len: usize, delta_inf: f64, seed: u64) -> Vec<f64> {
    let amp = delta_inf.min(1e-3) * 0.1;
    if amp == 0.0 {
        return vec![0.0; len];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-amp..amp)).collect()
}

fn decode_perturbed(
    model: &SurrogateAsr,
    x: &Waveform,
    v: &[f64],
) -> Result<Transcript, AttackError> {
    let adv = Waveform {
        samples: x
            .samples
            .iter()
            .zip(v)
            .map(|(a, b)| (a + b).clamp(-1.0, 1.0))
            .collect(),
        sample_rate_hz: x.sample_rate_hz,
    };
    Ok(model.transcribe(&adv)?)
}

/// Objective graph for the plain attack: `ctc(x+v) + penalty * ||v||`.
fn plain_objective(
    model: &SurrogateAsr,
    g: &mut Graph,
    x: Var,
    v: Var,
    labels: &[usize],
    penalty_weight: f64,
) -> Result<Var, GradError> {
    let mixed = g.add(x, v)?;
    let logits = model.logits_graph(g, mixed)?;
    let logp = g.log_softmax(logits)?;
    let ctc = g.ctc_loss(logp, labels, model.vocab.blank_index())?;
    if penalty_weight == 0.0 {
        return Ok(ctc);
    }
    let norm = g.l2_norm(v);
    let weighted = g.mul_scalar(norm, penalty_weight);
    g.add(ctc, weighted)
}

/// Gradient attack on the recognizer: Adam on the perturbation, ℓ∞ clamp
/// after each step, step-size halving on objective regression, decode check
/// (and early exit) every 10 iterations.
pub fn gradient_attack(
    model: &SurrogateAsr,
    x: &Waveform,
    y_target: &Transcript,
    budget: &PerturbationBudget,
    lr: f64,
    seed: u64,
) -> Result<AdversarialResult, AttackError> {
    budget.validate()?;
    let labels = y_target.label_indices(&model.vocab)?;
    let mut attack = AttackLoop::new(seeded_init(x.len(), budget.delta_inf, seed), lr);
    let mut iterations = budget.max_iters;
    let mut decoded: Option<Transcript> = None;

    for iter in 0..budget.max_iters {
        let mut g = Graph::new();
        let xv = g.constant(Tensor::from_vec(x.samples.clone()));
        let vv = g.input(Tensor::from_vec(attack.current().to_vec()), true);
        let objective = plain_objective(model, &mut g, xv, vv, &labels, budget.penalty_weight)?;
        let value = g.value(objective).item()?;
        attack.observe(value);
        let grads = g.backward(objective)?;
        let grad = grads
            .wrt(vv)
            .ok_or_else(|| AttackError::Parameter("objective ignores perturbation".into()))?
            .clone();
        attack.step(grad, budget.delta_inf)?;

        if (iter + 1) % DECODE_CHECK_EVERY == 0 || iter + 1 == budget.max_iters {
            let d = decode_perturbed(model, x, attack.current())?;
            if d == *y_target {
                decoded = Some(d);
                iterations = iter + 1;
                break;
            }
        }
    }

    let (final_v, decoded) = match decoded {
        Some(d) => (attack.current().to_vec(), d),
        None => {
            let v = attack.best_v.clone();
            let d = decode_perturbed(model, x, &v)?;
            (v, d)
        }
    };
    Ok(AdversarialResult::assemble(
        x,
        final_v,
        decoded,
        y_target,
        iterations,
        attack.log,
    ))
}

/// Channel draw for one (iteration, sample) slot: impulse-response index and
/// noise vector, derived deterministically so that the `mc_samples`-average
/// at a step is exactly the mean of the corresponding single-sample
/// objectives.
fn channel_draw(
    channel: &ChannelModel,
    len: usize,
    seed: u64,
    iter: usize,
    sample: usize,
) -> (usize, Vec<f64>) {
    let s = mix_seed(seed, iter as u64, sample as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(s);
    let ir_index = rng.gen_range(0..channel.impulse_responses.len());
    let noise = if channel.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, channel.noise_sigma).expect("sigma >= 0");
        (0..len).map(|_| normal.sample(&mut rng)).collect()
    } else {
        vec![0.0; len]
    };
    (ir_index, noise)
}

/// One-draw objective graph per the over-the-air composition:
/// `ctc(Conv(x + BPF(v), h) + w) (+ penalty * ||v||)`.
fn ota_draw_objective(
    model: &SurrogateAsr,
    channel: &ChannelModel,
    g: &mut Graph,
    x: &Waveform,
    v: Var,
    labels: &[usize],
    ir_index: usize,
    noise: &[f64],
) -> Result<Var, GradError> {
    let (low, high) = (channel.bpf_low_hz, channel.bpf_high_hz);
    let sr = x.sample_rate_hz;
    let bpf_fwd = move |s: &[f64]| bandpass_adjointable(s, low, high, sr);
    let bpf_adj = move |s: &[f64]| bandpass_adjointable(s, low, high, sr);
    let filtered = g.linear_map(v, bpf_fwd, bpf_adj)?;
    let xc = g.constant(Tensor::from_vec(x.samples.clone()));
    let mixed = g.add(xc, filtered)?;
    let h = channel.impulse_responses[ir_index].samples.clone();
    let h_adj = h.clone();
    let conv_fwd = move |s: &[f64]| {
        let full = crate::signal::fft::conv_full(s, &h);
        full[..s.len()].to_vec()
    };
    let conv_adj = move |grad: &[f64]| crate::signal::correlate_adjoint(grad, &h_adj);
    let convolved = g.linear_map(mixed, conv_fwd, conv_adj)?;
    let noise_c = g.constant(Tensor::from_vec(noise.to_vec()));
    let received = g.add(convolved, noise_c)?;
    let logits = model.logits_graph(g, received)?;
    let logp = g.log_softmax(logits)?;
    g.ctc_loss(logp, labels, model.vocab.blank_index())
}

/// The objective value of a single channel draw at the current perturbation
/// (exposed so the definitional mc-averaging can be checked externally).
pub fn ota_step_objective(
    model: &SurrogateAsr,
    x: &Waveform,
    v: &Waveform,
    y_target: &Transcript,
    channel: &ChannelModel,
    penalty_weight: f64,
    seed: u64,
    iter: usize,
    sample: usize,
) -> Result<f64, AttackError> {
    let labels = y_target.label_indices(&model.vocab)?;
    let (ir_index, noise) = channel_draw(channel, x.len(), seed, iter, sample);
    let mut g = Graph::new();
    let vv = g.input(Tensor::from_vec(v.samples.clone()), false);
    let ctc = ota_draw_objective(model, channel, &mut g, x, vv, &labels, ir_index, &noise)?;
    let mut value = g.value(ctc).item()?;
    if penalty_weight > 0.0 {
        let norm: f64 = v.samples.iter().map(|s| s * s).sum::<f64>().sqrt();
        value += penalty_weight * norm;
    }
    Ok(value)
}

/// Over-the-air gradient attack: every step averages the objective over
/// `mc_samples` fresh (impulse response, noise) draws; success is reported
/// both for the direct decode and over 10 evaluation channel draws never
/// used during optimization.
pub fn ota_gradient_attack(
    model: &SurrogateAsr,
    x: &Waveform,
    y_target: &Transcript,
    budget: &PerturbationBudget,
    channel: &ChannelModel,
    mc_samples: usize,
    lr: f64,
    seed: u64,
) -> Result<AdversarialResult, AttackError> {
    budget.validate()?;
    if channel.impulse_responses.is_empty() {
        return Err(AttackError::Parameter("empty channel bank".into()));
    }
    if mc_samples == 0 {
        return Err(AttackError::Parameter("mc_samples must be >= 1".into()));
    }
    let labels = y_target.label_indices(&model.vocab)?;
    let mut attack = AttackLoop::new(seeded_init(x.len(), budget.delta_inf, seed), lr);
    let mut iterations = budget.max_iters;

    for iter in 0..budget.max_iters {
        let mut g = Graph::new();
        let vv = g.input(Tensor::from_vec(attack.current().to_vec()), true);
        let mut acc: Option<Var> = None;
        for s in 0..mc_samples {
            let (ir_index, noise) = channel_draw(channel, x.len(), seed, iter, s);
            let ctc =
                ota_draw_objective(model, channel, &mut g, x, vv, &labels, ir_index, &noise)?;
            acc = Some(match acc {
                Some(a) => g.add(a, ctc)?,
                None => ctc,
            });
        }
        let mean_ctc = g.mul_scalar(acc.expect("mc_samples >= 1"), 1.0 / mc_samples as f64);
        let objective = if budget.penalty_weight > 0.0 {
            let norm = g.l2_norm(vv);
            let weighted = g.mul_scalar(norm, budget.penalty_weight);
            g.add(mean_ctc, weighted)?
        } else {
            mean_ctc
        };
        let value = g.value(objective).item()?;
        attack.observe(value);
        let grads = g.backward(objective)?;
        let grad = grads
            .wrt(vv)
            .ok_or_else(|| AttackError::Parameter("objective ignores perturbation".into()))?
            .clone();
        attack.step(grad, budget.delta_inf)?;

        if (iter + 1) % DECODE_CHECK_EVERY == 0 {
            if decode_perturbed(model, x, attack.current())? == *y_target {
                iterations = iter + 1;
                break;
            }
        }
    }

    let final_v = if decode_perturbed(model, x, attack.current())? == *y_target {
        attack.current().to_vec()
    } else {
        attack.best_v.clone()
    };
    let decoded = decode_perturbed(model, x, &final_v)?;
    let mut result =
        AdversarialResult::assemble(x, final_v, decoded, y_target, iterations, attack.log);

    // channel-decode success over fresh evaluation draws
    const EVAL_DRAWS: usize = 10;
    let eval_seed = mix_seed(seed, u64::MAX, 0xE7A1);
    let mut hits = 0usize;
    for d in 0..EVAL_DRAWS {
        let (ir_index, _) = channel_draw(channel, x.len(), eval_seed, d, 0);
        let received = crate::signal::apply_channel(
            x,
            &result.perturbation,
            channel,
            ir_index,
            mix_seed(eval_seed, d as u64, 1),
        )?;
        let clamped = Waveform {
            samples: received.samples.iter().map(|s| s.clamp(-1.0, 1.0)).collect(),
            sample_rate_hz: received.sample_rate_hz,
        };
        if model.transcribe(&clamped)? == *y_target {
            hits += 1;
        }
    }
    result.channel_success_rate = Some(hits as f64 / EVAL_DRAWS as f64);
    Ok(result)
}
