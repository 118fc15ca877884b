//! Adaptive two-step attacks against a defended pipeline, swept over
//! perturbation-SNR budgets.
//!
//! For each budget `b` the perturbation is projected after every optimizer
//! step onto the power constraint `snr_db(x, v) >= b`; white-box gradients
//! flow through the enhancer into the recognizer. TASR at a budget is the
//! fraction of utterances whose defended decode equals the target exactly.

use super::gradient::AttackLoop;
use super::{AdversarialResult, AttackError};
use crate::asr::{SurrogateAsr, Transcript};
use crate::enhance::{enhance_waveform, EnhancerModel};
use crate::signal::Waveform;
use crate::tensorgrad::{Graph, Tensor, Var};
use rayon::prelude::*;

const DECODE_CHECK_EVERY: usize = 10;

/// Enhancer∘ASR composite (the enhancer is optional, giving the undefended
/// baseline).
#[derive(Clone, Copy)]
pub struct DefendedPipeline<'a> {
    pub enhancer: Option<&'a EnhancerModel>,
    pub asr: &'a SurrogateAsr,
}

impl DefendedPipeline<'_> {
    /// Decode a waveform through enhancement (if any) then the recognizer.
    pub fn decode(&self, w: &Waveform) -> Result<Transcript, AttackError> {
        let enhanced = match self.enhancer {
            Some(e) => enhance_waveform(e, w).map_err(|e| AttackError::Enhance(e.to_string()))?,
            None => w.clone(),
        };
        Ok(self.asr.transcribe(&enhanced)?)
    }

    /// Build logits of `clamp-free` x+v through the composite in one graph.
    fn logits_graph(&self, g: &mut Graph, mixed: Var) -> Result<Var, AttackError> {
        let fed = match self.enhancer {
            Some(e) => {
                let (s_clean, _) = e
                    .forward_graph(g, mixed, None)
                    .map_err(|err| AttackError::Enhance(err.to_string()))?;
                s_clean
            }
            None => mixed,
        };
        Ok(self.asr.logits_graph(g, fed)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepAttackConfig {
    pub penalty_weight: f64,
    pub max_iters: usize,
    pub lr: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub budget_db: f64,
    pub tasr: f64,
    pub successes: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    /// The quietest budget (largest dB) at which this utterance was attacked
    /// successfully; `None` if every budget failed.
    pub fn least_noise_success_db(&self, utterance: usize) -> Option<f64> {
        self.points
            .iter()
            .filter(|p| p.successes.get(utterance).copied().unwrap_or(false))
            .map(|p| p.budget_db)
            .fold(None, |acc, b| Some(acc.map_or(b, |a: f64| a.max(b))))
    }
}

/// Power-projected gradient attack through the composite. `limit_power` of
/// `None` disables the projection (the unconstrained case).
pub(crate) fn power_attack(
    pipeline: &DefendedPipeline<'_>,
    x: &Waveform,
    y_target: &Transcript,
    limit_power: Option<f64>,
    cfg: &SweepAttackConfig,
) -> Result<AdversarialResult, AttackError> {
    let labels = y_target.label_indices(&pipeline.asr.vocab)?;
    let mut attack = AttackLoop::new(vec![0.0; x.len()], cfg.lr);
    let mut iterations = cfg.max_iters;
    let mut succeeded = false;

    let project = |v: &mut Vec<f64>| {
        if let Some(limit) = limit_power {
            let p: f64 = v.iter().map(|s| s * s).sum::<f64>() / v.len() as f64;
            if p > limit && p > 0.0 {
                let scale = (limit / p).sqrt();
                for s in v.iter_mut() {
                    *s *= scale;
                }
            }
        }
    };

    for iter in 0..cfg.max_iters {
        let mut g = Graph::new();
        let xc = g.constant(Tensor::from_vec(x.samples.clone()));
        let vv = g.input(Tensor::from_vec(attack.current().to_vec()), true);
        let mixed = g.add(xc, vv)?;
        let logits = pipeline.logits_graph(&mut g, mixed)?;
        let logp = g.log_softmax(logits)?;
        let ctc = g.ctc_loss(logp, &labels, pipeline.asr.vocab.blank_index())?;
        let objective = if cfg.penalty_weight > 0.0 {
            let norm = g.l2_norm(vv);
            let weighted = g.mul_scalar(norm, cfg.penalty_weight);
            g.add(ctc, weighted)?
        } else {
            ctc
        };
        let value = g.value(objective).item()?;
        attack.observe(value);
        let grads = g.backward(objective)?;
        let grad = grads
            .wrt(vv)
            .ok_or_else(|| AttackError::Parameter("objective ignores perturbation".into()))?
            .clone();
        attack.step(grad, f64::INFINITY)?;
        let mut v = attack.current().to_vec();
        project(&mut v);
        attack.set_current(v);

        if (iter + 1) % DECODE_CHECK_EVERY == 0 || iter + 1 == cfg.max_iters {
            let adv = assemble_clamped(x, attack.current());
            if pipeline.decode(&adv)? == *y_target {
                iterations = iter + 1;
                succeeded = true;
                break;
            }
        }
    }

    let final_v = if succeeded {
        attack.current().to_vec()
    } else {
        let mut v = attack.best_v.clone();
        project(&mut v);
        v
    };
    let adv = assemble_clamped(x, &final_v);
    let decoded = pipeline.decode(&adv)?;
    Ok(AdversarialResult::assemble(
        x,
        final_v,
        decoded,
        y_target,
        iterations,
        attack.log,
    ))
}

fn assemble_clamped(x: &Waveform, v: &[f64]) -> Waveform {
    Waveform {
        samples: x
            .samples
            .iter()
            .zip(v)
            .map(|(a, b)| (a + b).clamp(-1.0, 1.0))
            .collect(),
        sample_rate_hz: x.sample_rate_hz,
    }
}

/// Sweep the attack over perturbation-SNR budgets (dB). Utterances fan out
/// across threads; the per-utterance attack is deterministic, so parallel
/// and serial schedules agree.
pub fn adaptive_attack_sweep(
    pipeline: &DefendedPipeline<'_>,
    utterances: &[Waveform],
    y_target: &Transcript,
    snr_budgets_db: &[f64],
    cfg: &SweepAttackConfig,
) -> Result<SweepReport, AttackError> {
    if snr_budgets_db.is_empty() {
        return Err(AttackError::Parameter("empty budget list".into()));
    }
    if utterances.is_empty() {
        return Err(AttackError::Parameter("no utterances to attack".into()));
    }
    let mut points = Vec::with_capacity(snr_budgets_db.len());
    for &budget in snr_budgets_db {
        let successes: Vec<bool> = utterances
            .par_iter()
            .map(|x| {
                let limit = x.power() * 10f64.powf(-budget / 10.0);
                power_attack(pipeline, x, y_target, Some(limit), cfg).map(|r| r.success)
            })
            .collect::<Result<_, _>>()?;
        let tasr = successes.iter().filter(|&&s| s).count() as f64 / successes.len() as f64;
        points.push(SweepPoint {
            budget_db: budget,
            tasr,
            successes,
        });
    }
    Ok(SweepReport { points })
}
