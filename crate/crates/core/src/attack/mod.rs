//! Adversarial example generators against the surrogate recognizer:
//! white-box gradient descent on the CTC objective, its over-the-air
//! expectation variant, a black-box evolutionary search, single-step FGSM,
//! the adaptive budget sweep against defended pipelines, and RoSA
//! accounting.

mod evolutionary;
mod gradient;
mod sweep;

pub use evolutionary::{evo_fitness, evolutionary_attack, DecodeOracle, EvoConfig};
pub use gradient::{gradient_attack, ota_gradient_attack, ota_step_objective};
pub use sweep::{
    adaptive_attack_sweep, DefendedPipeline, SweepAttackConfig, SweepPoint, SweepReport,
};

use crate::asr::{AsrError, Transcript};
use crate::signal::{SignalError, Waveform};
use crate::tensorgrad::{GradError, Graph, Tensor, Var};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("infeasible alignment: {0}")]
    InfeasibleAlignment(String),
    #[error(transparent)]
    Grad(GradError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Asr(#[from] AsrError),
    #[error("enhance: {0}")]
    Enhance(String),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
}

impl From<GradError> for AttackError {
    fn from(e: GradError) -> Self {
        match e {
            GradError::InfeasibleAlignment { needed, frames } => AttackError::InfeasibleAlignment(
                format!("target needs {needed} frames, logits have {frames}"),
            ),
            other => AttackError::Grad(other),
        }
    }
}

/// Distortion limits for an attack run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationBudget {
    /// ℓ∞ clamp on the perturbation.
    pub delta_inf: f64,
    /// Weight of the ℓ2 penalty in the objective.
    pub penalty_weight: f64,
    pub max_iters: usize,
}

impl PerturbationBudget {
    pub fn validate(&self) -> Result<(), AttackError> {
        if !self.delta_inf.is_finite() || self.delta_inf < 0.0 {
            return Err(AttackError::Parameter(format!(
                "delta_inf must be finite and >= 0, got {}",
                self.delta_inf
            )));
        }
        if self.penalty_weight < 0.0 {
            return Err(AttackError::Parameter("penalty_weight must be >= 0".into()));
        }
        if self.max_iters == 0 {
            return Err(AttackError::Parameter("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// One crafted adversarial example.
#[derive(Debug, Clone)]
pub struct AdversarialResult {
    pub perturbation: Waveform,
    pub adversarial: Waveform,
    pub decoded: Transcript,
    /// Exact equality of the decode with the target phrase.
    pub success: bool,
    /// `snr_db(x, v)`; +inf for an identically-zero perturbation.
    pub snr_db: f64,
    pub iterations: usize,
    /// Best objective (gradient attacks) or best fitness (evolutionary) per
    /// logged step.
    pub objective_log: Vec<f64>,
    /// Over-the-air attacks also report the decode success rate over fresh
    /// channel draws.
    pub channel_success_rate: Option<f64>,
}

impl AdversarialResult {
    pub(crate) fn assemble(
        x: &Waveform,
        v: Vec<f64>,
        decoded: Transcript,
        target: &Transcript,
        iterations: usize,
        objective_log: Vec<f64>,
    ) -> Self {
        let adversarial = Waveform {
            samples: x
                .samples
                .iter()
                .zip(&v)
                .map(|(a, b)| (a + b).clamp(-1.0, 1.0))
                .collect(),
            sample_rate_hz: x.sample_rate_hz,
        };
        let perturbation = Waveform {
            samples: v,
            sample_rate_hz: x.sample_rate_hz,
        };
        let snr_db = crate::metrics::snr(x, &perturbation)
            .map(crate::metrics::Snr::as_db)
            .unwrap_or(f64::NAN);
        AdversarialResult {
            success: decoded == *target,
            perturbation,
            adversarial,
            decoded,
            snr_db,
            iterations,
            objective_log,
            channel_success_rate: None,
        }
    }
}

/// Deterministic seed derivation for parallel work items: identical results
/// regardless of schedule.
pub fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fast gradient sign method: `clamp(x + epsilon * sign(∇x loss), [-1, 1])`.
/// `loss_fn` builds a scalar loss from the waveform variable.
pub fn fgsm_perturb(
    loss_fn: impl Fn(&mut Graph, Var) -> Result<Var, GradError>,
    x: &Waveform,
    epsilon: f64,
) -> Result<Waveform, AttackError> {
    if epsilon < 0.0 {
        return Err(AttackError::Parameter("epsilon must be >= 0".into()));
    }
    if epsilon == 0.0 {
        return Ok(x.clone());
    }
    let mut g = Graph::new();
    let wave = g.input(Tensor::from_vec(x.samples.clone()), true);
    let loss = loss_fn(&mut g, wave)?;
    if g.value(loss).len() != 1 {
        return Err(AttackError::Parameter(
            "fgsm loss function must be scalar-valued".into(),
        ));
    }
    let grads = g.backward(loss)?;
    let grad = grads
        .wrt(wave)
        .ok_or_else(|| AttackError::Parameter("loss does not depend on the input".into()))?;
    let samples = x
        .samples
        .iter()
        .zip(grad.data())
        .map(|(&s, &gv)| {
            let step = if gv > 0.0 {
                epsilon
            } else if gv < 0.0 {
                -epsilon
            } else {
                0.0
            };
            (s + step).clamp(-1.0, 1.0)
        })
        .collect();
    Ok(Waveform {
        samples,
        sample_rate_hz: x.sample_rate_hz,
    })
}

/// Rate of successful attack: percentage of results whose decode matched the
/// target exactly.
pub fn rosa(results: &[AdversarialResult]) -> Result<f64, AttackError> {
    if results.is_empty() {
        return Err(AttackError::Parameter("empty result list".into()));
    }
    let successes = results.iter().filter(|r| r.success).count();
    Ok(100.0 * successes as f64 / results.len() as f64)
}

#[cfg(test)]
mod tests;
