//! Standard and adversarial enhancement training.

use super::{EnhanceError, EnhancerKind, EnhancerModel};
use crate::signal::Waveform;
use crate::tensorgrad::{
    adam_step, bind_parameters, AdamState, GradError, Graph, Tensor, Var,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Blend of clean-batch loss vs FGSM-perturbed loss; 1.0 disables the
    /// adversarial term entirely.
    pub alpha: f64,
    pub fgsm_epsilon: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Whether the caller extended the dataset with attack outputs before
    /// training (recorded in the manifest; the extension itself is the
    /// caller's job).
    pub augment_with_attacks: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            alpha: 0.34,
            fgsm_epsilon: 0.01,
            lr: 1e-3,
            epochs: 100,
            batch_size: 8,
            seed: 0,
            augment_with_attacks: false,
        }
    }
}

/// Training provenance stored in checkpoint sidecars.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub config: TrainingConfig,
    pub dataset_hash: String,
    pub adversarial: bool,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    /// Mean RMS of `(s_clean + s_adv) - mixture` on the final model; a
    /// monitored quantity for two-source models, not a trained constraint.
    pub source_residual: Option<f64>,
}

/// Waveform-domain MSE between a graph variable and a target.
fn mse_to(g: &mut Graph, pred: Var, target: &[f64]) -> Result<Var, GradError> {
    let t = g.constant(Tensor::from_vec(target.to_vec()));
    let diff = g.sub(pred, t)?;
    let sq = g.mul(diff, diff)?;
    Ok(g.mean(sq))
}

/// Pair loss: two-source models regress both the clean source and the
/// residual; the DNN regresses the clean source only.
fn pair_loss_graph(
    model: &EnhancerModel,
    g: &mut Graph,
    mixture: Var,
    clean: &[f64],
    bound: Option<&crate::tensorgrad::BoundParams>,
) -> Result<Var, EnhanceError> {
    let (s_clean, s_adv) = model.forward_graph(g, mixture, bound)?;
    let loss_clean = mse_to(g, s_clean, clean)?;
    match s_adv {
        Some(adv) => {
            let mix = g.value(mixture).data().to_vec();
            let target_adv: Vec<f64> = mix.iter().zip(clean).map(|(m, c)| m - c).collect();
            let loss_adv = mse_to(g, adv, &target_adv)?;
            Ok(g.add(loss_clean, loss_adv)?)
        }
        None => Ok(loss_clean),
    }
}

/// (loss value, parameter gradients in parameter order) for one pair.
fn pair_grads(
    model: &EnhancerModel,
    mixture: &[f64],
    clean: &[f64],
) -> Result<(f64, Vec<Tensor>), EnhanceError> {
    let mut g = Graph::new();
    let bound = bind_parameters(&mut g, &model.params);
    let mix = g.input(Tensor::from_vec(mixture.to_vec()), false);
    let loss = pair_loss_graph(model, &mut g, mix, clean, Some(&bound))?;
    let value = g.value(loss).item()?;
    let grads = g.backward(loss)?;
    Ok((value, bound.collect_grads(&grads)?))
}

/// Adversarial pair step: blend the clean-pair gradients with gradients on
/// the FGSM-perturbed mixture (perturbation computed at the current
/// parameters, gradients flowing to the mixture input).
fn pair_grads_adversarial(
    model: &EnhancerModel,
    mixture: &[f64],
    clean: &[f64],
    alpha: f64,
    epsilon: f64,
    sample_rate_hz: u32,
) -> Result<(f64, Vec<Tensor>), EnhanceError> {
    let mix_wave = Waveform::new(mixture.to_vec(), sample_rate_hz)
        .map_err(EnhanceError::Signal)?;
    let clean_vec = clean.to_vec();
    let loss_fn = |g: &mut Graph, wave: Var| -> Result<Var, GradError> {
        match pair_loss_graph(model, g, wave, &clean_vec, None) {
            Ok(v) => Ok(v),
            Err(EnhanceError::Grad(e)) => Err(e),
            Err(other) => Err(GradError::Contract(other.to_string())),
        }
    };
    let perturbed = crate::attack::fgsm_perturb(loss_fn, &mix_wave, epsilon)
        .map_err(|e| EnhanceError::Attack(Box::new(e)))?;

    let (clean_loss, clean_grads) = pair_grads(model, mixture, clean)?;
    let (adv_loss, adv_grads) = pair_grads(model, &perturbed.samples, clean)?;
    let mut blended = clean_grads;
    for (b, a) in blended.iter_mut().zip(&adv_grads) {
        for (x, y) in b.data_mut().iter_mut().zip(a.data()) {
            *x = alpha * *x + (1.0 - alpha) * y;
        }
    }
    Ok((alpha * clean_loss + (1.0 - alpha) * adv_loss, blended))
}

fn validate_dataset(
    model: &EnhancerModel,
    dataset: &[(Waveform, Waveform)],
) -> Result<(), EnhanceError> {
    if dataset.is_empty() {
        return Err(EnhanceError::Parameter("empty training dataset".into()));
    }
    let want = model.input_len();
    for (i, (m, c)) in dataset.iter().enumerate() {
        if m.len() != want || c.len() != want {
            return Err(EnhanceError::Shape(format!(
                "pair {i}: lengths ({}, {}) != input_len {want}",
                m.len(),
                c.len()
            )));
        }
    }
    Ok(())
}

fn train_impl(
    model: &mut EnhancerModel,
    dataset: &[(Waveform, Waveform)],
    cfg: &TrainingConfig,
    adversarial: bool,
) -> Result<TrainReport, EnhanceError> {
    if !(0.0..=1.0).contains(&cfg.alpha) {
        return Err(EnhanceError::Parameter(format!(
            "alpha {} outside [0,1]",
            cfg.alpha
        )));
    }
    if cfg.batch_size == 0 {
        return Err(EnhanceError::Parameter("batch_size must be >= 1".into()));
    }
    validate_dataset(model, dataset)?;
    let sample_rate = dataset[0].0.sample_rate_hz;
    let mut state = AdamState::new(&model.params, cfg.lr);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let use_fgsm = adversarial && cfg.alpha < 1.0;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(crate::attack::mix_seed(cfg.seed, epoch as u64, 0));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            // per-pair gradients fan out across threads; the reduction below
            // is sequential in batch order, so schedules cannot change sums
            let results: Vec<Result<(f64, Vec<Tensor>), EnhanceError>> = batch
                .par_iter()
                .map(|&i| {
                    let (mix, clean) = &dataset[i];
                    if use_fgsm {
                        pair_grads_adversarial(
                            model,
                            &mix.samples,
                            &clean.samples,
                            cfg.alpha,
                            cfg.fgsm_epsilon,
                            sample_rate,
                        )
                    } else {
                        pair_grads(model, &mix.samples, &clean.samples)
                    }
                })
                .collect();
            let mut total: Option<Vec<Tensor>> = None;
            let mut batch_loss = 0.0;
            for r in results {
                let (loss, grads) = r?;
                batch_loss += loss;
                total = Some(match total {
                    None => grads,
                    Some(mut acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                                *x += y;
                            }
                        }
                        acc
                    }
                });
            }
            let mut grads = total.expect("non-empty batch");
            let scale = 1.0 / batch.len() as f64;
            for t in grads.iter_mut() {
                for v in t.data_mut() {
                    *v *= scale;
                }
            }
            adam_step(&mut model.params, &grads, &mut state)?;
            epoch_loss += batch_loss * scale;
        }
        epoch_losses.push(epoch_loss / order.chunks(cfg.batch_size).count() as f64);
    }

    let source_residual = match model.kind {
        EnhancerKind::Dnn => None,
        _ => {
            let mut total = 0.0;
            for (mix, _) in dataset {
                let (s_clean, s_adv) = model.separate(mix)?;
                let s_adv = s_adv.expect("two-source model");
                let rms = mix
                    .samples
                    .iter()
                    .zip(&s_clean.samples)
                    .zip(&s_adv.samples)
                    .map(|((m, c), a)| {
                        let r = c + a - m;
                        r * r
                    })
                    .sum::<f64>()
                    / mix.len() as f64;
                total += rms.sqrt();
            }
            Some(total / dataset.len() as f64)
        }
    };
    Ok(TrainReport {
        epoch_losses,
        source_residual,
    })
}

/// Standard training: minimize the source-regression loss over the dataset.
pub fn train_enhancer(
    model: &mut EnhancerModel,
    dataset: &[(Waveform, Waveform)],
    cfg: &TrainingConfig,
) -> Result<TrainReport, EnhanceError> {
    train_impl(model, dataset, cfg, false)
}

/// Adversarial training: per batch, blend the clean loss with the loss on
/// FGSM-perturbed mixtures, `alpha*J_clean + (1-alpha)*J_perturbed`. With
/// `alpha = 1` the FGSM branch is skipped and updates are bit-identical to
/// [`train_enhancer`].
pub fn adversarial_train(
    model: &mut EnhancerModel,
    dataset: &[(Waveform, Waveform)],
    cfg: &TrainingConfig,
) -> Result<TrainReport, EnhanceError> {
    train_impl(model, dataset, cfg, true)
}
