//! Black-box evolutionary attack.
//!
//! The oracle is a pure waveform→text function — no gradients ever cross
//! that boundary. Fitness scalarizes two objectives: feature fidelity
//! `f1 = 1 / (1 + ||MFCC(x̃) - MFCC(x)||₂)` and target-text similarity
//! `f2 = edit_similarity(decode(x̃), target)`, the latter averaged over
//! seeded channel draws in the over-the-air setting. Tournament selection,
//! block-uniform crossover, Gaussian mutation clipped to the ℓ∞ budget, and
//! elitism with carried-over fitness (so the best fitness never regresses).

use super::{mix_seed, AdversarialResult, AttackError};
use crate::asr::Transcript;
use crate::metrics::edit_similarity;
use crate::signal::{apply_channel, ChannelModel, MfccConfig, MfccPlan, Waveform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

const TOURNAMENT: usize = 3;
const CROSSOVER_BLOCK: usize = 256;

/// A black-box transcription oracle: waveforms in, text out.
pub type DecodeOracle<'a> = &'a (dyn Fn(&Waveform) -> Transcript + Sync);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvoConfig {
    pub population: usize,
    pub generations: usize,
    pub mutation_sigma: f64,
    pub crossover_rate: f64,
    pub elite_count: usize,
    /// Weight of the MFCC-fidelity objective.
    pub w1: f64,
    /// Weight of the text-similarity objective.
    pub w2: f64,
    /// Channel passes averaged into f2 when a channel is supplied.
    pub channel_draws: usize,
    /// ℓ∞ clip on candidate perturbations.
    pub delta_inf: f64,
}

impl Default for EvoConfig {
    fn default() -> Self {
        EvoConfig {
            population: 40,
            generations: 200,
            mutation_sigma: 0.01,
            crossover_rate: 0.7,
            elite_count: 4,
            w1: 0.5,
            w2: 0.5,
            channel_draws: 1,
            delta_inf: 0.1,
        }
    }
}

impl EvoConfig {
    pub fn validate(&self) -> Result<(), AttackError> {
        if self.population == 0 || self.generations == 0 {
            return Err(AttackError::Parameter(
                "population and generations must be >= 1".into(),
            ));
        }
        if self.elite_count >= self.population {
            return Err(AttackError::Parameter(
                "elite_count must be smaller than the population".into(),
            ));
        }
        if self.crossover_rate > 0.0 && self.population < 2 {
            return Err(AttackError::Parameter(
                "crossover needs a population of at least 2".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(AttackError::Parameter("crossover_rate outside [0,1]".into()));
        }
        if (self.w1 + self.w2 - 1.0).abs() > 1e-9 {
            return Err(AttackError::Parameter(format!(
                "objective weights must sum to 1, got {} + {}",
                self.w1, self.w2
            )));
        }
        if self.mutation_sigma < 0.0 || self.delta_inf < 0.0 || !self.delta_inf.is_finite() {
            return Err(AttackError::Parameter(
                "mutation_sigma and delta_inf must be finite and >= 0".into(),
            ));
        }
        if self.channel_draws == 0 {
            return Err(AttackError::Parameter("channel_draws must be >= 1".into()));
        }
        Ok(())
    }
}

fn candidate_of(x: &Waveform, v: &[f64]) -> Waveform {
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

/// The two objective values of a candidate: feature fidelity vs the carrier
/// and decoded-text similarity to the target (averaged over channel draws
/// when a channel is given).
pub fn evo_fitness(
    oracle: DecodeOracle<'_>,
    x: &Waveform,
    candidate: &Waveform,
    y_target: &Transcript,
    plan: &MfccPlan,
    base_features: &crate::signal::FeatureMatrix,
    channel: Option<&ChannelModel>,
    channel_draws: usize,
    seed: u64,
) -> Result<(f64, f64), AttackError> {
    let feats = plan.compute(candidate)?;
    let f1 = 1.0 / (1.0 + feats.l2_distance(base_features));
    let f2 = match channel {
        None => edit_similarity(oracle(candidate).as_str(), y_target.as_str()),
        Some(ch) => {
            let zero_v = Waveform {
                samples: vec![0.0; candidate.len()],
                sample_rate_hz: candidate.sample_rate_hz,
            };
            let mut total = 0.0;
            for d in 0..channel_draws {
                let draw_seed = mix_seed(seed, d as u64, 0x5EED);
                let ir = ch.draw_ir_index(mix_seed(draw_seed, 1, 0));
                let received = apply_channel(candidate, &zero_v, ch, ir, draw_seed)?;
                let clamped = Waveform {
                    samples: received.samples.iter().map(|s| s.clamp(-1.0, 1.0)).collect(),
                    sample_rate_hz: received.sample_rate_hz,
                };
                total += edit_similarity(oracle(&clamped).as_str(), y_target.as_str());
            }
            total / channel_draws as f64
        }
    };
    Ok((f1, f2))
}

#[derive(Clone)]
struct Individual {
    v: Vec<f64>,
    f1: f64,
    f2: f64,
    fitness: f64,
}

fn better(a: &Individual, b: &Individual) -> std::cmp::Ordering {
    // higher fitness first; ties broken by f2
    b.fitness
        .partial_cmp(&a.fitness)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(b.f2.partial_cmp(&a.f2).unwrap_or(std::cmp::Ordering::Equal))
}

/// Evolutionary black-box attack. The per-generation best fitness is
/// appended to the result's objective log; elitism guarantees it never
/// decreases.
pub fn evolutionary_attack(
    oracle: DecodeOracle<'_>,
    x: &Waveform,
    y_target: &Transcript,
    cfg: &EvoConfig,
    channel: Option<&ChannelModel>,
    seed: u64,
) -> Result<AdversarialResult, AttackError> {
    cfg.validate()?;
    let plan = MfccPlan::new(MfccConfig::default(), x.sample_rate_hz)?;
    let base_features = plan.compute(x)?;

    let evaluate = |v: &Vec<f64>, eval_seed: u64| -> Result<Individual, AttackError> {
        let cand = candidate_of(x, v);
        let (f1, f2) = evo_fitness(
            oracle,
            x,
            &cand,
            y_target,
            &plan,
            &base_features,
            channel,
            cfg.channel_draws,
            eval_seed,
        )?;
        Ok(Individual {
            v: v.clone(),
            f1,
            f2,
            fitness: cfg.w1 * f1 + cfg.w2 * f2,
        })
    };

    // population: the unperturbed carrier plus Gaussian neighbours
    let init: Vec<Vec<f64>> = (0..cfg.population)
        .map(|i| {
            if i == 0 || cfg.mutation_sigma == 0.0 {
                vec![0.0; x.len()]
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0, i as u64));
                let normal = Normal::new(0.0, cfg.mutation_sigma).expect("sigma checked");
                (0..x.len())
                    .map(|_| {
                        normal
                            .sample(&mut rng)
                            .clamp(-cfg.delta_inf, cfg.delta_inf)
                    })
                    .collect()
            }
        })
        .collect();
    let mut population: Vec<Individual> = init
        .par_iter()
        .enumerate()
        .map(|(i, v)| evaluate(v, mix_seed(seed, 1, i as u64)))
        .collect::<Result<_, _>>()?;
    population.sort_by(better);

    let mut log = Vec::with_capacity(cfg.generations);
    let mut generations_run = cfg.generations;
    for gen in 0..cfg.generations {
        let best = &population[0];
        if let Some(last) = log.last() {
            assert!(
                best.fitness >= *last,
                "elitism must keep best fitness non-decreasing"
            );
        }
        log.push(best.fitness);

        // early exit once the best candidate decodes to the target directly
        if oracle(&candidate_of(x, &best.v)) == *y_target {
            generations_run = gen;
            break;
        }
        if gen + 1 == cfg.generations {
            break;
        }

        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 2 + gen as u64, 0xC0));
        let mut children: Vec<Vec<f64>> = Vec::with_capacity(cfg.population - cfg.elite_count);
        let normal = Normal::new(0.0, cfg.mutation_sigma.max(f64::MIN_POSITIVE))
            .expect("sigma checked");
        while children.len() < cfg.population - cfg.elite_count {
            let pick = |rng: &mut ChaCha8Rng| -> usize {
                let mut best_idx = rng.gen_range(0..population.len());
                for _ in 1..TOURNAMENT {
                    let c = rng.gen_range(0..population.len());
                    if better(&population[c], &population[best_idx]).is_lt() {
                        best_idx = c;
                    }
                }
                best_idx
            };
            let a = pick(&mut rng);
            let mut child = population[a].v.clone();
            if rng.gen_bool(cfg.crossover_rate) {
                let b = pick(&mut rng);
                for (block_idx, chunk) in child.chunks_mut(CROSSOVER_BLOCK).enumerate() {
                    if rng.gen_bool(0.5) {
                        let start = block_idx * CROSSOVER_BLOCK;
                        chunk.copy_from_slice(&population[b].v[start..start + chunk.len()]);
                    }
                }
            }
            if cfg.mutation_sigma > 0.0 {
                for s in child.iter_mut() {
                    *s = (*s + normal.sample(&mut rng)).clamp(-cfg.delta_inf, cfg.delta_inf);
                }
            }
            children.push(child);
        }

        // elites keep their evaluated fitness; only children are scored
        let scored: Vec<Individual> = children
            .par_iter()
            .enumerate()
            .map(|(i, v)| evaluate(v, mix_seed(seed, 1000 + gen as u64, i as u64)))
            .collect::<Result<_, _>>()?;
        population.truncate(cfg.elite_count);
        population.extend(scored);
        population.sort_by(better);
    }

    let best = population.into_iter().next().expect("population non-empty");
    let decoded = oracle(&candidate_of(x, &best.v));
    Ok(AdversarialResult::assemble(
        x,
        best.v,
        decoded,
        y_target,
        generations_run,
        log,
    ))
}
