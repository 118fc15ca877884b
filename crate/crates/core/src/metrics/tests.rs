use super::*;
use crate::signal::{add_white_noise, Waveform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Broadband amplitude-modulated noise: a stand-in clip with energy and
/// modulation in every octave band.
fn speechish_clip(seed: u64, t: usize) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = 16000u32;
    let samples = (0..t)
        .map(|i| {
            let env = 0.55 + 0.45 * (2.0 * std::f64::consts::PI * 3.0 * i as f64 / sr as f64).sin();
            env * rng.gen_range(-0.5..0.5)
        })
        .collect();
    Waveform::new(samples, sr).unwrap()
}

/// Exponential-time reference edit distance for short sequences.
fn edit_oracle<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let sub = edit_oracle(&a[1..], &b[1..]) + usize::from(a[0] != b[0]);
    let del = edit_oracle(&a[1..], b) + 1;
    let ins = edit_oracle(a, &b[1..]) + 1;
    sub.min(del).min(ins)
}

#[test]
fn snr_power_ratio_100() {
    let x = Waveform::new(vec![0.1; 256], 16000).unwrap();
    let v = Waveform::new(vec![0.01; 256], 16000).unwrap();
    let s = snr_db(&x, &v).unwrap();
    assert!((s - 20.0).abs() < 1e-9);
}

#[test]
fn snr_equal_powers_zero_db() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let x = Waveform::new((0..512).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16000).unwrap();
    assert_eq!(snr_db(&x, &x).unwrap(), 0.0);
}

#[test]
fn snr_scaling_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let x = Waveform::new((0..512).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16000).unwrap();
    let v = Waveform::new((0..512).map(|_| rng.gen_range(-0.2..0.2)).collect(), 16000).unwrap();
    let base = snr_db(&x, &v).unwrap();
    for a in [2.0, 0.5, 3.7, 10.0] {
        let scaled = Waveform::new(v.samples.iter().map(|s| a * s).collect(), 16000).unwrap();
        let got = snr_db(&x, &scaled).unwrap();
        assert!((got - (base - 20.0 * a.log10())).abs() < 1e-9, "a={a}");
    }
}

#[test]
fn snr_edge_signals() {
    let x = Waveform::new(vec![0.1; 64], 16000).unwrap();
    let zero = Waveform::new(vec![0.0; 64], 16000).unwrap();
    assert_eq!(snr(&x, &zero).unwrap(), Snr::Infinite);
    assert!(matches!(
        snr(&zero, &x),
        Err(MetricError::SilentReference)
    ));
}

#[test]
fn pesq_identity_is_exactly_4_5() {
    let clip = speechish_clip(1, 16384);
    assert_eq!(pesq_core(&clip, &clip).unwrap(), 4.5);
}

#[test]
fn pesq_aggregation_constants() {
    let v = pesq_from_disturbances(10.0, 20.0);
    assert!((v - 2.882).abs() < 1e-9, "4.5 - 1.0 - 0.618 = {v}");
}

#[test]
fn pesq_more_noise_scores_lower() {
    let clip = speechish_clip(2, 16384);
    // noise at 0 dB vs 15 dB SNR relative to the clip
    let p = clip.power().sqrt();
    let noisy = |sigma: f64, seed: u64| {
        add_white_noise(&clip, sigma, seed).unwrap()
    };
    let at0 = pesq_core(&clip, &noisy(p, 7)).unwrap();
    let at15 = pesq_core(&clip, &noisy(p * 10f64.powf(-15.0 / 20.0), 7)).unwrap();
    assert!(at0 < at15, "0 dB ({at0}) must score below 15 dB ({at15})");
    assert!(at15 < 4.5);
}

#[test]
fn pesq_monotone_over_noise_ladder() {
    for seed in 0..3u64 {
        let clip = speechish_clip(100 + seed, 16384);
        let mut prev = f64::INFINITY;
        for sigma in [0.001, 0.003, 0.01, 0.03, 0.1] {
            let noisy = add_white_noise(&clip, sigma, 55).unwrap();
            let score = pesq_core(&clip, &noisy).unwrap();
            assert!(score <= prev + 1e-12, "sigma {sigma}: {score} > {prev}");
            prev = score;
        }
    }
}

#[test]
fn sti_identity_is_exactly_one() {
    let clip = speechish_clip(3, 32768);
    assert_eq!(sti(&clip, &clip).unwrap(), 1.0);
}

#[test]
fn sti_midpoint_ratio_maps_to_half() {
    assert_eq!(transmission_index(0.5), 0.5);
    assert_eq!(transmission_index(1.0), 1.0);
    assert_eq!(transmission_index(0.0), 0.0);
}

#[test]
fn sti_strong_noise_scores_below_clean_channel() {
    let clip = speechish_clip(4, 32768);
    // -10 dB SNR: noise power 10x the clip power
    let sigma = clip.rms() * 10f64.powf(10.0 / 20.0);
    let noisy = add_white_noise(&clip, sigma, 9).unwrap();
    let degraded = sti(&clip, &noisy).unwrap();
    assert!(degraded < 1.0);
    assert!(degraded < 0.8, "strong noise should depress STI, got {degraded}");
}

#[test]
fn sti_silent_clean_band_errors() {
    let silence = Waveform::new(vec![0.0; 32768], 16000).unwrap();
    let clip = speechish_clip(5, 32768);
    assert!(matches!(
        sti(&silence, &clip),
        Err(MetricError::InsufficientModulation { .. })
    ));
}

#[test]
fn stoi_identity_and_scale_invariance() {
    let clip = speechish_clip(6, 32768);
    assert_eq!(stoi(&clip, &clip).unwrap(), 1.0);
    let doubled = Waveform::new(clip.samples.iter().map(|v| 2.0 * v).collect(), 16000).unwrap();
    assert_eq!(stoi(&clip, &doubled).unwrap(), 1.0);
}

#[test]
fn stoi_decorrelates_under_independent_noise() {
    // The min()-clipping rule gives white-noise degradations a score floor
    // near 0.4 (it tracks the clean vector wherever the degraded is loud),
    // so the oracle pins both the measured ceiling and the ordering against
    // a correlated degradation of the same level.
    let flat_noise = |seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..32768).map(|_| rng.gen_range(-0.5..0.5)).collect(), 16000).unwrap()
    };
    for seed in 0..10u64 {
        let clip = flat_noise(300 + seed);
        let independent = flat_noise(999 + seed);
        let decorrelated = stoi(&clip, &independent).unwrap();
        let correlated = {
            let mixed = Waveform::new(
                clip.samples
                    .iter()
                    .zip(&independent.samples)
                    .map(|(a, b)| a + b)
                    .collect(),
                16000,
            )
            .unwrap();
            stoi(&clip, &mixed).unwrap()
        };
        assert!(decorrelated < 0.45, "seed {seed}: decorrelated stoi {decorrelated}");
        assert!(
            decorrelated + 0.2 < correlated,
            "seed {seed}: no decorrelation gap ({decorrelated} vs {correlated})"
        );
    }
}

#[test]
fn stoi_too_short_is_rejected() {
    let clip = speechish_clip(7, 2048);
    assert!(matches!(
        stoi(&clip, &clip),
        Err(MetricError::TooShort { .. })
    ));
}

#[test]
fn wer_examples() {
    let r = ["open", "the", "door"];
    assert_eq!(wer(&r, &r).unwrap(), 0.0);
    let h = ["open", "door"];
    assert!((wer(&r, &h).unwrap() - 100.0 / 3.0).abs() < 1e-9);
    assert!(matches!(wer(&[], &h), Err(MetricError::EmptyReference)));
}

#[test]
fn wer_matches_bruteforce_on_short_pairs() {
    let vocab = ["a", "b", "c"];
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..200 {
        let ref_len = rng.gen_range(1..=6);
        let hyp_len = rng.gen_range(0..=6);
        let r: Vec<&str> = (0..ref_len).map(|_| vocab[rng.gen_range(0..3)]).collect();
        let h: Vec<&str> = (0..hyp_len).map(|_| vocab[rng.gen_range(0..3)]).collect();
        let expect = 100.0 * edit_oracle(&r, &h) as f64 / r.len() as f64;
        assert_eq!(wer(&r, &h).unwrap(), expect);
    }
}

#[test]
fn edit_similarity_examples_and_oracle() {
    assert_eq!(edit_similarity("abc", "abc"), 1.0);
    assert!((edit_similarity("abc", "abd") - (1.0 - 1.0 / 3.0)).abs() < 1e-12);
    assert_eq!(edit_similarity("", ""), 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let alphabet = ['x', 'y', 'z'];
    for _ in 0..200 {
        let la = rng.gen_range(0..=8);
        let lb = rng.gen_range(0..=8);
        let a: String = (0..la).map(|_| alphabet[rng.gen_range(0..3)]).collect();
        let b: String = (0..lb).map(|_| alphabet[rng.gen_range(0..3)]).collect();
        let ca: Vec<char> = a.chars().collect();
        let cb: Vec<char> = b.chars().collect();
        let denom = ca.len().max(cb.len());
        let expect = if denom == 0 {
            1.0
        } else {
            1.0 - edit_oracle(&ca, &cb) as f64 / denom as f64
        };
        assert_eq!(edit_similarity(&a, &b), expect);
        assert_eq!(edit_similarity(&a, &b), edit_similarity(&b, &a), "symmetry");
    }
}

#[test]
fn bundle_identity_row() {
    let clip = speechish_clip(8, 32768);
    let r = evaluate_bundle(&clip, &clip, None, None, "clean").unwrap();
    assert_eq!(r.pesq, 4.5);
    assert_eq!(r.sti, 1.0);
    assert_eq!(r.stoi, 1.0);
    assert!(r.snr_db.is_infinite());
    assert!(r.wer_pct.is_none());
}

#[test]
fn bundle_noisy_row_all_finite() {
    let clip = speechish_clip(9, 32768);
    let noisy = add_white_noise(&clip, clip.rms(), 77).unwrap();
    let r = evaluate_bundle(&clip, &noisy, Some("open the door"), Some("open door"), "noisy")
        .unwrap();
    assert!(r.pesq < 4.5);
    assert!(r.pesq.is_finite());
    assert!(r.sti.is_finite() && (0.0..=1.0).contains(&r.sti));
    assert!(r.stoi.is_finite());
    assert!(r.snr_db.is_finite());
    assert!((r.wer_pct.unwrap() - 100.0 / 3.0).abs() < 1e-9);
}

#[test]
fn bundle_attributes_member_errors() {
    let clip = speechish_clip(10, 2048); // too short for stoi
    match evaluate_bundle(&clip, &clip, None, None, "short") {
        Err(MetricError::Field { field, .. }) => assert_eq!(field, "stoi"),
        other => panic!("expected field-attributed error, got {other:?}"),
    }
}

#[test]
fn csv_and_markdown_schema() {
    let r = EvalReport::new("clean", 4.5, 1.0, 1.0, f64::INFINITY, None, Some(0.0)).unwrap();
    let csv = reports_to_csv(&[r.clone()]);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "condition,pesq,sti,stoi,snr_db,wer_pct,rosa_pct"
    );
    assert_eq!(lines.next().unwrap(), "clean,4.5000,1.0000,1.0000,inf,,0.0000");
    let md = reports_to_markdown(&[r]);
    assert!(md.starts_with("| condition |"));
    assert_eq!(md.lines().count(), 3);
}

#[test]
fn report_invariants_enforced() {
    assert!(EvalReport::new("x", 4.6, 1.0, 1.0, 0.0, None, None).is_err());
    assert!(EvalReport::new("x", 4.0, 1.2, 1.0, 0.0, None, None).is_err());
}
