use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tone(freq: f64, t: usize, sr: u32, amp: f64) -> Waveform {
    let samples = (0..t)
        .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
        .collect();
    Waveform::new(samples, sr).unwrap()
}

fn random_wave(rng: &mut ChaCha8Rng, t: usize, sr: u32) -> Waveform {
    Waveform::new((0..t).map(|_| rng.gen_range(-0.5..0.5)).collect(), sr).unwrap()
}

/// Direct O(N^2) DFT power spectrum, the independent oracle for the FFT path.
fn dft_power_oracle(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    (0..n / 2 + 1)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &x) in frame.iter().enumerate() {
                let a = -2.0 * std::f64::consts::PI * (i * k) as f64 / n as f64;
                re += x * a.cos();
                im += x * a.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// Naive O(T*K) truncated convolution, the oracle for the FFT path.
fn conv_oracle(x: &[f64], h: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|t| {
            h.iter()
                .enumerate()
                .filter(|(k, _)| *k <= t)
                .map(|(k, &hv)| hv * x[t - k])
                .sum()
        })
        .collect()
}

#[test]
fn stft_zero_signal_is_zero() {
    let w = Waveform::new(vec![0.0; 4096], 16000).unwrap();
    let s = stft(&w, 512, 256).unwrap();
    assert!(s.values.iter().all(|&v| v == 0.0));
}

#[test]
fn stft_shape_arithmetic() {
    let w = Waveform::new(vec![0.1; 16384], 16000).unwrap();
    let s = stft(&w, 512, 256).unwrap();
    assert_eq!((s.frames, s.bins), (63, 257));
}

#[test]
fn stft_too_short_rejected() {
    let w = Waveform::new(vec![0.1; 100], 16000).unwrap();
    assert!(matches!(
        stft(&w, 512, 256),
        Err(SignalError::TooShort { context: "stft", .. })
    ));
}

#[test]
fn stft_tone_peaks_at_expected_bin_and_matches_dft_oracle() {
    let w = tone(1000.0, 4096, 16000, 0.8);
    let s = stft(&w, 512, 256).unwrap();
    let expected_bin = (1000.0 * 512.0 / 16000.0_f64).round() as usize;
    assert_eq!(expected_bin, 32);
    let window = hann_window(512);
    for f in 0..s.frames {
        let row = s.row(f);
        let argmax = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, expected_bin, "frame {f}");
        // oracle comparison on a direct DFT of the same windowed frame
        let frame: Vec<f64> = (0..512).map(|i| w.samples[f * 256 + i] * window[i]).collect();
        let oracle = dft_power_oracle(&frame);
        for (a, b) in row.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "fft vs dft oracle");
        }
    }
}

#[test]
fn stft_concatenation_contains_part_frames() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    // part lengths multiples of hop so the second part's frames stay aligned
    let a = random_wave(&mut rng, 2048, 16000);
    let b = random_wave(&mut rng, 1536, 16000);
    let mut joined = a.samples.clone();
    joined.extend_from_slice(&b.samples);
    let joined = Waveform::new(joined, 16000).unwrap();
    let s_join = stft(&joined, 512, 256).unwrap();
    let s_a = stft(&a, 512, 256).unwrap();
    let s_b = stft(&b, 512, 256).unwrap();
    let interior_a: f64 = (0..s_a.frames).map(|f| s_a.row(f).iter().sum::<f64>()).sum();
    let interior_b: f64 = (0..s_b.frames).map(|f| s_b.row(f).iter().sum::<f64>()).sum();
    assert!(s_join.total_energy() >= interior_a - 1e-9);
    assert!(s_join.total_energy() >= interior_b - 1e-9);
}

#[test]
fn log_power_examples() {
    let s = Spectrogram {
        values: vec![1.0, 0.0],
        frames: 1,
        bins: 2,
        frame_len: 2,
        hop: 1,
    };
    let l = log_power(&s, 1e-10).unwrap();
    assert_eq!(l.values[0], 0.0);
    assert_eq!(l.values[1], 1e-10f64.ln());
    assert!(log_power(&s, 0.0).is_err());
}

#[test]
fn log_power_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let values: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..3.0)).collect();
    let s = Spectrogram {
        values: values.clone(),
        frames: 8,
        bins: 8,
        frame_len: 14,
        hop: 7,
    };
    let l = log_power(&s, 1e-6).unwrap();
    for (got, v) in l.values.iter().zip(&values) {
        let expect = if *v > 1e-6 { v.ln() } else { 1e-6f64.ln() };
        assert_eq!(*got, expect);
    }
}

#[test]
fn mfcc_constant_zero_has_identical_rows() {
    let w = Waveform::new(vec![0.0; 4096], 16000).unwrap();
    let f = mfcc(&w, MfccConfig::default()).unwrap();
    for r in 1..f.frames {
        assert_eq!(f.row(0), f.row(r));
    }
}

#[test]
fn mfcc_shape_arithmetic() {
    let w = Waveform::new(vec![0.3; 16384], 16000).unwrap();
    let f = mfcc(&w, MfccConfig::default()).unwrap();
    assert_eq!((f.frames, f.n_coeff), (63, 13));
}

#[test]
fn mfcc_rejects_bad_params() {
    let w = Waveform::new(vec![0.3; 4096], 16000).unwrap();
    let cfg = MfccConfig {
        n_coeff: 30,
        ..MfccConfig::default()
    };
    assert!(matches!(mfcc(&w, cfg), Err(SignalError::Parameter(_))));
    let short = Waveform::new(vec![0.3; 100], 16000).unwrap();
    assert!(matches!(
        mfcc(&short, MfccConfig::default()),
        Err(SignalError::TooShort { .. })
    ));
}

#[test]
fn mfcc_hop_shift_shifts_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let w = random_wave(&mut rng, 4096, 16000);
    let cfg = MfccConfig::default();
    let base = mfcc(&w, cfg).unwrap();
    // shift input by exactly one hop (prepend zeros)
    let mut shifted = vec![0.0; cfg.hop];
    shifted.extend_from_slice(&w.samples);
    let shifted = mfcc(&Waveform::new(shifted, 16000).unwrap(), cfg).unwrap();
    for f in 0..base.frames {
        for (a, b) in base.row(f).iter().zip(shifted.row(f + 1)) {
            assert!((a - b).abs() < 1e-9, "row {f} differs after hop shift");
        }
    }
}

#[test]
fn mfcc_ignores_trailing_samples_that_start_no_frame() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let w = random_wave(&mut rng, 4096, 16000);
    let cfg = MfccConfig::default();
    let base = mfcc(&w, cfg).unwrap();
    let mut extended = w.samples.clone();
    extended.extend(std::iter::repeat(0.42).take(cfg.hop - 1));
    let ext = mfcc(&Waveform::new(extended, 16000).unwrap(), cfg).unwrap();
    assert_eq!(base.frames, ext.frames);
    assert_eq!(base.values, ext.values);
}

#[test]
fn bandpass_passes_midband_tone() {
    let w = tone(2000.0, 16384, 16000, 0.5);
    let out = bandpass(&w, 1000.0, 4000.0).unwrap();
    assert_eq!(out.len(), w.len());
    assert!(out.rms() >= 0.9 * w.rms(), "midband tone must survive");
}

#[test]
fn bandpass_attenuates_stopband_tone() {
    let w = tone(100.0, 16384, 16000, 0.5);
    let out = bandpass(&w, 1000.0, 4000.0).unwrap();
    let atten_db = 20.0 * (w.rms() / out.rms().max(1e-300)).log10();
    assert!(atten_db >= 20.0, "stop-band attenuation {atten_db} dB");
}

#[test]
fn bandpass_zero_is_zero_and_edges_validated() {
    let w = Waveform::new(vec![0.0; 2048], 16000).unwrap();
    let out = bandpass(&w, 1000.0, 4000.0).unwrap();
    assert!(out.samples.iter().all(|&v| v.abs() < 1e-300));
    assert!(bandpass(&w, 0.0, 4000.0).is_err());
    assert!(bandpass(&w, 1000.0, 9000.0).is_err());
    assert!(bandpass(&w, 4000.0, 1000.0).is_err());
}

#[test]
fn bandpass_and_convolve_are_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for _ in 0..5 {
        let x = random_wave(&mut rng, 2048, 16000);
        let y = random_wave(&mut rng, 2048, 16000);
        let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let combo = Waveform::new(
            x.samples
                .iter()
                .zip(&y.samples)
                .map(|(xa, ya)| a * xa + b * ya)
                .collect(),
            16000,
        )
        .unwrap();

        let f_combo = bandpass(&combo, 1000.0, 4000.0).unwrap();
        let fx = bandpass(&x, 1000.0, 4000.0).unwrap();
        let fy = bandpass(&y, 1000.0, 4000.0).unwrap();
        for i in 0..combo.len() {
            let lin = a * fx.samples[i] + b * fy.samples[i];
            assert!((f_combo.samples[i] - lin).abs() < 1e-9);
        }

        let h = random_wave(&mut rng, 32, 16000);
        let c_combo = convolve_ir(&combo, &h).unwrap();
        let cx = convolve_ir(&x, &h).unwrap();
        let cy = convolve_ir(&y, &h).unwrap();
        for i in 0..combo.len() {
            let lin = a * cx.samples[i] + b * cy.samples[i];
            assert!((c_combo.samples[i] - lin).abs() < 1e-9);
        }
    }
}

#[test]
fn convolve_identity_and_delay_kernels() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let x = random_wave(&mut rng, 512, 16000);
    let unit = Waveform::new(vec![1.0], 16000).unwrap();
    let out = convolve_ir(&x, &unit).unwrap();
    for (a, b) in out.samples.iter().zip(&x.samples) {
        assert!((a - b).abs() < 1e-12);
    }
    let mut delayed_kernel = vec![0.0; 8];
    delayed_kernel.push(1.0);
    let k = Waveform::new(delayed_kernel, 16000).unwrap();
    let out = convolve_ir(&x, &k).unwrap();
    for i in 0..8 {
        assert!(out.samples[i].abs() < 1e-12);
    }
    for i in 8..x.len() {
        assert!((out.samples[i] - x.samples[i - 8]).abs() < 1e-12);
    }
}

#[test]
fn convolve_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let x = random_wave(&mut rng, 1000, 16000);
    let h = random_wave(&mut rng, 32, 16000);
    let fast = convolve_ir(&x, &h).unwrap();
    let slow = conv_oracle(&x.samples, &h.samples);
    for (a, b) in fast.samples.iter().zip(&slow) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn correlate_adjoint_is_transpose_of_convolve() {
    // <conv(x,h), g> == <x, adjoint(g,h)> for random vectors
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    let x = random_wave(&mut rng, 300, 16000);
    let h: Vec<f64> = (0..17).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let g: Vec<f64> = (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let hw = Waveform::new(h.clone(), 16000).unwrap();
    let conv = convolve_ir(&x, &hw).unwrap();
    let lhs: f64 = conv.samples.iter().zip(&g).map(|(a, b)| a * b).sum();
    let adj = correlate_adjoint(&g, &h);
    let rhs: f64 = x.samples.iter().zip(&adj).map(|(a, b)| a * b).sum();
    assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
}

#[test]
fn white_noise_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let x = random_wave(&mut rng, 1000, 16000);
    let same = add_white_noise(&x, 0.0, 7).unwrap();
    assert_eq!(same.samples, x.samples);

    let long = Waveform::new(vec![0.0; 100_000], 16000).unwrap();
    let noisy = add_white_noise(&long, 0.1, 7).unwrap();
    let var = noisy.samples.iter().map(|v| v * v).sum::<f64>() / noisy.len() as f64;
    assert!((var - 0.01).abs() < 0.0005, "sample variance {var}");

    let again = add_white_noise(&long, 0.1, 7).unwrap();
    assert_eq!(noisy.samples, again.samples, "same seed, same noise");
    assert!(add_white_noise(&x, -0.1, 7).is_err());
}

#[test]
fn apply_channel_identity_case() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let x = random_wave(&mut rng, 2048, 16000);
    let v = Waveform::new(vec![0.0; 2048], 16000).unwrap();
    let unit = Waveform::new(vec![1.0], 16000).unwrap();
    let channel = ChannelModel::new(vec![unit], 1000.0, 4000.0, 0.0).unwrap();
    let out = apply_channel(&x, &v, &channel, 0, 5).unwrap();
    for (a, b) in out.samples.iter().zip(&x.samples) {
        assert!((a - b).abs() < 1e-12, "identity channel must be identity");
    }
}

#[test]
fn apply_channel_is_the_three_step_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let x = random_wave(&mut rng, 2048, 16000);
    let v = random_wave(&mut rng, 2048, 16000);
    let channel =
        ChannelModel::synthetic_bank(3, 64, 16000, 1000.0, 4000.0, 0.01, 99).unwrap();
    let out = apply_channel(&x, &v, &channel, 1, 5).unwrap();
    let manual = {
        let bv = bandpass(&v, 1000.0, 4000.0).unwrap();
        let mixed = Waveform::new(
            x.samples.iter().zip(&bv.samples).map(|(a, b)| a + b).collect(),
            16000,
        )
        .unwrap();
        let conv = convolve_ir(&mixed, &channel.impulse_responses[1]).unwrap();
        add_white_noise(&conv, 0.01, 5).unwrap()
    };
    assert_eq!(out.samples, manual.samples);
}

#[test]
fn apply_channel_linearity_in_perturbation() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let x = random_wave(&mut rng, 2048, 16000);
    let v = random_wave(&mut rng, 2048, 16000);
    let channel = ChannelModel::synthetic_bank(2, 48, 16000, 1000.0, 4000.0, 0.0, 3).unwrap();
    let h = &channel.impulse_responses[0];
    let out = apply_channel(&x, &v, &channel, 0, 5).unwrap();
    let conv_x = convolve_ir(&x, h).unwrap();
    let conv_bv = convolve_ir(&bandpass(&v, 1000.0, 4000.0).unwrap(), h).unwrap();
    for i in 0..x.len() {
        let lhs = out.samples[i] - conv_x.samples[i];
        assert!((lhs - conv_bv.samples[i]).abs() < 1e-9);
    }
}

#[test]
fn apply_channel_rejects_length_mismatch() {
    let x = Waveform::new(vec![0.1; 100], 16000).unwrap();
    let v = Waveform::new(vec![0.1; 99], 16000).unwrap();
    let channel = ChannelModel::synthetic_bank(1, 16, 16000, 1000.0, 4000.0, 0.0, 1).unwrap();
    assert!(apply_channel(&x, &v, &channel, 0, 0).is_err());
}

#[test]
fn wav_roundtrip_quantization_bound() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ramp.wav");
    let samples: Vec<f64> = (0..1000).map(|i| -1.0 + 2.0 * i as f64 / 999.0).collect();
    let w = Waveform::new(samples, 16000).unwrap();
    wav_write(&w, &path).unwrap();
    let back = wav_read(&path).unwrap();
    assert_eq!(back.len(), w.len());
    assert_eq!(back.sample_rate_hz, 16000);
    for (a, b) in w.samples.iter().zip(&back.samples) {
        assert!((a - b).abs() <= 1.0 / 32767.0);
    }
}

#[test]
fn wav_rejects_8bit_and_truncated() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("good.wav");
    let w = Waveform::new(vec![0.5; 64], 16000).unwrap();
    wav_write(&w, &path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();

    // flip bits_per_sample (offset 34) to 8
    let mut bad = bytes.clone();
    bad[34] = 8;
    let bad_path = dir.path().join("8bit.wav");
    std::fs::write(&bad_path, &bad).unwrap();
    match wav_read(&bad_path) {
        Err(SignalError::Format { field, .. }) => assert_eq!(field, "bits_per_sample"),
        other => panic!("expected format error, got {other:?}"),
    }

    // declare more data than present
    let dlen = bytes.len();
    bytes[40..44].copy_from_slice(&(dlen as u32 * 2).to_le_bytes());
    let bad_path = dir.path().join("short.wav");
    std::fs::write(&bad_path, &bytes).unwrap();
    match wav_read(&bad_path) {
        Err(SignalError::Format { field, .. }) => assert_eq!(field, "data chunk"),
        other => panic!("expected format error, got {other:?}"),
    }
}

#[test]
fn channel_bank_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let channel = ChannelModel::synthetic_bank(4, 64, 16000, 1000.0, 4000.0, 0.02, 11).unwrap();
    channel.save(dir.path()).unwrap();
    let back = ChannelModel::load(dir.path()).unwrap();
    assert_eq!(back.impulse_responses.len(), 4);
    assert_eq!(back.bpf_low_hz, 1000.0);
    assert_eq!(back.bpf_high_hz, 4000.0);
    assert_eq!(back.noise_sigma, 0.02);
    for (a, b) in channel.impulse_responses.iter().zip(&back.impulse_responses) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!((x - y).abs() <= 1.0 / 32767.0);
        }
    }
}
