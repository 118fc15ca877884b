//! FFT helpers (rustfft-backed) shared across the DSP kernel.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        let (planner, cache) = &mut *cell.borrow_mut();
        cache
            .entry((n, inverse))
            .or_insert_with(|| {
                if inverse {
                    planner.plan_fft_inverse(n)
                } else {
                    planner.plan_fft_forward(n)
                }
            })
            .clone()
    })
}

pub fn fft_forward(buf: &mut [Complex<f64>]) {
    plan(buf.len(), false).process(buf);
}

pub fn fft_inverse(buf: &mut [Complex<f64>]) {
    plan(buf.len(), true).process(buf);
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Magnitude-squared spectrum of a real frame; `n/2 + 1` bins.
pub fn real_power_spectrum(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    let mut buf: Vec<Complex<f64>> = frame.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fft_forward(&mut buf);
    buf[..n / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
}

/// Apply a real zero-phase mask over the full-signal DFT. `mask` receives
/// the bin frequency in Hz. Length-preserving; keeps the signal real by
/// masking conjugate bins identically.
pub fn apply_frequency_mask(
    samples: &[f64],
    sample_rate: u32,
    mask: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let n = samples.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fft_forward(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let folded = k.min(n - k);
        let f = folded as f64 * sample_rate as f64 / n as f64;
        *v *= mask(f);
    }
    fft_inverse(&mut buf);
    buf.into_iter().map(|c| c.re).collect()
}

/// Full linear convolution (length `a + b - 1`) via FFT.
pub fn conv_full(a: &[f64], b: &[f64]) -> Vec<f64> {
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let mut fa: Vec<Complex<f64>> = a.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fa.resize(n, Complex::new(0.0, 0.0));
    let mut fb: Vec<Complex<f64>> = b.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fb.resize(n, Complex::new(0.0, 0.0));
    fft_forward(&mut fa);
    fft_forward(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    fft_inverse(&mut fa);
    fa[..out_len].iter().map(|c| c.re).collect()
}
