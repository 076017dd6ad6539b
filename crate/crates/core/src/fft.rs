//! Shared FFT plans and small transform helpers.
//!
//! Convention used throughout the crate: forward transforms are unscaled,
//! inverse transforms divide by the length N.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use once_cell::sync::Lazy;
pub use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub const FRAME_LEN: usize = 256;
pub const N_BINS: usize = FRAME_LEN / 2 + 1;

struct PlanCache {
    planner: FftPlanner<f64>,
    forward: HashMap<usize, Arc<dyn Fft<f64>>>,
    inverse: HashMap<usize, Arc<dyn Fft<f64>>>,
}

static PLANS: Lazy<Mutex<PlanCache>> = Lazy::new(|| {
    Mutex::new(PlanCache {
        planner: FftPlanner::new(),
        forward: HashMap::new(),
        inverse: HashMap::new(),
    })
});

pub fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    let mut cache = PLANS.lock().unwrap();
    if let Some(p) = cache.forward.get(&n) {
        return p.clone();
    }
    let p = cache.planner.plan_fft_forward(n);
    cache.forward.insert(n, p.clone());
    p
}

pub fn inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    let mut cache = PLANS.lock().unwrap();
    if let Some(p) = cache.inverse.get(&n) {
        return p.clone();
    }
    let p = cache.planner.plan_fft_inverse(n);
    cache.inverse.insert(n, p.clone());
    p
}

/// Forward transform of a real frame; returns the full complex spectrum (unscaled).
pub fn fft_real(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward_plan(x.len()).process(&mut buf);
    buf
}

/// Inverse transform (scaled by 1/N); returns the real part of the result.
pub fn ifft_real_part(spectrum: &[Complex64]) -> Vec<f64> {
    let n = spectrum.len();
    let mut buf = spectrum.to_vec();
    inverse_plan(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|c| c.re * scale).collect()
}

/// Expand a one-sided spectrum (N/2+1 bins) into a full conjugate-symmetric
/// spectrum of length N. Bins 0 and N/2 are taken as given.
pub fn expand_one_sided(bins: &[Complex64], n: usize) -> Vec<Complex64> {
    debug_assert_eq!(bins.len(), n / 2 + 1);
    let mut full = vec![Complex64::new(0.0, 0.0); n];
    full[..bins.len()].copy_from_slice(bins);
    for k in 1..n / 2 {
        full[n - k] = bins[k].conj();
    }
    full
}

/// Linear convolution of two real sequences via FFT.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let mut fa: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fa.resize(n, Complex64::new(0.0, 0.0));
    let mut fb: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fb.resize(n, Complex64::new(0.0, 0.0));
    let plan = forward_plan(n);
    plan.process(&mut fa);
    plan.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(fb.iter()) {
        *x *= *y;
    }
    inverse_plan(n).process(&mut fa);
    let scale = 1.0 / n as f64;
    fa[..out_len].iter().map(|c| c.re * scale).collect()
}
