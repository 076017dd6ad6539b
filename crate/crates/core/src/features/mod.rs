//! Baseline and signal-informed GCC-PHAT feature maps.
//!
//! The GCC-PHAT of a microphone pair depends only on the per-bin phase
//! difference of the two spectra. The informed variant replaces the phase
//! difference in masked-out bins with uniform random phase, so only the
//! spectral components dominated by the external microphone contribute a
//! coherent correlation peak.
//!
//! Sign convention (fixed by the brute-force oracle in the test suite):
//! the peak sits at a positive lag when channel `k` lags channel `l`,
//! i.e. when the wavefront reaches microphone `l` first.

pub mod record;

use rand::Rng;
use rustfft::num_complex::Complex64;

use crate::fft;
use crate::signal::{SpectralFrame, TimeSignal, N_BINS};

/// Maximum inter-microphone lag in samples; the lag axis covers
/// tau = -12 .. +11.
pub const TAU_MAX: usize = 12;
pub const N_LAGS: usize = 2 * TAU_MAX;
pub const MAP_MICS: usize = 15;

/// Magnitude guard below which a bin's phase difference is taken as zero.
const PHAT_EPS: f64 = 1e-12;

/// Upper bound of the alignment lag search, seconds.
const ALIGN_MAX_LAG_S: f64 = 0.05;

/// Per-frame binary mask over the 129 frequency bins.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub bits: Vec<bool>,
    pub frame_index: usize,
}

/// Per-frame wrapped phase differences, radians in (-pi, pi].
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDifference {
    pub phi: Vec<f64>,
}

/// 15 x 15 x 24 tensor of (informed) GCC-PHAT values; lag axis ordered
/// tau = -12 .. +11.
#[derive(Debug, Clone, PartialEq)]
pub struct GccFeatureMap {
    pub values: Vec<f64>,
    pub frame_index: usize,
}

impl GccFeatureMap {
    pub const LEN: usize = MAP_MICS * MAP_MICS * N_LAGS;

    pub fn zeros(frame_index: usize) -> Self {
        GccFeatureMap {
            values: vec![0.0; Self::LEN],
            frame_index,
        }
    }

    #[inline]
    pub fn index(k: usize, l: usize, lag: usize) -> usize {
        (k * MAP_MICS + l) * N_LAGS + lag
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize, lag: usize) -> f64 {
        self.values[Self::index(k, l, lag)]
    }
}

fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * std::f64::consts::PI);
    if y > std::f64::consts::PI {
        y - 2.0 * std::f64::consts::PI
    } else {
        y
    }
}

/// Wrapped per-bin phase difference arg(a) - arg(b); bins where the
/// cross-spectrum magnitude falls below 1e-12 contribute zero phase.
pub fn phase_difference(a: &SpectralFrame, b: &SpectralFrame) -> PhaseDifference {
    debug_assert_eq!(a.bins.len(), b.bins.len());
    let phi = a
        .bins
        .iter()
        .zip(b.bins.iter())
        .map(|(x, y)| {
            if x.norm() * y.norm() < PHAT_EPS {
                0.0
            } else {
                wrap_phase(x.arg() - y.arg())
            }
        })
        .collect();
    PhaseDifference { phi }
}

/// Inverse transform of the unit-magnitude spectrum e^{i phi}, sampled at
/// circular lags -12 .. +11.
pub fn informed_gcc_phat(phi: &PhaseDifference) -> [f64; N_LAGS] {
    debug_assert_eq!(phi.phi.len(), N_BINS);
    let bins: Vec<Complex64> = phi
        .phi
        .iter()
        .map(|&p| Complex64::from_polar(1.0, p))
        .collect();
    let full = fft::expand_one_sided(&bins, fft::FRAME_LEN);
    let corr = fft::ifft_real_part(&full);
    let mut out = [0.0; N_LAGS];
    for (i, v) in out.iter_mut().enumerate() {
        let lag = i as isize - TAU_MAX as isize;
        let idx = lag.rem_euclid(fft::FRAME_LEN as isize) as usize;
        *v = corr[idx];
    }
    out
}

/// Plain GCC-PHAT of two spectra (Eq. form: the PHAT-normalized cross
/// spectrum reduces to e^{i (arg a - arg b)}), lags -12 .. +11.
pub fn gcc_phat(a: &SpectralFrame, b: &SpectralFrame) -> [f64; N_LAGS] {
    informed_gcc_phat(&phase_difference(a, b))
}

/// Nearest-rank x-th percentile mask of the external-mic magnitudes:
/// bit = 1 iff |E| >= the smallest magnitude m such that at least x% of
/// bins have magnitude <= m.
pub fn compute_mask(ext_frame: &SpectralFrame, x: f64) -> BinaryMask {
    debug_assert!((0.0..=100.0).contains(&x));
    let mags: Vec<f64> = ext_frame.bins.iter().map(|b| b.norm()).collect();
    let mut sorted = mags.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let rank = (x / 100.0 * n as f64).ceil() as usize;
    let threshold = if rank == 0 {
        sorted[0]
    } else {
        sorted[rank.min(n) - 1]
    };
    BinaryMask {
        bits: mags.iter().map(|&m| m >= threshold).collect(),
        frame_index: ext_frame.frame_index,
    }
}

/// Masked phase differences: kept bins pass the plain phase difference
/// through untouched; masked-out bins are replaced by i.i.d. uniform phase
/// on [0, 2pi), wrapped to (-pi, pi].
pub fn masked_phase<R: Rng>(
    a: &SpectralFrame,
    b: &SpectralFrame,
    mask: &BinaryMask,
    rng: &mut R,
) -> PhaseDifference {
    let plain = phase_difference(a, b);
    let phi = plain
        .phi
        .iter()
        .zip(mask.bits.iter())
        .map(|(&p, &bit)| {
            if bit {
                p
            } else {
                wrap_phase(rng.gen_range(0.0..2.0 * std::f64::consts::PI))
            }
        })
        .collect();
    PhaseDifference { phi }
}

/// Full feature map over all 225 ordered microphone pairs (including k = l).
/// With a mask present the informed path is used with the identical mask for
/// every pair but independent random-phase draws per pair.
pub fn feature_map<R: Rng>(
    frame_specs: &[SpectralFrame],
    mask: Option<&BinaryMask>,
    rng: &mut R,
) -> GccFeatureMap {
    assert_eq!(frame_specs.len(), MAP_MICS, "feature map needs 15 spectra");
    let frame_index = frame_specs[0].frame_index;
    let mut map = GccFeatureMap::zeros(frame_index);
    for k in 0..MAP_MICS {
        for l in 0..MAP_MICS {
            let lags = match mask {
                Some(m) => informed_gcc_phat(&masked_phase(
                    &frame_specs[k],
                    &frame_specs[l],
                    m,
                    rng,
                )),
                None => gcc_phat(&frame_specs[k], &frame_specs[l]),
            };
            let base = GccFeatureMap::index(k, l, 0);
            map.values[base..base + N_LAGS].copy_from_slice(&lags);
        }
    }
    map
}

/// Result of aligning the external microphone to the central array channel.
pub struct Aligned {
    pub signal: TimeSignal,
    pub lag: usize,
    /// Set when the correlation was degenerate (all-zero input).
    pub degenerate: bool,
}

/// Full-signal time-domain cross-correlation over lags in [0, 0.05 s];
/// the external microphone leads the array. Returns the external signal
/// delayed by the argmax lag (zero-padded head, original length).
pub fn align_external(ext: &TimeSignal, center_mic: &TimeSignal) -> Aligned {
    debug_assert_eq!(ext.sample_rate, center_mic.sample_rate);
    let max_lag = (ALIGN_MAX_LAG_S * ext.sample_rate as f64).round() as usize;
    let n = ext.len().min(center_mic.len());
    let mut best_lag = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    let mut any_nonzero = false;
    for lag in 0..=max_lag {
        let mut acc = 0.0;
        for i in 0..n.saturating_sub(lag) {
            acc += ext.samples[i] * center_mic.samples[i + lag];
        }
        if acc != 0.0 {
            any_nonzero = true;
        }
        if acc > best_val {
            best_val = acc;
            best_lag = lag;
        }
    }
    if !any_nonzero {
        return Aligned {
            signal: ext.clone(),
            lag: 0,
            degenerate: true,
        };
    }
    let mut samples = vec![0.0; ext.len()];
    for i in best_lag..ext.len() {
        samples[i] = ext.samples[i - best_lag];
    }
    Aligned {
        signal: TimeSignal::new(samples, ext.sample_rate),
        lag: best_lag,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng;
    use crate::signal::{forward_spectrum, Frame, FRAME_LEN};
    use rand_distr::StandardNormal;

    fn noise_frame<R: rand::Rng>(rng: &mut R, index: usize) -> Frame {
        let mut samples = [0.0; FRAME_LEN];
        for s in samples.iter_mut() {
            *s = rng.sample::<f64, _>(StandardNormal);
        }
        Frame { samples, index }
    }

    #[test]
    fn identical_frames_delta_at_zero() {
        let f = noise_frame(&mut rng(1), 0);
        let s = forward_spectrum(&f);
        let g = gcc_phat(&s, &s);
        assert!((g[TAU_MAX] - 1.0).abs() < 1e-9);
        for (i, &v) in g.iter().enumerate() {
            if i != TAU_MAX {
                assert!(v.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn magnitude_invariance() {
        let mut r = rng(2);
        let fa = noise_frame(&mut r, 0);
        let fb = noise_frame(&mut r, 0);
        let sa = forward_spectrum(&fa);
        let sb = forward_spectrum(&fb);
        let mut scaled = sa.clone();
        for b in scaled.bins.iter_mut() {
            *b *= 5.0;
        }
        let g1 = gcc_phat(&sa, &sb);
        let g2 = gcc_phat(&scaled, &sb);
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn values_bounded() {
        let mut r = rng(3);
        for _ in 0..20 {
            let fa = noise_frame(&mut r, 0);
            let fb = noise_frame(&mut r, 0);
            let g = gcc_phat(&forward_spectrum(&fa), &forward_spectrum(&fb));
            for &v in g.iter() {
                assert!(v.abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn mask_toy_nearest_rank() {
        // 4-bin toy magnitudes {1,2,3,4}, x = 50 -> threshold 2 -> {0,1,1,1}
        let spec = SpectralFrame {
            bins: vec![
                rustfft::num_complex::Complex64::new(1.0, 0.0),
                rustfft::num_complex::Complex64::new(0.0, 2.0),
                rustfft::num_complex::Complex64::new(-3.0, 0.0),
                rustfft::num_complex::Complex64::new(0.0, -4.0),
            ],
            frame_index: 0,
        };
        let m = compute_mask(&spec, 50.0);
        assert_eq!(m.bits, vec![false, true, true, true]);
    }

    #[test]
    fn mask_degenerate_cases() {
        let mut r = rng(4);
        let f = noise_frame(&mut r, 0);
        let s = forward_spectrum(&f);
        let m0 = compute_mask(&s, 0.0);
        assert!(m0.bits.iter().all(|&b| b));
        let flat = SpectralFrame {
            bins: vec![rustfft::num_complex::Complex64::new(1.0, 0.0); N_BINS],
            frame_index: 0,
        };
        for &x in &[0.0, 33.0, 50.0, 90.0, 100.0] {
            assert!(compute_mask(&flat, x).bits.iter().all(|&b| b));
        }
    }

    #[test]
    fn mask_monotone_in_x() {
        let mut r = rng(5);
        let s = forward_spectrum(&noise_frame(&mut r, 0));
        let mut prev = compute_mask(&s, 0.0);
        for x in 1..=100 {
            let cur = compute_mask(&s, x as f64);
            for (p, c) in prev.bits.iter().zip(cur.bits.iter()) {
                // raising x never turns a 0 into a 1
                assert!(*p || !*c);
            }
            prev = cur;
        }
    }

    #[test]
    fn masked_phase_split() {
        let mut r = rng(6);
        let sa = forward_spectrum(&noise_frame(&mut r, 0));
        let sb = forward_spectrum(&noise_frame(&mut r, 0));
        let plain = phase_difference(&sa, &sb);
        let mut bits = vec![false; N_BINS];
        for (i, b) in bits.iter_mut().enumerate() {
            *b = i % 2 == 0;
        }
        let mask = BinaryMask {
            bits,
            frame_index: 0,
        };
        let phi = masked_phase(&sa, &sb, &mask, &mut rng(7));
        for i in 0..N_BINS {
            if mask.bits[i] {
                assert_eq!(phi.phi[i], plain.phi[i]);
            } else {
                assert_ne!(phi.phi[i], plain.phi[i]);
            }
        }
    }

    #[test]
    fn all_ones_mask_is_identity() {
        let mut r = rng(8);
        let sa = forward_spectrum(&noise_frame(&mut r, 0));
        let sb = forward_spectrum(&noise_frame(&mut r, 0));
        let mask = BinaryMask {
            bits: vec![true; N_BINS],
            frame_index: 0,
        };
        let phi = masked_phase(&sa, &sb, &mask, &mut rng(9));
        let informed = informed_gcc_phat(&phi);
        let plain = gcc_phat(&sa, &sb);
        assert_eq!(informed, plain); // bitwise
    }

    #[test]
    fn zero_phase_is_delta() {
        let phi = PhaseDifference {
            phi: vec![0.0; N_BINS],
        };
        let g = informed_gcc_phat(&phi);
        assert!((g[TAU_MAX] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn phases_wrapped() {
        let mut r = rng(10);
        let sa = forward_spectrum(&noise_frame(&mut r, 0));
        let sb = forward_spectrum(&noise_frame(&mut r, 0));
        let phi = phase_difference(&sa, &sb);
        for &p in &phi.phi {
            assert!(p > -std::f64::consts::PI && p <= std::f64::consts::PI);
        }
    }

    #[test]
    fn map_pair_symmetry() {
        let mut r = rng(11);
        let specs: Vec<SpectralFrame> = (0..MAP_MICS)
            .map(|_| forward_spectrum(&noise_frame(&mut r, 0)))
            .collect();
        let map = feature_map(&specs, None, &mut rng(12));
        // [l][k] is the lag-reversed copy of [k][l] on the 23 shared lags
        for k in 0..MAP_MICS {
            for l in 0..MAP_MICS {
                for lag in 1..N_LAGS {
                    let tau = lag as isize - TAU_MAX as isize; // in -11..=11
                    let rev = (-tau + TAU_MAX as isize) as usize;
                    let a = map.get(k, l, lag);
                    let b = map.get(l, k, rev);
                    assert!((a - b).abs() < 1e-9, "k={k} l={l} lag={lag}");
                }
            }
        }
        // diagonal is a delta
        for k in 0..MAP_MICS {
            assert!((map.get(k, k, TAU_MAX) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn align_identity_and_scale_invariance() {
        let mut r = rng(13);
        let sig = TimeSignal::new(
            (0..4000).map(|_| r.sample::<f64, _>(StandardNormal)).collect(),
            8000,
        );
        let a = align_external(&sig, &sig);
        assert_eq!(a.lag, 0);
        assert!(!a.degenerate);
        let half = TimeSignal::new(sig.samples.iter().map(|s| 0.5 * s).collect(), 8000);
        let b = align_external(&half, &sig);
        assert_eq!(b.lag, 0);
    }

    #[test]
    fn align_recovers_delay() {
        let mut r = rng(14);
        let sig = TimeSignal::new(
            (0..4000).map(|_| r.sample::<f64, _>(StandardNormal)).collect(),
            8000,
        );
        let mut delayed = vec![0.0; sig.len()];
        for i in 20..sig.len() {
            delayed[i] = sig.samples[i - 20];
        }
        let center = TimeSignal::new(delayed, 8000);
        let a = align_external(&sig, &center);
        assert_eq!(a.lag, 20);
        // aligned external matches the center timing
        for i in 100..3900 {
            assert!((a.signal.samples[i] - center.samples[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn align_all_zero_flags_degenerate() {
        let z = TimeSignal::zeros(1000, 8000);
        let a = align_external(&z, &z);
        assert_eq!(a.lag, 0);
        assert!(a.degenerate);
    }
}
