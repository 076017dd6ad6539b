//! Synthetic speech-like signals: harmonic excitation shaped by randomized
//! formants with syllable-rate amplitude gating. Good enough to exercise the
//! spectral-masking machinery (voiced structure, pauses, distinct talkers)
//! without shipping a recorded corpus.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;

use crate::error::Result;
use crate::rng::rng_from;
use crate::signal::{save_audio, TimeSignal, SAMPLE_RATE};

/// One speech-like talker signal. The talker's voice (pitch range, formant
/// bases) is drawn from `rng` at the start; every voiced syllable then draws
/// its own vowel (formant targets) and pitch around those bases. Keeping the
/// per-frame spectrum concentrated at a few moving formants (rather than a
/// shared low-frequency harmonic tilt) gives concurrent talkers the
/// time-frequency disjointness that spectral masking relies on.
pub fn speech_like<R: Rng>(duration_s: f64, rng: &mut R) -> TimeSignal {
    let fs = SAMPLE_RATE as f64;
    let n = (duration_s * fs).round() as usize;

    // voice characteristics
    let f0_base: f64 = rng.gen_range(85.0..280.0);
    let formant_bases: [f64; 3] = [
        rng.gen_range(300.0..850.0),
        rng.gen_range(900.0..2200.0),
        rng.gen_range(2300.0..3400.0),
    ];
    let vibrato_hz: f64 = rng.gen_range(3.0..7.0);
    let vibrato_depth: f64 = rng.gen_range(0.01..0.04);

    let ramp = (0.02 * fs) as usize;
    let mut samples = vec![0.0; n];
    // persistent per-harmonic phases keep segment boundaries click-free
    let max_harm = ((0.45 * fs) / 85.0).floor() as usize;
    let mut phases: Vec<f64> = (0..max_harm).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();

    let mut i = 0;
    while i < n {
        let seg = rng.gen_range((0.12 * fs) as usize..(0.35 * fs) as usize);
        let voiced = rng.gen::<f64>() > 0.3;
        if voiced {
            // per-syllable vowel: formants jittered around the voice bases,
            // narrow bandwidths so energy is concentrated near the targets
            let formants: Vec<f64> = formant_bases
                .iter()
                .map(|&f| f * rng.gen_range(0.7..1.3))
                .collect();
            let bandwidths: [f64; 3] = [
                rng.gen_range(50.0..90.0),
                rng.gen_range(60.0..120.0),
                rng.gen_range(80.0..160.0),
            ];
            let f0_seg = f0_base * rng.gen_range(0.85..1.15);
            let level = rng.gen_range(0.6..1.0);
            let n_harm = (((0.45 * fs) / f0_seg).floor() as usize).min(max_harm);
            let weights: Vec<f64> = (1..=n_harm)
                .map(|h| {
                    let f = h as f64 * f0_seg;
                    let mut w: f64 = 0.0;
                    for (fo, bw) in formants.iter().zip(bandwidths.iter()) {
                        let d = (f - fo) / bw;
                        w += 1.0 / (1.0 + d * d);
                    }
                    // sharpen: off-formant harmonics fall away quickly
                    w.powf(1.5) / (1.0 + f / 2000.0)
                })
                .collect();
            let seg_len = seg.min(n - i);
            for j in 0..seg_len {
                let t = (i + j) as f64 / fs;
                let f0 = f0_seg * (1.0 + vibrato_depth * (2.0 * PI * vibrato_hz * t).sin());
                let mut v = 0.0;
                for h in 0..n_harm {
                    phases[h] += 2.0 * PI * (h + 1) as f64 * f0 / fs;
                    if phases[h] > 2.0 * PI {
                        phases[h] -= 2.0 * PI;
                    }
                    v += weights[h] * phases[h].sin();
                }
                let edge = if j < ramp {
                    0.5 - 0.5 * (PI * j as f64 / ramp as f64).cos()
                } else if seg_len - j <= ramp {
                    0.5 - 0.5 * (PI * (seg_len - j) as f64 / ramp as f64).cos()
                } else {
                    1.0
                };
                samples[i + j] = level * edge * v;
            }
        }
        i += seg;
    }

    // light breath noise so unvoiced stretches are not digital silence
    for s in samples.iter_mut() {
        *s += rng.gen_range(-1.0..1.0) * 0.003;
    }

    // normalize to a sane RMS
    let rms = (samples.iter().map(|s| s * s).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        let g = 0.08 / rms;
        for s in samples.iter_mut() {
            *s *= g;
        }
    }
    TimeSignal::new(samples, SAMPLE_RATE)
}

/// Writes an 8 kHz corpus of `n_speakers` distinct talkers to `dir`
/// (speaker00.wav, speaker01.wav, ...). Deterministic per seed.
pub fn write_corpus(dir: &Path, n_speakers: usize, duration_s: f64, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for s in 0..n_speakers {
        let mut r = rng_from(seed, 0xC0_0000 + s as u64);
        let sig = speech_like(duration_s, &mut r);
        save_audio(&dir.join(format!("speaker{s:02}.wav")), &sig)?;
    }
    Ok(())
}
