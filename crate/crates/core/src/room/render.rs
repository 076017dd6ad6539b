//! Scene rendering: source convolution, power balancing, and noise fields.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::fft;
use crate::room::rir::SPEED_OF_SOUND;
use crate::room::scenario::{NoiseKind, Scenario, SpatialKind};
use crate::signal::{TimeSignal, SAMPLE_RATE};

/// Number of plane waves approximating a diffuse noise field.
const DIFFUSE_WAVES: usize = 36;
/// Number of speech snippets summed into one babble stream.
const BABBLE_SNIPPETS: usize = 8;

fn white<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// One babble stream: `BABBLE_SNIPPETS` random corpus regions at random
/// circular offsets, each normalized to unit RMS before summing.
fn babble_stream<R: Rng>(len: usize, corpus: &Corpus, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for _ in 0..BABBLE_SNIPPETS {
        let snip = corpus.random_region(len, rng);
        let rms = snip.power().sqrt().max(1e-9);
        let offset = rng.gen_range(0..len);
        for (i, &s) in snip.samples.iter().enumerate() {
            out[(offset + i) % len] += s / rms;
        }
    }
    out
}

/// Generates a multichannel noise field.
///
/// Uncorrelated: an independent stream per channel. Diffuse-like: the sum of
/// 36 independent plane-wave streams at azimuths uniform on the circle, each
/// delayed per channel according to the microphone geometry (frequency-domain
/// fractional delays); this approximates a cylindrically isotropic field.
pub fn make_noise<R: Rng>(
    kind: NoiseKind,
    spatial: SpatialKind,
    len: usize,
    mic_positions_rel: &[[f64; 3]],
    corpus: Option<&Corpus>,
    rng: &mut R,
) -> Result<Vec<TimeSignal>> {
    let channels = mic_positions_rel.len();
    let stream = |rng: &mut R| -> Result<Vec<f64>> {
        match kind {
            NoiseKind::White => Ok(white(len, rng)),
            NoiseKind::Babble => {
                let corpus = corpus.ok_or_else(|| {
                    Error::EmptyCorpus("babble noise requested without a corpus".into())
                })?;
                if corpus.is_empty() {
                    return Err(Error::EmptyCorpus("babble noise requested with empty corpus".into()));
                }
                Ok(babble_stream(len, corpus, rng))
            }
        }
    };

    match spatial {
        SpatialKind::Uncorrelated => {
            let mut out = Vec::with_capacity(channels);
            for _ in 0..channels {
                out.push(TimeSignal::new(stream(rng)?, SAMPLE_RATE));
            }
            Ok(out)
        }
        SpatialKind::Diffuse => {
            let n = len.next_power_of_two().max(2);
            let fs = SAMPLE_RATE as f64;
            let forward = fft::forward_plan(n);
            let mut acc: Vec<Vec<Complex64>> =
                vec![vec![Complex64::new(0.0, 0.0); n]; channels];
            let az_offset = rng.gen_range(0.0..360.0 / DIFFUSE_WAVES as f64);
            for w in 0..DIFFUSE_WAVES {
                let az = (az_offset + w as f64 * 360.0 / DIFFUSE_WAVES as f64).to_radians();
                let u = [az.cos(), az.sin(), 0.0];
                let src = stream(rng)?;
                let mut spec: Vec<Complex64> =
                    src.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                spec.resize(n, Complex64::new(0.0, 0.0));
                forward.process(&mut spec);
                for (ch, pos) in mic_positions_rel.iter().enumerate() {
                    // wavefront from azimuth az reaches mics toward the
                    // source earlier: delay = -(u . p) / c
                    let tau = -(u[0] * pos[0] + u[1] * pos[1] + u[2] * pos[2])
                        / SPEED_OF_SOUND
                        * fs;
                    for (k, &s) in spec.iter().enumerate().take(n / 2 + 1) {
                        let omega = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                        let rot = Complex64::from_polar(1.0, -omega * tau);
                        let v = s * rot;
                        acc[ch][k] += v;
                        if k > 0 && k < n / 2 {
                            acc[ch][n - k] += v.conj();
                        }
                    }
                }
            }
            let scale = 1.0 / (DIFFUSE_WAVES as f64).sqrt();
            let mut out = Vec::with_capacity(channels);
            for ch_spec in acc {
                let t = fft::ifft_real_part(&ch_spec);
                out.push(TimeSignal::new(
                    t[..len].iter().map(|v| v * scale).collect(),
                    SAMPLE_RATE,
                ));
            }
            Ok(out)
        }
    }
}

/// Renders all 16 channels of a scenario: desired and interferer sources
/// convolved with their RIRs plus the noise field at the scenario SNR.
///
/// Interferer source signals are pre-scaled to the desired source power.
/// The SNR is defined against the desired-signal power averaged over the 15
/// array channels (the external microphone is excluded from the measurement
/// but receives the same noise gain).
pub fn render<R: Rng>(
    scn: &Scenario,
    desired_sig: &TimeSignal,
    interferer_sigs: &[TimeSignal],
    corpus: Option<&Corpus>,
    rng: &mut R,
) -> Result<Vec<TimeSignal>> {
    if interferer_sigs.len() != scn.interferer_positions.len() {
        return Err(Error::InvalidArgument(format!(
            "scenario has {} interferers, got {} signals",
            scn.interferer_positions.len(),
            interferer_sigs.len()
        )));
    }
    if desired_sig.sample_rate != SAMPLE_RATE
        || interferer_sigs.iter().any(|s| s.sample_rate != SAMPLE_RATE)
    {
        return Err(Error::InvalidArgument("all source signals must be at 8 kHz".into()));
    }

    let channels = scn.rirs[0].len();
    let p_des = desired_sig.power();

    // Per-source signals, interferers balanced to the desired power.
    let mut sources: Vec<TimeSignal> = Vec::with_capacity(1 + interferer_sigs.len());
    sources.push(desired_sig.clone());
    for sig in interferer_sigs {
        let p = sig.power();
        let g = if p > 0.0 { (p_des / p).sqrt() } else { 0.0 };
        sources.push(TimeSignal::new(
            sig.samples.iter().map(|s| s * g).collect(),
            SAMPLE_RATE,
        ));
    }

    // Output length: shortest convolution across sources.
    let out_len = sources
        .iter()
        .enumerate()
        .map(|(sid, sig)| sig.len() + scn.rirs[sid][0].taps.len() - 1)
        .min()
        .unwrap();

    let mut desired_part: Vec<Vec<f64>> = vec![vec![0.0; out_len]; channels];
    let mut mix: Vec<Vec<f64>> = vec![vec![0.0; out_len]; channels];
    for (sid, sig) in sources.iter().enumerate() {
        for ch in 0..channels {
            let conv = fft::convolve(&sig.samples, &scn.rirs[sid][ch].taps);
            for i in 0..out_len {
                mix[ch][i] += conv[i];
                if sid == 0 {
                    desired_part[ch][i] = conv[i];
                }
            }
        }
    }

    if let Some(spec) = scn.noise_kind {
        let noise = make_noise(
            spec.kind,
            spec.spatial,
            out_len,
            &scn.channel_positions_relative(),
            corpus,
            rng,
        )?;
        let n_array = channels - 1;
        let p_sig: f64 = desired_part[..n_array]
            .iter()
            .map(|ch| ch.iter().map(|v| v * v).sum::<f64>() / out_len as f64)
            .sum::<f64>()
            / n_array as f64;
        let p_noise: f64 = noise[..n_array]
            .iter()
            .map(|ch| ch.power())
            .sum::<f64>()
            / n_array as f64;
        if p_noise > 0.0 && p_sig > 0.0 {
            let g = (p_sig / p_noise / 10f64.powf(scn.snr_db / 10.0)).sqrt();
            for ch in 0..channels {
                for i in 0..out_len {
                    mix[ch][i] += g * noise[ch].samples[i];
                }
            }
        }
    }

    Ok(mix
        .into_iter()
        .map(|s| TimeSignal::new(s, SAMPLE_RATE))
        .collect())
}
