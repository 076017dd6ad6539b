//! Room-simulation oracles: Schroeder T60 tracking, geometric direct-path
//! delays, scenario sampling constraints, noise-field coherence and SNR
//! re-measurement.

use doamask::features::align_external;
use doamask::fft::fft_real;
use doamask::pipeline::white_noise;
use doamask::rng::{rng, rng_from};
use doamask::room::{
    azimuth_distance, make_noise, render, sample_scenario, schroeder_t60, simulate_rir,
    NoiseKind, Room, ScenarioConfig, SpatialKind, CENTER_MIC, SPEED_OF_SOUND,
};
use doamask::signal::{frame_signal, TimeSignal, N_BINS, SAMPLE_RATE};
use rand::Rng;

#[test]
fn schroeder_t60_tracks_target_over_random_rooms() {
    let mut r = rng(0xB1);
    for i in 0..50 {
        let dims = [
            r.gen_range(4.0..10.0),
            r.gen_range(3.0..8.0),
            r.gen_range(2.5..4.0),
        ];
        let t60 = r.gen_range(0.13..1.0);
        let room = Room::new(dims, t60);
        let src = [
            r.gen_range(0.5..dims[0] - 0.5),
            r.gen_range(0.5..dims[1] - 0.5),
            r.gen_range(0.5..dims[2] - 0.5),
        ];
        let mic = [dims[0] / 2.0, dims[1] / 2.0, dims[2] / 2.0];
        let rir = simulate_rir(&room, src, mic).unwrap();
        let est = schroeder_t60(&rir);
        let rel = (est / t60 - 1.0).abs();
        assert!(
            rel <= 0.25,
            "room {i}: target {t60:.3}s estimated {est:.3}s ({:.0}% off)",
            rel * 100.0
        );
    }
}

#[test]
fn direct_path_delay_matches_geometry() {
    let mut r = rng(0xB2);
    for i in 0..100 {
        let dims = [
            r.gen_range(5.0..10.0),
            r.gen_range(4.0..8.0),
            r.gen_range(2.5..4.0),
        ];
        let room = Room::anechoic(dims);
        let src = [
            r.gen_range(0.5..dims[0] - 0.5),
            r.gen_range(0.5..dims[1] - 0.5),
            r.gen_range(0.5..dims[2] - 0.5),
        ];
        let mic = [
            r.gen_range(0.5..dims[0] - 0.5),
            r.gen_range(0.5..dims[1] - 0.5),
            r.gen_range(0.5..dims[2] - 0.5),
        ];
        let d = ((src[0] - mic[0]).powi(2) + (src[1] - mic[1]).powi(2) + (src[2] - mic[2]).powi(2))
            .sqrt();
        if d < 0.1 {
            continue;
        }
        let rir = simulate_rir(&room, src, mic).unwrap();
        let expected = d / SPEED_OF_SOUND * SAMPLE_RATE as f64;
        let got = rir.peak_index() as f64;
        assert!(
            (got - expected).abs() <= 1.0,
            "case {i}: geometric delay {expected:.2}, peak at {got}"
        );
    }
}

#[test]
fn scenario_sampling_respects_constraints() {
    // geometry does not depend on t60; keep it short so RIRs stay cheap
    let cfg = ScenarioConfig {
        t60_min: 0.13,
        t60_max: 0.2,
        ..ScenarioConfig::training()
    };
    for seed in 0..60 {
        let mut r = rng_from(0xB3, seed);
        let j = (seed % 5).min(4) as usize;
        let scn = sample_scenario(&cfg, j, &mut r).unwrap();
        assert!(scn.desired_class < 72);
        let desired_az = scn.desired_azimuth_deg();
        let mut azimuths = vec![];
        for &p in &scn.interferer_positions {
            let az = scn.azimuth_of(p);
            assert!(
                azimuth_distance(az, desired_az) >= 25.0 - 1e-9,
                "interferer within 25 deg of desired"
            );
            azimuths.push(az);
        }
        for a in 0..azimuths.len() {
            for b in a + 1..azimuths.len() {
                assert!(
                    azimuth_distance(azimuths[a], azimuths[b]) >= 5.0 - 1e-9,
                    "interferer pair closer than one class"
                );
            }
        }
        // external mic: 0.2 m above the desired speaker
        let e = scn.external_mic_position;
        let p = scn.desired_position;
        assert!((e[0] - p[0]).abs() < 1e-12 && (e[1] - p[1]).abs() < 1e-12);
        assert!((e[2] - p[2] - 0.2).abs() < 1e-12);
        // everything inside the room
        for pos in scn.channel_positions() {
            for (axis, &l) in scn.room.dimensions.iter().enumerate() {
                assert!(pos[axis] > 0.0 && pos[axis] < l, "position outside room");
            }
        }
    }
}

#[test]
fn rendered_snr_matches_scenario() {
    // J = 0: the clean render is exactly the desired part, so subtracting it
    // from the noisy render isolates the noise and the SNR can be re-measured.
    for seed in 0..5 {
        let cfg = ScenarioConfig::evaluation();
        let mut r = rng_from(0xB4, seed);
        let mut scn = sample_scenario(&cfg, 0, &mut r).unwrap();
        if let Some(spec) = &mut scn.noise_kind {
            spec.kind = NoiseKind::White; // no corpus in this test
        }
        let src = white_noise(SAMPLE_RATE as usize, &mut r);

        let mut noisy_rng = rng_from(0xB5, seed);
        let noisy = render(&scn, &src, &[], None, &mut noisy_rng).unwrap();
        let mut clean_scn = scn.clone();
        clean_scn.noise_kind = None;
        // reproduce the RIR-dependent state the serde skip drops
        clean_scn.rirs = scn.rirs.clone();
        let mut clean_rng = rng_from(0xB5, seed);
        let clean = render(&clean_scn, &src, &[], None, &mut clean_rng).unwrap();

        let n = noisy[0].len().min(clean[0].len());
        let mut p_sig = 0.0;
        let mut p_noise = 0.0;
        for ch in 0..15 {
            for i in 0..n {
                let s = clean[ch].samples[i];
                let v = noisy[ch].samples[i] - s;
                p_sig += s * s;
                p_noise += v * v;
            }
        }
        let snr = 10.0 * (p_sig / p_noise).log10();
        assert!(
            (snr - scn.snr_db).abs() < 0.2,
            "seed {seed}: requested {} dB, measured {snr:.3} dB",
            scn.snr_db
        );
    }
}

fn coherence_at_bin(a: &TimeSignal, b: &TimeSignal, bin: usize) -> f64 {
    let fa = frame_signal(a);
    let fb = frame_signal(b);
    let mut cross = doamask::fft::Complex64::new(0.0, 0.0);
    let (mut paa, mut pbb) = (0.0, 0.0);
    for (x, y) in fa.iter().zip(fb.iter()) {
        let sx = fft_real(&x.samples)[..N_BINS].to_vec();
        let sy = fft_real(&y.samples)[..N_BINS].to_vec();
        cross += sx[bin] * sy[bin].conj();
        paa += sx[bin].norm_sqr();
        pbb += sy[bin].norm_sqr();
    }
    cross.norm() / (paa * pbb).sqrt()
}

#[test]
fn noise_field_coherence() {
    let mut r = rng(0xB6);
    // two points 0.4 m apart
    let positions = vec![[0.0, 0.0, 0.0], [0.4, 0.0, 0.0]];
    let len = 4 * SAMPLE_RATE as usize;
    let diffuse = make_noise(
        NoiseKind::White,
        SpatialKind::Diffuse,
        len,
        &positions,
        None,
        &mut r,
    )
    .unwrap();
    let uncorr = make_noise(
        NoiseKind::White,
        SpatialKind::Uncorrelated,
        len,
        &positions,
        None,
        &mut r,
    )
    .unwrap();
    // bin 6 ~ 187 Hz: wavelength >> spacing, a diffuse field is coherent
    let c_diff = coherence_at_bin(&diffuse[0], &diffuse[1], 6);
    let c_unc = coherence_at_bin(&uncorr[0], &uncorr[1], 6);
    assert!(c_diff > 0.45, "diffuse low-frequency coherence {c_diff:.3}");
    assert!(c_diff > 2.0 * c_unc, "diffuse {c_diff:.3} vs uncorrelated {c_unc:.3}");
    assert!(c_unc < 0.3, "uncorrelated coherence {c_unc:.3}");
    // broadband sample correlation of independent streams is near zero
    let n = len as f64;
    let dot: f64 = uncorr[0]
        .samples
        .iter()
        .zip(uncorr[1].samples.iter())
        .map(|(x, y)| x * y)
        .sum::<f64>()
        / n;
    let p0 = uncorr[0].power();
    let p1 = uncorr[1].power();
    assert!((dot / (p0 * p1).sqrt()).abs() < 0.05);
}

#[test]
fn alignment_recovers_external_mic_lead() {
    // the external mic sits next to the speaker, so its signal leads the
    // array; align_external must find a plausible nonnegative lag
    let cfg = ScenarioConfig::evaluation();
    let mut r = rng(0xB7);
    let mut scn = sample_scenario(&cfg, 0, &mut r).unwrap();
    if let Some(spec) = &mut scn.noise_kind {
        spec.kind = NoiseKind::White; // no corpus in this test
    }
    let src = white_noise(2 * SAMPLE_RATE as usize, &mut r);
    let chans = render(&scn, &src, &[], None, &mut r).unwrap();
    let aligned = align_external(&chans[15], &chans[CENTER_MIC]);
    assert!(!aligned.degenerate);
    // geometric bound: lag cannot exceed the source-to-array travel time
    assert!(aligned.lag <= (0.05 * SAMPLE_RATE as f64) as usize);
    assert!(aligned.signal.len() == chans[15].len());
}
