//! Pipeline checks: metrics, gating, circular aggregation, dataset and
//! trial generation, and small training-loop invariants.

use doamask::corpus::Corpus;
use doamask::error::Error;
use doamask::features::{feature_map, N_LAGS, TAU_MAX};
use doamask::nn::{load_model, model_init, ModelConfig};
use doamask::pipeline::{
    angular_error, circular_median, detect_speech_frames, evaluate_trial, gen_eval_trial,
    gen_training_sample, train, white_noise, TrainConfig,
};
use doamask::rng::{rng, rng_from};
use doamask::room::{render, sample_scenario, simulate_rir_set, Room, ScenarioConfig, SPEED_OF_SOUND};
use doamask::signal::{forward_spectrum, frame_signal, TimeSignal, FRAME_LEN, SAMPLE_RATE};

#[test]
fn angular_error_units() {
    assert_eq!(angular_error(355.0, 0.0), 5.0);
    assert_eq!(angular_error(0.0, 355.0), 5.0);
    assert_eq!(angular_error(123.0, 123.0), 0.0);
    assert_eq!(angular_error(270.0, 90.0), 180.0);
    for i in 0..72 {
        for j in 0..72 {
            let a = i as f64 * 5.0;
            let b = j as f64 * 5.0;
            let d = angular_error(a, b);
            assert!((0.0..=180.0).contains(&d));
            assert_eq!(d, angular_error(b, a));
        }
    }
}

#[test]
fn circular_median_handles_the_seam() {
    let angles = [350.0, 355.0, 0.0, 5.0, 10.0];
    assert_eq!(circular_median(&angles), Some(0.0));
    assert_eq!(circular_median(&[]), None);
    assert_eq!(circular_median(&[40.0]), Some(40.0));
    // far outlier does not drag the estimate off the cluster
    let angles = [90.0, 95.0, 95.0, 100.0, 270.0];
    assert_eq!(circular_median(&angles), Some(95.0));
}

#[test]
fn speech_gate_cases() {
    // all frames equal energy -> all kept
    let flat = TimeSignal::new(vec![0.25; 10 * FRAME_LEN], SAMPLE_RATE);
    assert_eq!(detect_speech_frames(&flat).len(), 10);

    // one frame 30 dB quieter than the rest -> excluded
    let mut samples = vec![0.5; 10 * FRAME_LEN];
    for s in samples[3 * FRAME_LEN..4 * FRAME_LEN].iter_mut() {
        *s = 0.5 * 10f64.powf(-30.0 / 20.0);
    }
    let sig = TimeSignal::new(samples, SAMPLE_RATE);
    let kept = detect_speech_frames(&sig);
    assert_eq!(kept.len(), 9);
    assert!(!kept.contains(&3));

    // empty signal -> empty set
    let empty = TimeSignal::new(vec![], SAMPLE_RATE);
    assert!(detect_speech_frames(&empty).is_empty());
}

#[test]
fn training_sample_deterministic() {
    let cfg = ScenarioConfig::training();
    let mut r1 = rng(77);
    let mut r2 = rng(77);
    let (m1, l1) = gen_training_sample(&cfg, None, 1.0, &mut r1).unwrap();
    let (m2, l2) = gen_training_sample(&cfg, None, 1.0, &mut r2).unwrap();
    assert_eq!(l1, l2);
    assert_eq!(m1.values, m2.values);
}

#[test]
fn training_sample_requires_corpus_for_speech() {
    let cfg = ScenarioConfig::training();
    let mut r = rng(78);
    // white_noise_fraction = 0: every draw is a speech draw
    let err = gen_training_sample(&cfg, None, 0.0, &mut r).unwrap_err();
    assert!(matches!(err, Error::EmptyCorpus(_)));
}

#[test]
fn training_labels_cover_all_classes() {
    // cheap-room variant: class distribution does not depend on t60
    let cfg = ScenarioConfig {
        t60_min: 0.13,
        t60_max: 0.2,
        ..ScenarioConfig::training()
    };
    let mut counts = [0usize; 72];
    use rayon::prelude::*;
    let labels: Vec<usize> = (0..1000u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng_from(0x1AB, i);
            gen_training_sample(&cfg, None, 1.0, &mut r).unwrap().1
        })
        .collect();
    for l in labels {
        counts[l] += 1;
    }
    assert!(
        counts.iter().all(|&c| c > 0),
        "empty classes: {:?}",
        counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(i, _)| i)
            .collect::<Vec<_>>()
    );
    // no gross concentration (uniform expectation ~13.9 per class)
    assert!(counts.iter().all(|&c| c < 45));
}

#[test]
fn anechoic_training_map_matches_geometry() {
    // force anechoic propagation and no noise: the unmasked feature map's
    // peak lag per pair must match the geometric TDOA
    let cfg = ScenarioConfig::training();
    let mut r = rng(0x6E0);
    let mut scn = sample_scenario(&cfg, 0, &mut r).unwrap();
    scn.noise_kind = None;
    scn.room = Room::anechoic(scn.room.dimensions);
    let positions = scn.channel_positions();
    scn.rirs = vec![simulate_rir_set(&scn.room, scn.desired_position, &positions).unwrap()];

    let src = white_noise(SAMPLE_RATE as usize, &mut r);
    let channels = render(&scn, &src, &[], None, &mut r).unwrap();
    let frames: Vec<_> = channels[..15].iter().map(frame_signal).collect();
    let idx = frames[0].len() / 2;
    let specs: Vec<_> = frames.iter().map(|f| forward_spectrum(&f[idx])).collect();
    let map = feature_map(&specs, None, &mut r);

    let dist = |p: [f64; 3]| {
        ((p[0] - scn.desired_position[0]).powi(2)
            + (p[1] - scn.desired_position[1]).powi(2)
            + (p[2] - scn.desired_position[2]).powi(2))
        .sqrt()
    };
    let mut checked = 0;
    for k in 0..15 {
        for l in 0..15 {
            // positive lag when k lags l (wavefront reaches l first)
            let tdoa = (dist(positions[k]) - dist(positions[l])) / SPEED_OF_SOUND
                * SAMPLE_RATE as f64;
            if tdoa.abs() > 10.5 {
                continue;
            }
            let peak = (0..N_LAGS)
                .max_by(|&i, &j| map.get(k, l, i).partial_cmp(&map.get(k, l, j)).unwrap())
                .unwrap() as f64
                - TAU_MAX as f64;
            assert!(
                (peak - tdoa).abs() <= 1.5,
                "pair ({k},{l}): geometric {tdoa:.2}, peak {peak}"
            );
            checked += 1;
        }
    }
    assert!(checked > 150);
}

#[test]
fn zero_epochs_returns_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        samples_per_epoch: 4,
        epochs: 0,
        batch_size: 2,
        seed: 5,
        white_noise_fraction: 1.0,
        ..TrainConfig::default()
    };
    let (model, logs) = train(&cfg, Some(dir.path())).unwrap();
    assert!(logs.is_empty());
    assert_eq!(model, model_init(&ModelConfig::default(), 5).unwrap());
    let loaded = load_model(&dir.path().join("model.doam")).unwrap();
    assert_eq!(loaded, model);
}

#[test]
fn tiny_training_runs_are_identical() {
    let cfg = TrainConfig {
        samples_per_epoch: 6,
        epochs: 2,
        batch_size: 3,
        seed: 11,
        white_noise_fraction: 1.0,
        ..TrainConfig::default()
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let (m1, l1) = train(&cfg, Some(d1.path())).unwrap();
    let (m2, l2) = train(&cfg, Some(d2.path())).unwrap();
    assert_eq!(m1, m2);
    assert_eq!(l1.len(), l2.len());
    for (a, b) in l1.iter().zip(l2.iter()) {
        assert_eq!(a.mean_loss, b.mean_loss);
    }
    for name in ["model.doam", "checkpoint_epoch000.doam", "checkpoint_epoch001.doam"] {
        let b1 = std::fs::read(d1.path().join(name)).unwrap();
        let b2 = std::fs::read(d2.path().join(name)).unwrap();
        assert_eq!(b1, b2, "{name} differs between identical runs");
    }
}

fn test_corpus(n: usize) -> (tempfile::TempDir, Corpus) {
    let dir = tempfile::tempdir().unwrap();
    doamask::synth::write_corpus(dir.path(), n, 6.0, 0xC0).unwrap();
    let corpus = Corpus::load(dir.path()).unwrap();
    (dir, corpus)
}

#[test]
fn eval_trial_shapes_and_errors() {
    let (_keep, corpus) = test_corpus(5);
    let mut r = rng(0xE1);
    let trial = gen_eval_trial(4, &corpus, &mut r).unwrap();
    assert_eq!(trial.channels.len(), 16);
    assert_eq!(trial.scenario.interferer_positions.len(), 4);
    // 5 s +- one frame
    let expect = 5 * SAMPLE_RATE as usize;
    assert!(trial.channels[0].len() >= expect - FRAME_LEN);
    assert!(trial.ground_truth_class < 72);

    let (_keep2, small) = test_corpus(3);
    let err = match gen_eval_trial(4, &small, &mut r) {
        Err(e) => e,
        Ok(_) => panic!("undersized corpus accepted"),
    };
    assert!(matches!(err, Error::CorpusTooSmall { need: 5, have: 3 }));
}

#[test]
fn untrained_eval_is_well_formed_and_x0_matches_unmasked() {
    let (_keep, corpus) = test_corpus(3);
    let model = model_init(&ModelConfig::default(), 2).unwrap();
    let mut r = rng(0xE2);
    let trial = gen_eval_trial(1, &corpus, &mut r).unwrap();

    let mut r1 = rng(0xE3);
    let unmasked = evaluate_trial(&model, &trial, None, &mut r1);
    assert!(!unmasked.frame_classes.is_empty());
    assert!(unmasked.frame_classes.iter().all(|&c| c < 72));
    if let Some(e) = unmasked.error_deg {
        assert!((0.0..=180.0).contains(&e));
        assert_eq!(unmasked.estimate_deg.unwrap() % 5.0, 0.0);
    }

    // x = 0: the all-pass mask draws no random phase, so predictions are
    // identical to the unmasked path
    let mut r2 = rng(0xE4);
    let x0 = evaluate_trial(&model, &trial, Some(0.0), &mut r2);
    assert_eq!(unmasked.frame_classes, x0.frame_classes);
    assert_eq!(unmasked.estimate_deg, x0.estimate_deg);
}
