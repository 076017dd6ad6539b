//! Evaluation protocol: trials, speech-frame gating, the per-trial circular
//! median estimate and the benchmark table.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::Corpus;
use crate::error::Result;
use crate::features::{align_external, compute_mask, feature_map};
use crate::nn::{predict, Model};
use crate::rng::rng_from;
use crate::room::{render, sample_scenario, Scenario, ScenarioConfig, CENTER_MIC, CLASS_STEP_DEG};
use crate::signal::{
    forward_spectrum, frame_energy, frame_signal, Frame, TimeSignal, SAMPLE_RATE,
};

/// Trial duration (s).
pub const TRIAL_SECONDS: usize = 5;

/// Speech-frame gate margin below the global average (dB).
pub const SPEECH_GATE_DB: f64 = 4.0;

const TRIAL_SEED_TAG: u64 = 0xE7A1;
const COND_SEED_TAG: u64 = 0xC0ED;

/// One evaluation scenario with its rendered 16-channel audio.
pub struct Trial {
    pub scenario: Scenario,
    /// 15 array channels + the external microphone (index 15).
    pub channels: Vec<TimeSignal>,
    pub ground_truth_class: usize,
}

/// Per-trial evaluation outcome.
#[derive(Debug, Clone, Serialize)]
pub struct TrialResult {
    pub frame_classes: Vec<usize>,
    pub speech_frames: Vec<usize>,
    /// Trial estimate in degrees (on the 5 degree grid); absent when no
    /// frame survived gating.
    pub estimate_deg: Option<f64>,
    /// Absolute angular error in degrees, [0, 180].
    pub error_deg: Option<f64>,
}

/// Evaluation trial: desired + J interfering speakers from distinct corpus
/// recordings at equal source power, 5 s render at t60 = 0.5 s / 20 dB SNR.
pub fn gen_eval_trial<R: Rng>(j: usize, corpus: &Corpus, rng: &mut R) -> Result<Trial> {
    let cfg = ScenarioConfig::evaluation();
    let scn = sample_scenario(&cfg, j, rng)?;
    let recs = corpus.pick_distinct(j + 1, rng)?;
    let len = TRIAL_SECONDS * SAMPLE_RATE as usize;
    let mut sigs: Vec<TimeSignal> = recs
        .iter()
        .map(|&r| corpus.region_of(&corpus.recordings[r], len, rng))
        .collect();
    let desired = sigs.remove(0);
    let channels = render(&scn, &desired, &sigs, Some(corpus), rng)?;
    Ok(Trial {
        ground_truth_class: scn.desired_class,
        scenario: scn,
        channels,
    })
}

/// Speech-frame gate: keep frames whose energy is at most 4 dB below the
/// global average, where the global average is the dB energy of the mean
/// linear frame power.
pub fn detect_speech_frames(ext: &TimeSignal) -> Vec<usize> {
    let frames = frame_signal(ext);
    if frames.is_empty() {
        return Vec::new();
    }
    let mean_power: f64 = frames
        .iter()
        .map(|f| f.samples.iter().map(|s| s * s).sum::<f64>() / f.samples.len() as f64)
        .sum::<f64>()
        / frames.len() as f64;
    let global_db = 10.0 * (mean_power + crate::signal::ENERGY_EPS).log10();
    frames
        .iter()
        .enumerate()
        .filter(|(_, f)| frame_energy(f) >= global_db - SPEECH_GATE_DB)
        .map(|(i, _)| i)
        .collect()
}

/// Absolute angular error in degrees with wrap-around (range [0, 180]).
pub fn angular_error(est_deg: f64, truth_deg: f64) -> f64 {
    let mut d = (est_deg - truth_deg).rem_euclid(360.0);
    if d > 180.0 {
        d = 360.0 - d;
    }
    d
}

/// Circular median of angles in degrees: the candidate (from the input set)
/// minimizing the summed circular absolute deviation; ties break toward the
/// smallest angle.
pub fn circular_median(angles: &[f64]) -> Option<f64> {
    if angles.is_empty() {
        return None;
    }
    let mut best = angles[0];
    let mut best_cost = f64::INFINITY;
    let mut candidates: Vec<f64> = angles.to_vec();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    for &c in &candidates {
        let cost: f64 = angles.iter().map(|&a| angular_error(c, a)).sum();
        if cost < best_cost {
            best_cost = cost;
            best = c;
        }
    }
    Some(best)
}

/// Runs the model on every speech-labeled frame of a trial and aggregates a
/// trial estimate. `mask_percentile` selects informed masking; `None` is the
/// unmasked condition. Frames with zero array energy are skipped.
pub fn evaluate_trial<R: Rng>(
    model: &Model,
    trial: &Trial,
    mask_percentile: Option<f64>,
    rng: &mut R,
) -> TrialResult {
    let aligned = align_external(&trial.channels[15], &trial.channels[CENTER_MIC]);
    let speech_frames = detect_speech_frames(&aligned.signal);
    let array_frames: Vec<Vec<Frame>> = trial.channels[..15].iter().map(frame_signal).collect();
    let ext_frames = frame_signal(&aligned.signal);
    let n_frames = array_frames.iter().map(|f| f.len()).min().unwrap_or(0);

    let mut frame_classes = Vec::new();
    let mut frame_angles = Vec::new();
    let mut used_frames = Vec::new();
    for &idx in &speech_frames {
        if idx >= n_frames || idx >= ext_frames.len() {
            continue;
        }
        let array_energy: f64 = array_frames
            .iter()
            .map(|f| f[idx].samples.iter().map(|s| s * s).sum::<f64>())
            .sum();
        if array_energy == 0.0 {
            continue;
        }
        let specs: Vec<_> = array_frames
            .iter()
            .map(|f| forward_spectrum(&f[idx]))
            .collect();
        let mask = mask_percentile.map(|x| compute_mask(&forward_spectrum(&ext_frames[idx]), x));
        let map = feature_map(&specs, mask.as_ref(), rng);
        let class = predict(model, &map);
        frame_classes.push(class);
        frame_angles.push(class as f64 * CLASS_STEP_DEG);
        used_frames.push(idx);
    }

    let estimate = circular_median(&frame_angles);
    let error = estimate.map(|e| angular_error(e, trial.ground_truth_class as f64 * CLASS_STEP_DEG));
    TrialResult {
        frame_classes,
        speech_frames: used_frames,
        estimate_deg: estimate,
        error_deg: error,
    }
}

/// One benchmark row: a single trial under a single condition.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRow {
    pub j: usize,
    /// Mask percentile; absent = unmasked.
    pub condition: Option<f64>,
    pub trial_seed: u64,
    pub truth_deg: f64,
    pub estimate_deg: Option<f64>,
    pub error_deg: Option<f64>,
    pub speech_frame_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub j: usize,
    pub condition: Option<f64>,
    pub trials: usize,
    pub invalid_trials: usize,
    pub median_error_deg: f64,
    pub mean_error_deg: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub rows: Vec<TrialRow>,
    pub aggregates: Vec<AggregateRow>,
}

/// Runs `trials_per_j` trials for each J; every trial is evaluated under the
/// unmasked condition plus each mask percentile (shared audio, so conditions
/// are paired). Trials are independent jobs keyed by derived seeds and the
/// aggregation is an ordered reduction: results do not depend on the worker
/// count.
pub fn run_benchmark(
    model: &Model,
    j_set: &[usize],
    trials_per_j: usize,
    percentiles: &[f64],
    corpus: &Corpus,
    seed: u64,
) -> Result<BenchmarkReport> {
    let mut conditions: Vec<Option<f64>> = vec![None];
    conditions.extend(percentiles.iter().map(|&x| Some(x)));

    let mut rows: Vec<TrialRow> = Vec::new();
    for &j in j_set {
        let per_trial: Vec<Result<Vec<TrialRow>>> = (0..trials_per_j)
            .into_par_iter()
            .map(|t| {
                let trial_seed = seed
                    ^ (TRIAL_SEED_TAG.wrapping_mul(j as u64 + 1))
                        .wrapping_add((t as u64).wrapping_mul(0x9E3779B97F4A7C15));
                let mut trng = rng_from(trial_seed, TRIAL_SEED_TAG);
                let trial = gen_eval_trial(j, corpus, &mut trng)?;
                let truth = trial.ground_truth_class as f64 * CLASS_STEP_DEG;
                let mut out = Vec::with_capacity(conditions.len());
                for (ci, cond) in conditions.iter().enumerate() {
                    let mut crng = rng_from(trial_seed, COND_SEED_TAG + ci as u64);
                    let res = evaluate_trial(model, &trial, *cond, &mut crng);
                    out.push(TrialRow {
                        j,
                        condition: *cond,
                        trial_seed,
                        truth_deg: truth,
                        estimate_deg: res.estimate_deg,
                        error_deg: res.error_deg,
                        speech_frame_count: res.speech_frames.len(),
                    });
                }
                Ok(out)
            })
            .collect();
        for r in per_trial {
            rows.extend(r?);
        }
    }

    let mut aggregates = Vec::new();
    for &j in j_set {
        for cond in &conditions {
            let errs: Vec<f64> = rows
                .iter()
                .filter(|r| r.j == j && r.condition == *cond)
                .filter_map(|r| r.error_deg)
                .collect();
            let total = rows
                .iter()
                .filter(|r| r.j == j && r.condition == *cond)
                .count();
            aggregates.push(AggregateRow {
                j,
                condition: *cond,
                trials: total,
                invalid_trials: total - errs.len(),
                median_error_deg: median(&errs),
                mean_error_deg: if errs.is_empty() {
                    f64::NAN
                } else {
                    errs.iter().sum::<f64>() / errs.len() as f64
                },
            });
        }
    }
    Ok(BenchmarkReport { rows, aggregates })
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl BenchmarkReport {
    /// Tab-separated aggregate table (condition "-" = unmasked).
    pub fn to_delimited(&self) -> String {
        let mut s = String::from("j\tcondition\ttrials\tinvalid\tmedian_deg\tmean_deg\n");
        for a in &self.aggregates {
            let cond = match a.condition {
                Some(x) => format!("P{x:.0}"),
                None => "-".to_string(),
            };
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{:.3}\t{:.3}\n",
                a.j, cond, a.trials, a.invalid_trials, a.median_error_deg, a.mean_error_deg
            ));
        }
        s
    }

    /// Tab-separated per-trial rows.
    pub fn rows_delimited(&self) -> String {
        let mut s =
            String::from("j\tcondition\tseed\ttruth_deg\testimate_deg\terror_deg\tspeech_frames\n");
        for r in &self.rows {
            let cond = match r.condition {
                Some(x) => format!("P{x:.0}"),
                None => "-".to_string(),
            };
            let est = r
                .estimate_deg
                .map(|v| format!("{v:.1}"))
                .unwrap_or_else(|| "-".into());
            let err = r
                .error_deg
                .map(|v| format!("{v:.1}"))
                .unwrap_or_else(|| "-".into());
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.j, cond, r.trial_seed, r.truth_deg, est, err, r.speech_frame_count
            ));
        }
        s
    }
}
