//! Random acoustic scenarios: room, array pose, source placement, RIRs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::room::array::{build_array, MicArray};
use crate::room::rir::{simulate_rir_set, ImpulseResponse, Room};

/// Total number of azimuth classes (5 degree grid).
pub const NUM_CLASSES: usize = 72;
pub const CLASS_STEP_DEG: f64 = 5.0;

/// Minimum azimuth spacing between the desired speaker and any interferer.
pub const MIN_DESIRED_SPACING_DEG: f64 = 25.0;
/// Minimum azimuth spacing between two interferers.
pub const MIN_INTERFERER_SPACING_DEG: f64 = 5.0;

/// Vertical offset of the external microphone above the desired speaker.
pub const EXTERNAL_MIC_OFFSET: f64 = 0.2;

const WALL_MARGIN: f64 = 0.1;
const MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    White,
    Babble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialKind {
    Diffuse,
    Uncorrelated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub spatial: SpatialKind,
}

/// Parameter ranges for scenario sampling (Table-1-style bounds).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub room_dims_base: [f64; 3],
    pub room_dims_jitter: [f64; 3],
    pub array_center_base: [f64; 3],
    pub array_center_jitter: [f64; 3],
    pub source_dist_min: f64,
    pub source_dist_max: f64,
    pub t60_min: f64,
    pub t60_max: f64,
    pub snr_min: f64,
    pub snr_max: f64,
}

impl ScenarioConfig {
    /// Training ranges: full parameter variance.
    pub fn training() -> Self {
        ScenarioConfig {
            room_dims_base: [9.0, 5.0, 3.0],
            room_dims_jitter: [1.0, 1.0, 0.5],
            array_center_base: [4.5, 2.5, 1.5],
            array_center_jitter: [0.5, 0.5, 0.5],
            source_dist_min: 1.0,
            source_dist_max: 3.0,
            t60_min: 0.13,
            t60_max: 1.0,
            snr_min: 0.0,
            snr_max: 30.0,
        }
    }

    /// Evaluation ranges: t60 fixed to 0.5 s, SNR fixed to 20 dB.
    pub fn evaluation() -> Self {
        ScenarioConfig {
            t60_min: 0.5,
            t60_max: 0.5,
            snr_min: 20.0,
            snr_max: 20.0,
            ..ScenarioConfig::training()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t60_min <= 0.0 || self.t60_max < self.t60_min {
            return Err(Error::InvalidArgument(format!(
                "invalid t60 range [{}, {}]",
                self.t60_min, self.t60_max
            )));
        }
        if self.source_dist_min <= 0.0 || self.source_dist_max < self.source_dist_min {
            return Err(Error::InvalidArgument("invalid source distance range".into()));
        }
        if self.snr_max < self.snr_min {
            return Err(Error::InvalidArgument("invalid SNR range".into()));
        }
        if self
            .room_dims_base
            .iter()
            .zip(self.room_dims_jitter.iter())
            .any(|(b, j)| b - j <= 0.0)
        {
            return Err(Error::InvalidArgument("invalid room dimension range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub room: Room,
    pub array: MicArray,
    pub desired_position: [f64; 3],
    /// Ground-truth azimuth class of the desired speaker, 0..72.
    pub desired_class: usize,
    pub interferer_positions: Vec<[f64; 3]>,
    pub external_mic_position: [f64; 3],
    /// RIRs indexed [source][channel]; source 0 is the desired speaker,
    /// channel 15 is the external microphone. Not serialized: they are
    /// reproducible from the geometry above.
    #[serde(skip)]
    pub rirs: Vec<Vec<ImpulseResponse>>,
    pub snr_db: f64,
    pub noise_kind: Option<NoiseSpec>,
}

impl Scenario {
    /// Ground-truth azimuth in degrees (relative to the array orientation).
    pub fn desired_azimuth_deg(&self) -> f64 {
        self.desired_class as f64 * CLASS_STEP_DEG
    }

    /// All 16 channel positions in room coordinates.
    pub fn channel_positions(&self) -> Vec<[f64; 3]> {
        let mut p = self.array.absolute_positions();
        p.push(self.external_mic_position);
        p
    }

    /// Channel positions relative to the array center (used for diffuse
    /// noise plane-wave delays).
    pub fn channel_positions_relative(&self) -> Vec<[f64; 3]> {
        let c = self.array.center;
        self.channel_positions()
            .iter()
            .map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]])
            .collect()
    }

    /// Azimuth of an arbitrary point relative to array center/orientation.
    pub fn azimuth_of(&self, p: [f64; 3]) -> f64 {
        let dx = p[0] - self.array.center[0];
        let dy = p[1] - self.array.center[1];
        let az = dy.atan2(dx).to_degrees() - self.array.orientation;
        az.rem_euclid(360.0)
    }
}

/// Absolute circular distance between two azimuths, degrees, in [0, 180].
pub fn azimuth_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

fn place(center: [f64; 3], az_global_deg: f64, dist: f64) -> [f64; 3] {
    let r = az_global_deg.to_radians();
    [
        center[0] + dist * r.cos(),
        center[1] + dist * r.sin(),
        center[2],
    ]
}

/// Samples one scenario with `j` interfering speakers. The desired source
/// direction is snapped to the 5 degree class grid; interferer azimuths are
/// continuous subject to the spacing constraints. RIRs for every source to
/// all 16 channels are computed before returning.
pub fn sample_scenario<R: Rng>(cfg: &ScenarioConfig, j: usize, rng: &mut R) -> Result<Scenario> {
    cfg.validate()?;
    let mut attempts = 0usize;
    let bump = |attempts: &mut usize| -> Result<()> {
        *attempts += 1;
        if *attempts > MAX_ATTEMPTS {
            Err(Error::SamplingExhausted(MAX_ATTEMPTS))
        } else {
            Ok(())
        }
    };

    let dims = [
        cfg.room_dims_base[0] + rng.gen_range(-cfg.room_dims_jitter[0]..=cfg.room_dims_jitter[0]),
        cfg.room_dims_base[1] + rng.gen_range(-cfg.room_dims_jitter[1]..=cfg.room_dims_jitter[1]),
        cfg.room_dims_base[2] + rng.gen_range(-cfg.room_dims_jitter[2]..=cfg.room_dims_jitter[2]),
    ];
    let t60 = if cfg.t60_max > cfg.t60_min {
        rng.gen_range(cfg.t60_min..=cfg.t60_max)
    } else {
        cfg.t60_min
    };
    let room = Room::new(dims, t60);

    // Array pose; resample until all mics are inside the room.
    let array = loop {
        let center = [
            cfg.array_center_base[0]
                + rng.gen_range(-cfg.array_center_jitter[0]..=cfg.array_center_jitter[0]),
            cfg.array_center_base[1]
                + rng.gen_range(-cfg.array_center_jitter[1]..=cfg.array_center_jitter[1]),
            cfg.array_center_base[2]
                + rng.gen_range(-cfg.array_center_jitter[2]..=cfg.array_center_jitter[2]),
        ];
        let a = build_array(center, 0.0);
        if a.absolute_positions()
            .iter()
            .all(|&p| room.contains(p, WALL_MARGIN))
        {
            break a;
        }
        bump(&mut attempts)?;
    };

    // Desired speaker on the class grid.
    let (desired_class, desired_position) = loop {
        let class = rng.gen_range(0..NUM_CLASSES);
        let az = array.orientation + class as f64 * CLASS_STEP_DEG;
        let dist = rng.gen_range(cfg.source_dist_min..=cfg.source_dist_max);
        let pos = place(array.center, az, dist);
        let ext = [pos[0], pos[1], pos[2] + EXTERNAL_MIC_OFFSET];
        if room.contains(pos, WALL_MARGIN) && room.contains(ext, WALL_MARGIN) {
            break (class, pos);
        }
        bump(&mut attempts)?;
    };
    let desired_az = desired_class as f64 * CLASS_STEP_DEG;
    let external_mic_position = [
        desired_position[0],
        desired_position[1],
        desired_position[2] + EXTERNAL_MIC_OFFSET,
    ];

    // Interferers with angular spacing constraints.
    let mut interferer_positions: Vec<[f64; 3]> = Vec::with_capacity(j);
    let mut interferer_azimuths: Vec<f64> = Vec::with_capacity(j);
    while interferer_positions.len() < j {
        let az = rng.gen_range(0.0..360.0);
        let dist = rng.gen_range(cfg.source_dist_min..=cfg.source_dist_max);
        let pos = place(array.center, array.orientation + az, dist);
        let ok = azimuth_distance(az, desired_az) >= MIN_DESIRED_SPACING_DEG
            && interferer_azimuths
                .iter()
                .all(|&other| azimuth_distance(az, other) >= MIN_INTERFERER_SPACING_DEG)
            && room.contains(pos, WALL_MARGIN);
        if ok {
            interferer_positions.push(pos);
            interferer_azimuths.push(az);
        } else {
            bump(&mut attempts)?;
        }
    }

    let snr_db = if cfg.snr_max > cfg.snr_min {
        rng.gen_range(cfg.snr_min..=cfg.snr_max)
    } else {
        cfg.snr_min
    };
    let noise_kind = Some(NoiseSpec {
        kind: if rng.gen_bool(0.5) {
            NoiseKind::White
        } else {
            NoiseKind::Babble
        },
        spatial: if rng.gen_bool(0.5) {
            SpatialKind::Diffuse
        } else {
            SpatialKind::Uncorrelated
        },
    });

    let channels = {
        let mut p = array.absolute_positions();
        p.push(external_mic_position);
        p
    };
    let mut rirs = Vec::with_capacity(1 + j);
    for (sid, &src) in std::iter::once(&desired_position)
        .chain(interferer_positions.iter())
        .enumerate()
    {
        let mut set = simulate_rir_set(&room, src, &channels)?;
        for r in &mut set {
            r.source_id = sid;
        }
        rirs.push(set);
    }

    Ok(Scenario {
        room,
        array,
        desired_position,
        desired_class,
        interferer_positions,
        external_mic_position,
        rirs,
        snr_db,
        noise_kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng;

    #[test]
    fn determinism() {
        let cfg = ScenarioConfig::evaluation();
        let a = sample_scenario(&cfg, 2, &mut rng(11)).unwrap();
        let b = sample_scenario(&cfg, 2, &mut rng(11)).unwrap();
        assert_eq!(a.desired_class, b.desired_class);
        assert_eq!(a.desired_position, b.desired_position);
        assert_eq!(a.interferer_positions, b.interferer_positions);
        assert_eq!(a.snr_db, b.snr_db);
        assert_eq!(a.rirs[0][0].taps, b.rirs[0][0].taps);
    }

    #[test]
    fn spacing_constraints() {
        let cfg = ScenarioConfig::evaluation();
        for seed in 0..20 {
            let s = sample_scenario(&cfg, 2, &mut rng(seed)).unwrap();
            let des = s.desired_azimuth_deg();
            let azs: Vec<f64> = s
                .interferer_positions
                .iter()
                .map(|&p| s.azimuth_of(p))
                .collect();
            for &a in &azs {
                assert!(azimuth_distance(a, des) >= MIN_DESIRED_SPACING_DEG - 1e-6);
            }
            for i in 0..azs.len() {
                for k in i + 1..azs.len() {
                    assert!(
                        azimuth_distance(azs[i], azs[k]) >= MIN_INTERFERER_SPACING_DEG - 1e-6
                    );
                }
            }
        }
    }

    #[test]
    fn external_mic_offset() {
        let cfg = ScenarioConfig::evaluation();
        let s = sample_scenario(&cfg, 0, &mut rng(3)).unwrap();
        assert_eq!(s.external_mic_position[0], s.desired_position[0]);
        assert_eq!(s.external_mic_position[1], s.desired_position[1]);
        assert!((s.external_mic_position[2] - s.desired_position[2] - 0.2).abs() < 1e-12);
    }
}
