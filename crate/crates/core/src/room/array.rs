//! Microphone array geometry.

use serde::{Deserialize, Serialize};

/// Number of array microphones (the external microphone is channel 15).
pub const NUM_MICS: usize = 15;

/// Array aperture: chord width and arc depth in meters.
pub const ARRAY_WIDTH: f64 = 0.4;
pub const ARRAY_DEPTH: f64 = 0.13;

/// Ratio of the geometric progression of x-offsets from the center outwards.
const LOG_BASE: f64 = 1.5;

/// Index of the central microphone used for external-mic alignment.
pub const CENTER_MIC: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicArray {
    /// 15 positions relative to the array center, meters.
    pub positions: Vec<[f64; 3]>,
    /// Array center in room coordinates, meters.
    pub center: [f64; 3],
    /// Azimuth of the array broadside, degrees.
    pub orientation: f64,
}

impl MicArray {
    /// Absolute room coordinates of the array microphones.
    pub fn absolute_positions(&self) -> Vec<[f64; 3]> {
        self.positions
            .iter()
            .map(|p| {
                [
                    self.center[0] + p[0],
                    self.center[1] + p[1],
                    self.center[2] + p[2],
                ]
            })
            .collect()
    }
}

/// Deterministic 15-microphone layout: x-offsets in a geometric (log-spaced)
/// progression symmetric about the center, y-offsets on a circular arc of
/// 0.4 m chord and 0.13 m depth, all at equal height. The layout is rotated
/// about the vertical axis by `orientation` degrees.
pub fn build_array(center: [f64; 3], orientation: f64) -> MicArray {
    // 7 mics per side plus the center mic.
    let mut xs = Vec::with_capacity(NUM_MICS);
    let denom = LOG_BASE.powi(7) - 1.0;
    for k in (1..=7).rev() {
        xs.push(-ARRAY_WIDTH / 2.0 * (LOG_BASE.powi(k) - 1.0) / denom);
    }
    xs.push(0.0);
    for k in 1..=7 {
        xs.push(ARRAY_WIDTH / 2.0 * (LOG_BASE.powi(k) - 1.0) / denom);
    }
    // Circle through (+-w/2, 0) and (0, d).
    let w = ARRAY_WIDTH / 2.0;
    let radius = (w * w + ARRAY_DEPTH * ARRAY_DEPTH) / (2.0 * ARRAY_DEPTH);
    let rad = orientation.to_radians();
    let (sin, cos) = rad.sin_cos();
    let positions = xs
        .iter()
        .map(|&x| {
            let y = (radius * radius - x * x).sqrt() - (radius - ARRAY_DEPTH);
            [x * cos - y * sin, x * sin + y * cos, 0.0]
        })
        .collect();
    MicArray {
        positions,
        center,
        orientation,
    }
}
