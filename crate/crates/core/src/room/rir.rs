//! Image-source room impulse responses for shoebox rooms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SAMPLE_RATE;

/// Speed of sound, m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;

/// Support of the fractional-delay sinc used for the direct path.
pub const DIRECT_SINC_TAPS: usize = 81;

/// RIR length as a multiple of the reverberation time.
const RIR_T60_FACTOR: f64 = 1.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    /// Interior dimensions [Lx, Ly, Lz] in meters.
    pub dimensions: [f64; 3],
    /// Target reverberation time, seconds.
    pub t60: f64,
    /// Uniform wall absorption coefficient derived from t60.
    pub absorption: f64,
}

impl Room {
    /// Room with uniform wall absorption chosen so that the image-source
    /// model decays with the requested reverberation time.
    ///
    /// Sabine's linearization (and even Eyring's exact diffuse-field form)
    /// predicts a faster decay than the shoebox image-source field actually
    /// produces: the decay is a mixture over propagation directions and the
    /// grazing directions dominate late. The absorption is therefore
    /// calibrated by bisection against a directional decay model so that a
    /// Schroeder fit of the generated RIR lands on the target.
    pub fn new(dimensions: [f64; 3], t60: f64) -> Self {
        let absorption = calibrate_absorption(dimensions, t60);
        Room {
            dimensions,
            t60,
            absorption,
        }
    }

    /// Fully absorbing walls: only the direct path remains.
    pub fn anechoic(dimensions: [f64; 3]) -> Self {
        Room {
            dimensions,
            t60: 0.0,
            absorption: 1.0,
        }
    }

    pub fn contains(&self, p: [f64; 3], margin: f64) -> bool {
        p.iter()
            .zip(self.dimensions.iter())
            .all(|(&x, &l)| x >= margin && x <= l - margin)
    }
}

/// Predicted Schroeder-fit reverberation time of the image-source field for
/// a uniform energy reflection coefficient `beta_sq = 1 - absorption`.
///
/// Energy arriving from direction u at time t scales as beta_sq^(n(t, u))
/// with n(t, u) = c*t*(|ux|/Lx + |uy|/Ly + |uz|/Lz) wall hits. The decay
/// curve is the directional average, backward-integrated and fitted over
/// the [-5, -25] dB span like `schroeder_t60`.
fn predicted_t60(dimensions: [f64; 3], beta_sq: f64, t_max: f64) -> f64 {
    const N_DIRS: usize = 192;
    const N_T: usize = 400;
    let [lx, ly, lz] = dimensions;
    // decay rate per direction (Fibonacci sphere quadrature)
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    let mut rates = Vec::with_capacity(N_DIRS);
    for i in 0..N_DIRS {
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / N_DIRS as f64;
        let rho = (1.0 - z * z).sqrt();
        let phi = golden * i as f64;
        let (ux, uy, uz) = (rho * phi.cos(), rho * phi.sin(), z);
        let g = ux.abs() / lx + uy.abs() / ly + uz.abs() / lz;
        rates.push(-beta_sq.ln() * SPEED_OF_SOUND * g);
    }
    // backward-integrated energy: sum_i exp(-rate_i * t) / rate_i
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let edc = |t: f64| -> f64 { rates.iter().map(|&r| (-r * t).exp() / r).sum() };
    let e0 = edc(0.0);
    for k in 0..N_T {
        let t = t_max * k as f64 / N_T as f64;
        let db = 10.0 * (edc(t) / e0).log10();
        if db <= -5.0 && db >= -25.0 {
            pts.push((t, db));
        }
        if db < -25.0 {
            break;
        }
    }
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    -60.0 / slope
}

fn calibrate_absorption(dimensions: [f64; 3], t60: f64) -> f64 {
    // bisect on absorption; predicted t60 decreases as absorption grows
    let t_max = 3.0 * t60;
    let (mut lo, mut hi) = (1e-4, 1.0 - 1e-6);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if predicted_t60(dimensions, 1.0 - mid, t_max) > t60 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    /// Filter taps at 8 kHz.
    pub taps: Vec<f64>,
    pub source_id: usize,
    pub mic_id: usize,
}

impl ImpulseResponse {
    /// Index of the strongest tap; for these RIRs this is the direct path.
    pub fn peak_index(&self) -> usize {
        self.taps
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Deposits a Hann-windowed sinc pulse of amplitude `amp` centered at the
/// fractional sample position `delay` into `taps`.
fn add_fractional_pulse(taps: &mut [f64], delay: f64, amp: f64) {
    let half = DIRECT_SINC_TAPS as isize / 2;
    let center = delay.round() as isize;
    for k in (center - half)..=(center + half) {
        if k < 0 || k as usize >= taps.len() {
            continue;
        }
        let x = k as f64 - delay;
        if x.abs() >= half as f64 {
            continue;
        }
        let sinc = if x == 0.0 {
            1.0
        } else {
            (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
        };
        let w = 0.5 * (1.0 + (std::f64::consts::PI * x / half as f64).cos());
        taps[k as usize] += amp * sinc * w;
    }
}

/// Simulates the RIRs from one source to a set of microphones with the
/// image-source method. Reflections are enumerated out to a path length
/// covering 1.2 x t60; the direct path uses an 81-tap windowed-sinc
/// fractional delay, reflections are rounded to the nearest sample.
/// Amplitudes follow beta^n / r with beta = sqrt(1 - absorption).
pub fn simulate_rir_set(room: &Room, src: [f64; 3], mics: &[[f64; 3]]) -> Result<Vec<ImpulseResponse>> {
    for &m in mics {
        if dist(src, m) < 1e-9 {
            return Err(Error::CoincidentSourceMic);
        }
    }
    let fs = SAMPLE_RATE as f64;
    let beta = (1.0 - room.absorption).max(0.0).sqrt();

    let max_direct = mics
        .iter()
        .map(|&m| dist(src, m))
        .fold(0.0f64, f64::max);
    let (rir_len, max_path) = if beta == 0.0 {
        let len = (max_direct / SPEED_OF_SOUND * fs).ceil() as usize + DIRECT_SINC_TAPS;
        (len, max_direct)
    } else {
        let len = (RIR_T60_FACTOR * room.t60 * fs).ceil() as usize + DIRECT_SINC_TAPS;
        (len, RIR_T60_FACTOR * room.t60 * SPEED_OF_SOUND + max_direct)
    };

    let mut rirs: Vec<ImpulseResponse> = mics
        .iter()
        .enumerate()
        .map(|(i, _)| ImpulseResponse {
            taps: vec![0.0; rir_len],
            source_id: 0,
            mic_id: i,
        })
        .collect();

    // Direct path, fractional delay.
    for (i, &m) in mics.iter().enumerate() {
        let r = dist(src, m);
        add_fractional_pulse(&mut rirs[i].taps, r / SPEED_OF_SOUND * fs, 1.0 / r);
    }

    if beta > 0.0 {
        let [lx, ly, lz] = room.dimensions;
        let px_max = ((max_path + lx) / (2.0 * lx)).ceil() as i64;
        let py_max = ((max_path + ly) / (2.0 * ly)).ceil() as i64;
        let pz_max = ((max_path + lz) / (2.0 * lz)).ceil() as i64;

        // Per-axis image coordinates and wall-hit counts.
        let axis_images = |coord: f64, l: f64, p_max: i64| -> Vec<(f64, u32)> {
            let mut v = Vec::with_capacity((2 * p_max as usize + 1) * 2);
            for p in -p_max..=p_max {
                for &q in &[0i64, 1] {
                    let c = if q == 0 { coord } else { -coord } + 2.0 * p as f64 * l;
                    // wall hits along this axis = planes crossed on the way
                    // back into the room = |floor(c / l)|
                    let hits = (c / l).floor().abs() as u32;
                    v.push((c, hits));
                }
            }
            v
        };
        let xs = axis_images(src[0], lx, px_max);
        let ys = axis_images(src[1], ly, py_max);
        let zs = axis_images(src[2], lz, pz_max);

        let max_delay = rir_len as f64 - 1.0;
        for &(ix, hx) in &xs {
            for &(iy, hy) in &ys {
                for &(iz, hz) in &zs {
                    let order = hx + hy + hz;
                    if order == 0 {
                        continue; // direct path already placed
                    }
                    // (-beta)^order: the alternating sign keeps coincident
                    // late images summing incoherently within a sample bin,
                    // which the energy decay rate relies on.
                    let gain_refl = (-beta).powi(order as i32);
                    for (i, &m) in mics.iter().enumerate() {
                        let r = dist([ix, iy, iz], m);
                        let delay = r / SPEED_OF_SOUND * fs;
                        if delay > max_delay {
                            continue;
                        }
                        rirs[i].taps[delay.round() as usize] += gain_refl / r;
                    }
                }
            }
        }
    }
    Ok(rirs)
}

/// Single source-mic RIR (see `simulate_rir_set`).
pub fn simulate_rir(room: &Room, src: [f64; 3], mic: [f64; 3]) -> Result<ImpulseResponse> {
    Ok(simulate_rir_set(room, src, &[mic])?.remove(0))
}

/// Schroeder backward-integration estimate of the reverberation time:
/// a least-squares line is fitted to the energy decay curve between
/// -5 dB and -25 dB and extrapolated to 60 dB of decay.
pub fn schroeder_t60(rir: &ImpulseResponse) -> f64 {
    let n = rir.taps.len();
    if n == 0 {
        return 0.0;
    }
    let mut edc = vec![0.0; n];
    let mut acc = 0.0;
    for i in (0..n).rev() {
        acc += rir.taps[i] * rir.taps[i];
        edc[i] = acc;
    }
    let total = edc[0].max(1e-300);
    let db: Vec<f64> = edc.iter().map(|&e| 10.0 * (e / total + 1e-300).log10()).collect();
    // fit over the [-5, -25] dB span
    let fs = SAMPLE_RATE as f64;
    let pts: Vec<(f64, f64)> = db
        .iter()
        .enumerate()
        .filter(|(_, &d)| d <= -5.0 && d >= -25.0)
        .map(|(i, &d)| (i as f64 / fs, d))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n_p = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n_p * sxy - sx * sy) / (n_p * sxx - sx * sx);
    if slope >= 0.0 {
        return 0.0;
    }
    -60.0 / slope
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anechoic_single_pulse() {
        let room = Room::anechoic([9.0, 5.0, 3.0]);
        let src = [2.0, 2.0, 1.5];
        let mic = [4.0, 3.0, 1.5];
        let rir = simulate_rir(&room, src, mic).unwrap();
        let r = ((2.0f64).powi(2) + 1.0).sqrt();
        let expect_delay = r / SPEED_OF_SOUND * 8000.0;
        let peak = rir.peak_index();
        assert!((peak as f64 - expect_delay).abs() <= 1.0);
        assert!((rir.taps[peak] - 1.0 / r).abs() / (1.0 / r) < 0.05);
    }

    #[test]
    fn anechoic_inverse_distance() {
        let room = Room::anechoic([20.0, 10.0, 3.0]);
        let mic = [1.0, 5.0, 1.5];
        let r1 = simulate_rir(&room, [3.0, 5.0, 1.5], mic).unwrap();
        let r2 = simulate_rir(&room, [5.0, 5.0, 1.5], mic).unwrap();
        // compare pulse amplitudes via energy: robust to how the fractional
        // delay splits the peak across taps
        let amp = |r: &ImpulseResponse| r.taps.iter().map(|t| t * t).sum::<f64>().sqrt();
        let ratio = amp(&r1) / amp(&r2);
        assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn coincident_rejected() {
        let room = Room::new([9.0, 5.0, 3.0], 0.5);
        let p = [2.0, 2.0, 1.5];
        assert!(simulate_rir(&room, p, p).is_err());
    }

    #[test]
    fn schroeder_tracks_target() {
        let room = Room::new([9.0, 5.0, 3.0], 0.5);
        let rir = simulate_rir(&room, [2.0, 2.0, 1.5], [6.0, 3.0, 1.5]).unwrap();
        let est = schroeder_t60(&rir);
        assert!(
            (est - 0.5).abs() / 0.5 < 0.25,
            "estimated t60 {est}, target 0.5"
        );
    }
}
