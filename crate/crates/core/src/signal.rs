//! Audio I/O, resampling, framing, windowing and spectral transforms.
//!
//! All processing downstream of the corpus loader runs at 8 kHz with
//! non-overlapping 256-sample (32 ms) frames. The analysis window is a
//! periodic Hann window; the forward transform is unscaled and the inverse
//! divides by N.

use std::path::Path;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;

pub const SAMPLE_RATE: u32 = 8000;
pub const FRAME_LEN: usize = 256;
pub const N_BINS: usize = FRAME_LEN / 2 + 1;

/// dB floor guard for silent frames.
pub const ENERGY_EPS: f64 = 1e-12;

/// Sampled mono waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl TimeSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        debug_assert!(sample_rate > 0);
        TimeSignal {
            samples,
            sample_rate,
        }
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        TimeSignal::new(vec![0.0; len], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean square of the samples.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }
}

/// One 256-sample analysis frame (raw samples, window applied on transform).
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub samples: [f64; FRAME_LEN],
    pub index: usize,
}

/// One-sided complex spectrum of one windowed frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFrame {
    pub bins: Vec<Complex64>,
    pub frame_index: usize,
}

/// Loads a mono PCM WAV file (16-bit int or 32-bit float) and normalizes
/// samples to [-1, 1]. 16-bit samples are divided by 32768.
pub fn load_audio(path: &Path) -> Result<TimeSignal> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| Error::Wav(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::NotMono {
            channels: spec.channels,
            path: path.to_path_buf(),
        });
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Wav(e.to_string()))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Wav(e.to_string()))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat(format!(
                "{fmt:?} {bits}-bit (expected 16-bit int or 32-bit float PCM)"
            )))
        }
    };
    Ok(TimeSignal::new(samples, spec.sample_rate))
}

/// Writes a signal as 32-bit float mono WAV.
pub fn save_audio(path: &Path, sig: &TimeSignal) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sig.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| Error::Wav(e.to_string()))?;
    for &s in &sig.samples {
        writer
            .write_sample(s as f32)
            .map_err(|e| Error::Wav(e.to_string()))?;
    }
    writer.finalize().map_err(|e| Error::Wav(e.to_string()))?;
    Ok(())
}

/// Writes a multichannel signal set as one interleaved WAV.
pub fn save_multichannel(path: &Path, channels: &[TimeSignal]) -> Result<()> {
    if channels.is_empty() {
        return Err(Error::InvalidArgument("no channels to write".into()));
    }
    let rate = channels[0].sample_rate;
    let len = channels.iter().map(|c| c.len()).min().unwrap_or(0);
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate: rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| Error::Wav(e.to_string()))?;
    for i in 0..len {
        for ch in channels {
            writer
                .write_sample(ch.samples[i] as f32)
                .map_err(|e| Error::Wav(e.to_string()))?;
        }
    }
    writer.finalize().map_err(|e| Error::Wav(e.to_string()))?;
    Ok(())
}

const RESAMPLE_TAPS: usize = 64;

/// Windowed-sinc resampler (64-tap prototype, Hann windowed).
pub fn resample(sig: &TimeSignal, target_rate: u32) -> Result<TimeSignal> {
    if target_rate == 0 {
        return Err(Error::InvalidArgument("target_rate must be > 0".into()));
    }
    if target_rate == sig.sample_rate {
        return Ok(sig.clone());
    }
    let ratio = target_rate as f64 / sig.sample_rate as f64;
    let out_len = (sig.len() as f64 * ratio).round() as usize;
    // Cutoff in cycles per input sample; leave headroom below Nyquist.
    let fc = 0.45 * ratio.min(1.0);
    let half = RESAMPLE_TAPS as isize / 2;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let t = n as f64 / ratio;
        let center = t.floor() as isize;
        let mut acc = 0.0;
        for k in (center - half + 1)..=(center + half) {
            if k < 0 || k as usize >= sig.len() {
                continue;
            }
            let x = t - k as f64;
            acc += sig.samples[k as usize] * windowed_sinc(x, fc, RESAMPLE_TAPS);
        }
        out.push(acc);
    }
    Ok(TimeSignal::new(out, target_rate))
}

/// Hann-windowed sinc kernel, cutoff `fc` cycles/sample, support `taps` samples.
pub fn windowed_sinc(x: f64, fc: f64, taps: usize) -> f64 {
    let half = taps as f64 / 2.0;
    if x.abs() >= half {
        return 0.0;
    }
    // k(x) = 2*fc*sinc(2*fc*x); sampled at unit rate its DC gain is 1.
    let sinc = if x == 0.0 {
        2.0 * fc
    } else {
        (2.0 * std::f64::consts::PI * fc * x).sin() / (std::f64::consts::PI * x)
    };
    let w = 0.5 * (1.0 + (std::f64::consts::PI * x / half).cos());
    sinc * w
}

/// Splits a signal into non-overlapping 256-sample frames; the trailing
/// remainder is discarded.
pub fn frame_signal(sig: &TimeSignal) -> Vec<Frame> {
    debug_assert_eq!(sig.sample_rate, SAMPLE_RATE);
    let n_frames = sig.len() / FRAME_LEN;
    (0..n_frames)
        .map(|i| {
            let mut samples = [0.0; FRAME_LEN];
            samples.copy_from_slice(&sig.samples[i * FRAME_LEN..(i + 1) * FRAME_LEN]);
            Frame { samples, index: i }
        })
        .collect()
}

/// Periodic Hann window of length 256.
pub fn hann_window() -> [f64; FRAME_LEN] {
    let mut w = [0.0; FRAME_LEN];
    for (n, v) in w.iter_mut().enumerate() {
        *v = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / FRAME_LEN as f64).cos());
    }
    w
}

/// Applies the periodic Hann window and a 256-point forward transform;
/// returns the 129 one-sided bins (unscaled).
pub fn forward_spectrum(frame: &Frame) -> SpectralFrame {
    let window = hann_window();
    let windowed: Vec<f64> = frame
        .samples
        .iter()
        .zip(window.iter())
        .map(|(s, w)| s * w)
        .collect();
    let full = fft::fft_real(&windowed);
    SpectralFrame {
        bins: full[..N_BINS].to_vec(),
        frame_index: frame.index,
    }
}

/// Inverse of `forward_spectrum` up to the window: reconstructs the windowed
/// time frame from the one-sided bins.
pub fn inverse_spectrum(spec: &SpectralFrame) -> Vec<f64> {
    let full = fft::expand_one_sided(&spec.bins, FRAME_LEN);
    fft::ifft_real_part(&full)
}

/// Frame energy in dB: 10*log10(mean square + 1e-12).
pub fn frame_energy(frame: &Frame) -> f64 {
    let ms = frame.samples.iter().map(|s| s * s).sum::<f64>() / FRAME_LEN as f64;
    10.0 * (ms + ENERGY_EPS).log10()
}
