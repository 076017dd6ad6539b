//! Speech corpus access: a flat directory of mono WAV files, one recording
//! per file, resampled to 8 kHz on load.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::signal::{self, TimeSignal, SAMPLE_RATE};

pub struct Corpus {
    pub recordings: Vec<TimeSignal>,
    pub paths: Vec<PathBuf>,
}

impl Corpus {
    /// Loads every `.wav` file in `dir` (sorted by filename) at 8 kHz.
    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::EmptyCorpus(dir.display().to_string()));
        }
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().map(|e| e == "wav").unwrap_or(false))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(Error::EmptyCorpus(dir.display().to_string()));
        }
        let mut recordings = Vec::with_capacity(paths.len());
        for p in &paths {
            let sig = signal::load_audio(p)?;
            recordings.push(signal::resample(&sig, SAMPLE_RATE)?);
        }
        Ok(Corpus { recordings, paths })
    }

    pub fn len(&self) -> usize {
        self.recordings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recordings.is_empty()
    }

    /// Random recording index.
    pub fn pick<R: Rng>(&self, rng: &mut R) -> usize {
        rng.gen_range(0..self.recordings.len())
    }

    /// `n` distinct recording indices, in random order.
    pub fn pick_distinct<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.recordings.len() < n {
            return Err(Error::CorpusTooSmall {
                need: n,
                have: self.recordings.len(),
            });
        }
        let mut idx: Vec<usize> = (0..self.recordings.len()).collect();
        idx.shuffle(rng);
        idx.truncate(n);
        Ok(idx)
    }

    /// A random contiguous region of a random recording, looped/padded to
    /// `len` samples if the recording is shorter.
    pub fn random_region<R: Rng>(&self, len: usize, rng: &mut R) -> TimeSignal {
        let rec = &self.recordings[self.pick(rng)];
        self.region_of(rec, len, rng)
    }

    pub fn region_of<R: Rng>(&self, rec: &TimeSignal, len: usize, rng: &mut R) -> TimeSignal {
        let mut out = Vec::with_capacity(len);
        if rec.len() >= len {
            let start = rng.gen_range(0..=rec.len() - len);
            out.extend_from_slice(&rec.samples[start..start + len]);
        } else {
            let start = rng.gen_range(0..rec.len().max(1));
            while out.len() < len {
                let take = (len - out.len()).min(rec.len());
                let s = if out.is_empty() { start.min(rec.len() - 1) } else { 0 };
                let take = take.min(rec.len() - s);
                out.extend_from_slice(&rec.samples[s..s + take]);
            }
        }
        TimeSignal::new(out, SAMPLE_RATE)
    }
}
