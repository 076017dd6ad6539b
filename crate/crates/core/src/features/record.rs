//! Flat binary container for cached feature maps.
//!
//! Layout (little-endian):
//!   magic  "GCCR"            4 bytes
//!   mics   u32               (15)
//!   lags   u32               (24)
//!   count  u32               number of maps
//!   values f64 * mics*mics*lags per map, row-major [k][l][lag]

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{GccFeatureMap, MAP_MICS, N_LAGS};

const MAGIC: &[u8; 4] = b"GCCR";

pub fn write_feature_maps(path: &Path, maps: &[GccFeatureMap]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(MAP_MICS as u32).to_le_bytes())?;
    w.write_all(&(N_LAGS as u32).to_le_bytes())?;
    w.write_all(&(maps.len() as u32).to_le_bytes())?;
    for m in maps {
        for &v in &m.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_maps(path: &Path) -> Result<Vec<GccFeatureMap>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::CorruptContainer("bad feature record magic".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let mics = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)?;
    let lags = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)?;
    let count = u32::from_le_bytes(u32buf) as usize;
    if mics != MAP_MICS || lags != N_LAGS {
        return Err(Error::CorruptContainer(format!(
            "unexpected dimensions {mics}x{mics}x{lags}"
        )));
    }
    let mut maps = Vec::with_capacity(count);
    let mut f64buf = [0u8; 8];
    for i in 0..count {
        let mut values = Vec::with_capacity(GccFeatureMap::LEN);
        for _ in 0..GccFeatureMap::LEN {
            r.read_exact(&mut f64buf).map_err(|_| {
                Error::CorruptContainer(format!("truncated feature record at map {i}"))
            })?;
            values.push(f64::from_le_bytes(f64buf));
        }
        maps.push(GccFeatureMap {
            values,
            frame_index: i,
        });
    }
    Ok(maps)
}
