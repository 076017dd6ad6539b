//! Model serialization.
//!
//! Layout (little-endian):
//!   magic      "DOAM"          4 bytes
//!   version    u32             (1)
//!   config     u32 length + JSON bytes
//!   learnable  u64             total learnable parameter count
//!   tensors    f64 * n, learnable tensors in declared order
//!   bn stats   f64 * n, running mean + running var per conv stage

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::config::ModelConfig;
use crate::nn::model::{model_init, param_count, Model};

const MAGIC: &[u8; 4] = b"DOAM";
pub const FORMAT_VERSION: u32 = 1;

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let cfg_json = serde_json::to_vec(&model.cfg)
        .map_err(|e| Error::BadModelConfig(e.to_string()))?;
    w.write_all(&(cfg_json.len() as u32).to_le_bytes())?;
    w.write_all(&cfg_json)?;
    w.write_all(&(param_count(model) as u64).to_le_bytes())?;
    let mut io_err = None;
    model.visit_params(|t| {
        if io_err.is_none() {
            io_err = write_f64s(&mut w, t).err();
        }
    });
    if let Some(e) = io_err {
        return Err(e.into());
    }
    for bn in &model.bn {
        write_f64s(&mut w, &bn.running_mean)?;
        write_f64s(&mut w, &bn.running_var)?;
    }
    w.flush()?;
    Ok(())
}

fn write_f64s<W: Write>(w: &mut W, vals: &[f64]) -> std::io::Result<()> {
    for &v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, out: &mut [f64]) -> Result<()> {
    let mut buf = [0u8; 8];
    for v in out.iter_mut() {
        r.read_exact(&mut buf)
            .map_err(|_| Error::CorruptContainer("truncated model tensor data".into()))?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::NotAModelFile)?;
    if &magic != MAGIC {
        return Err(Error::NotAModelFile);
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)
        .map_err(|_| Error::CorruptContainer("truncated model header".into()))?;
    let version = u32::from_le_bytes(u32buf);
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    r.read_exact(&mut u32buf)
        .map_err(|_| Error::CorruptContainer("truncated model header".into()))?;
    let cfg_len = u32::from_le_bytes(u32buf) as usize;
    let mut cfg_bytes = vec![0u8; cfg_len];
    r.read_exact(&mut cfg_bytes)
        .map_err(|_| Error::CorruptContainer("truncated model config".into()))?;
    let cfg: ModelConfig = serde_json::from_slice(&cfg_bytes)
        .map_err(|e| Error::CorruptContainer(format!("bad model config json: {e}")))?;
    cfg.validate()?;
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)
        .map_err(|_| Error::CorruptContainer("truncated model header".into()))?;
    let stored = u64::from_le_bytes(u64buf);
    let expected = cfg.param_count() as u64;
    if stored != expected {
        return Err(Error::ParamCountMismatch {
            found: stored,
            expected,
        });
    }

    // build skeleton of the right shapes, then overwrite every tensor
    let mut model = model_init(&cfg, 0)?;
    let mut read_err = None;
    model.visit_params_mut(|t| {
        if read_err.is_none() {
            read_err = read_f64s(&mut r, t).err();
        }
    });
    if let Some(e) = read_err {
        return Err(e);
    }
    for bn in &mut model.bn {
        read_f64s(&mut r, &mut bn.running_mean)?;
        read_f64s(&mut r, &mut bn.running_var)?;
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::CorruptContainer(
            "trailing bytes after model data".into(),
        ));
    }
    Ok(model)
}
