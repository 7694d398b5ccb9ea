//! Versioned binary checkpoints.
//!
//! Layout (little endian): magic, `u32` version, `u32` length + JSON model
//! config, `u32` group count, then per group `u32` name length, name,
//! `u32` rows, `u32` cols, and finally `u64` parameter count followed by the
//! parameters as `f64`.

use super::{IdentError, IdentModel, ModelConfig};
use crate::scalar::Real;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GVIDENT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint<T: Real>(model: &IdentModel<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(&model.config).expect("config serialises");
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    out.extend_from_slice(&(model.groups().len() as u32).to_le_bytes());
    for g in model.groups() {
        out.extend_from_slice(&(g.name.len() as u32).to_le_bytes());
        out.extend_from_slice(g.name.as_bytes());
        out.extend_from_slice(&(g.rows as u32).to_le_bytes());
        out.extend_from_slice(&(g.cols as u32).to_le_bytes());
    }
    out.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    for p in &model.params {
        out.extend_from_slice(&p.as_f64().to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IdentError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| IdentError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IdentError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, IdentError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn load_checkpoint<T: Real>(bytes: &[u8]) -> Result<IdentModel<T>, IdentError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(IdentError::Checkpoint("not a model checkpoint".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(IdentError::Checkpoint(format!(
            "version {version} is not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let len = r.u32()? as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(len)?)
        .map_err(|e| IdentError::Checkpoint(format!("config: {e}")))?;
    let expected = IdentModel::<T>::new(config.clone(), 0)?;
    let n_groups = r.u32()? as usize;
    if n_groups != expected.groups().len() {
        return Err(IdentError::Checkpoint(format!(
            "{n_groups} parameter groups, config implies {}",
            expected.groups().len()
        )));
    }
    for g in expected.groups() {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8_lossy(r.take(name_len)?).into_owned();
        let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
        if name != g.name || rows != g.rows || cols != g.cols {
            return Err(IdentError::Checkpoint(format!(
                "group `{name}` is {rows}x{cols}, expected `{}` {}x{}",
                g.name, g.rows, g.cols
            )));
        }
    }
    let count = r.u64()? as usize;
    if count != expected.n_params() {
        return Err(IdentError::Checkpoint(format!(
            "{count} parameters, expected {}",
            expected.n_params()
        )));
    }
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        params.push(T::lit(f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"))));
    }
    if r.pos != bytes.len() {
        return Err(IdentError::Checkpoint("trailing bytes after parameters".into()));
    }
    IdentModel::from_params(config, params)
}
