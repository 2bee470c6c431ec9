//! Binary model file: magic `AINM`, `u16` format version, the resolved
//! config as JSON, then every parameter tensor in declaration order as
//! name, shape and little-endian `f64` values, closed by a CRC32 of all
//! preceding bytes.

use std::path::Path;

use ndarray::Array2;

use super::{Params, PolicyConfig, PolicyError, PolicyModel};

pub const MODEL_MAGIC: &[u8; 4] = b"AINM";
pub const MODEL_VERSION: u16 = 1;

pub fn encode_model(model: &PolicyModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    let json = serde_json::to_vec(model.config()).expect("config serializes");
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    let params = model.params();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, v) in params.names().iter().zip(params.values()) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(v.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(v.ncols() as u32).to_le_bytes());
        for x in v.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PolicyError> {
        let end = self.pos.checked_add(n).ok_or(PolicyError::TruncatedFile)?;
        let s = self.bytes.get(self.pos..end).ok_or(PolicyError::TruncatedFile)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, PolicyError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<PolicyModel, PolicyError> {
    if bytes.len() < 4 {
        return Err(PolicyError::TruncatedFile);
    }
    if &bytes[..4] != MODEL_MAGIC {
        return Err(PolicyError::BadMagic);
    }
    if bytes.len() < 6 {
        return Err(PolicyError::TruncatedFile);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != MODEL_VERSION {
        return Err(PolicyError::VersionMismatch {
            found: version,
            expected: MODEL_VERSION,
        });
    }
    if bytes.len() < 10 {
        return Err(PolicyError::TruncatedFile);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().expect("4 bytes")) {
        return Err(PolicyError::ChecksumMismatch);
    }
    let mut r = Reader { bytes: body, pos: 6 };
    let json_len = r.u32()?;
    let config: PolicyConfig = serde_json::from_slice(r.take(json_len)?)?;
    let count = r.u32()?;
    let mut params = Params::new();
    for _ in 0..count {
        let name_len = r.u32()?;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| PolicyError::ShapeMismatch("parameter name is not UTF-8".into()))?;
        let (rows, cols) = (r.u32()?, r.u32()?);
        let n = rows.checked_mul(cols).ok_or(PolicyError::TruncatedFile)?;
        let raw = r.take(n.checked_mul(8).ok_or(PolicyError::TruncatedFile)?)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        params.push(name, Array2::from_shape_vec((rows, cols), values).expect("sized"));
    }
    if r.pos != body.len() {
        return Err(PolicyError::ShapeMismatch("trailing bytes after parameters".into()));
    }
    PolicyModel::from_params(&config, params)
}

pub fn save_model(model: &PolicyModel, path: impl AsRef<Path>) -> Result<(), PolicyError> {
    std::fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<PolicyModel, PolicyError> {
    decode_model(&std::fs::read(path)?)
}
