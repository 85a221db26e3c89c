//! Binary checkpoint container.
//!
//! Layout (little-endian): `RFP1`, version, architecture JSON, tensor table
//! (name, shape, float32 data), normalisation vector (float64), metadata JSON.
//! Strings are prefixed by their byte length as `u32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::model::{ArchConfig, Model, Tensor};

const MAGIC: &[u8; 4] = b"RFP1";
const VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_str(w: &mut impl Write, s: &str) -> Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn get_str(r: &mut impl Read) -> Result<String> {
    let n = get_u32(r)? as usize;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b).map_err(truncated)?;
    String::from_utf8(b).map_err(|e| Error::Checkpoint(e.to_string()))
}

fn truncated(e: std::io::Error) -> Error {
    Error::Checkpoint(format!("truncated checkpoint: {e}"))
}

/// Writes `model` with free-form JSON `metadata`. Parameters are stored in
/// single precision.
pub fn save_checkpoint(path: &Path, model: &Model, metadata: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    put_u32(&mut w, VERSION)?;
    put_str(&mut w, &serde_json::to_string(&model.arch)?)?;
    put_u32(&mut w, model.tensors.len() as u32)?;
    for t in &model.tensors {
        put_str(&mut w, &t.name)?;
        put_u32(&mut w, t.shape.len() as u32)?;
        for d in &t.shape {
            put_u32(&mut w, *d as u32)?;
        }
        for v in &t.data {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    put_u32(&mut w, model.target_std.len() as u32)?;
    for s in &model.target_std {
        w.write_all(&s.to_le_bytes())?;
    }
    put_str(&mut w, metadata)?;
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint and checks it against the architecture it declares.
pub fn load_checkpoint(path: &Path) -> Result<(Model, String)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!("{} is not a model checkpoint", path.display())));
    }
    let version = get_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let arch: ArchConfig = serde_json::from_str(&get_str(&mut r)?).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let n = get_u32(&mut r)? as usize;
    let mut tensors = Vec::with_capacity(n);
    for _ in 0..n {
        let name = get_str(&mut r)?;
        let ndim = get_u32(&mut r)? as usize;
        let shape = (0..ndim).map(|_| get_u32(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let mut bytes = vec![0u8; 4 * len];
        r.read_exact(&mut bytes).map_err(truncated)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        tensors.push(Tensor { name, shape, data });
    }
    let d = get_u32(&mut r)? as usize;
    let mut target_std = Vec::with_capacity(d);
    for _ in 0..d {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(truncated)?;
        target_std.push(f64::from_le_bytes(b));
    }
    let metadata = get_str(&mut r)?;

    let reference = Model::new(arch.clone(), 0).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let layout_ok = reference.tensors.len() == tensors.len()
        && reference.tensors.iter().zip(&tensors).all(|(a, b)| a.name == b.name && a.shape == b.shape);
    if !layout_ok {
        return Err(Error::Checkpoint("tensor table does not match the architecture".into()));
    }
    if target_std.len() != arch.n_targets || target_std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::Checkpoint("invalid normalisation vector".into()));
    }
    Ok((Model { arch, tensors, target_std }, metadata))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::model::ArchConfig;

    #[test]
    fn round_trip_is_exact_for_single_precision_parameters() {
        let mut m = Model::new(ArchConfig { dense: vec![7], ..ArchConfig::desk() }, 3).unwrap();
        m.target_std = (0..14).map(|i| 0.1 + i as f64 / 3.0).collect();
        m.quantize();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&p, &m, "{\"epoch\":3}").unwrap();
        let (back, meta) = load_checkpoint(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(meta, "{\"epoch\":3}");
        let q = dir.path().join("n.ckpt");
        save_checkpoint(&q, &back, &meta).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        std::fs::write(&p, b"RFP1\x01\x00").unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Checkpoint(_))));
        std::fs::write(&p, b"XXXX").unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Checkpoint(_))));
    }
}
