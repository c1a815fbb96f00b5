//! `HSD1` dataset cache: preprocessed images with their provenance.
//!
//! ```text
//! b"HSD1"
//! u32 x4 dims [n, c, h, w], little-endian
//! f32 x n*c*h*w images
//! u32 length of the JSON block
//! JSON { "split": ..., "provenance": ... }
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Provenance, Split};
use crate::error::{HscError, Result};
use crate::tensor::Tensor4;

pub const DATASET_MAGIC: &[u8; 4] = b"HSD1";

#[derive(Serialize, Deserialize)]
struct Meta {
    split: Split,
    provenance: Provenance,
}

pub fn save_dataset(ds: &Dataset<f32>, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(24 + 4 * ds.images.len());
    out.extend_from_slice(DATASET_MAGIC);
    for d in ds.images.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in ds.images.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let meta = serde_json::to_vec(&Meta { split: ds.split, provenance: ds.provenance.clone() })?;
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    fs::write(path, out).map_err(|e| HscError::io(path, e))
}

fn truncated(offset: usize, what: &str) -> HscError {
    HscError::Format { offset: offset as u64, reason: format!("truncated while reading {what}") }
}

pub fn load_dataset(path: &Path) -> Result<Dataset<f32>> {
    let buf = fs::read(path).map_err(|e| HscError::io(path, e))?;
    if buf.len() < 4 || &buf[..4] != DATASET_MAGIC {
        return Err(HscError::BadMagic {
            expected: String::from_utf8_lossy(DATASET_MAGIC).into_owned(),
            found: String::from_utf8_lossy(&buf[..buf.len().min(4)]).into_owned(),
        });
    }
    let u32_at = |off: usize, what: &str| -> Result<usize> {
        buf.get(off..off + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
            .ok_or_else(|| truncated(off, what))
    };
    let dims = [u32_at(4, "dims")?, u32_at(8, "dims")?, u32_at(12, "dims")?, u32_at(16, "dims")?];
    let n: usize = dims.iter().product();
    let end = 20 + 4 * n;
    let payload = buf.get(20..end).ok_or_else(|| truncated(buf.len(), "image payload"))?;
    let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let meta_len = u32_at(end, "metadata length")?;
    let meta_bytes = buf.get(end + 4..end + 4 + meta_len).ok_or_else(|| truncated(buf.len(), "metadata"))?;
    if end + 4 + meta_len != buf.len() {
        return Err(HscError::Format {
            offset: (end + 4 + meta_len) as u64,
            reason: "trailing bytes after metadata".into(),
        });
    }
    let meta: Meta = serde_json::from_slice(meta_bytes)?;
    Ok(Dataset { images: Tensor4::from_vec(dims, data)?, split: meta.split, provenance: meta.provenance })
}

#[cfg(test)]
mod tests {
    use super::super::{lcn_dataset, LcnParams};
    use super::*;

    #[test]
    fn round_trip_keeps_provenance() {
        let ds = Dataset::new(Tensor4::from_fn([2, 1, 9, 9], |[n, _, y, x]| (n + y * x) as f32 * 0.1), Split::Test, "t");
        let ds = lcn_dataset(&ds, &LcnParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.hsd");
        save_dataset(&ds, &p).unwrap();
        let back = load_dataset(&p).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.provenance.fingerprint(), ds.provenance.fingerprint());

        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(load_dataset(&p), Err(HscError::Format { .. })));
    }
}
