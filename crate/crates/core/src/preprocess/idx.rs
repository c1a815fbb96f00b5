//! IDX files as distributed for MNIST. Pixels are scaled to `[0, 1]`.
//! Files ending in `.gz` are decompressed transparently.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use super::{Dataset, Split};
use crate::error::{HscError, Result};
use crate::tensor::Tensor4;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| HscError::io(path, e))?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| HscError::io(path, e))?;
        return Ok(out);
    }
    Ok(raw)
}

fn be_u32(buf: &[u8], offset: usize, what: &str) -> Result<u32> {
    buf.get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| HscError::Format {
            offset: offset as u64,
            reason: format!("truncated header while reading {what}"),
        })
}

fn check_magic(buf: &[u8], want: u32) -> Result<()> {
    let magic = be_u32(buf, 0, "magic")?;
    if magic != want {
        return Err(HscError::BadMagic {
            expected: format!("{want:#010x}"),
            found: format!("{magic:#010x}"),
        });
    }
    Ok(())
}

fn check_payload(buf: &[u8], header: usize, count: usize) -> Result<()> {
    let have = buf.len() - header;
    if have < count {
        return Err(HscError::Format {
            offset: buf.len() as u64,
            reason: format!("payload truncated: header declares {count} bytes, found {have}"),
        });
    }
    if have > count {
        return Err(HscError::Format {
            offset: (header + count) as u64,
            reason: format!("{} trailing bytes after payload", have - count),
        });
    }
    Ok(())
}

/// Parses an in-memory IDX image file into `[n, 1, rows, cols]`.
pub fn parse_idx_images(buf: &[u8]) -> Result<Tensor4<f32>> {
    check_magic(buf, IDX_IMAGES_MAGIC)?;
    let n = be_u32(buf, 4, "image count")? as usize;
    let rows = be_u32(buf, 8, "row count")? as usize;
    let cols = be_u32(buf, 12, "column count")? as usize;
    check_payload(buf, 16, n * rows * cols)?;
    let data = buf[16..].iter().map(|&b| b as f32 / 255.0).collect();
    Tensor4::from_vec([n, 1, rows, cols], data)
}

/// Reads an IDX image file. The split is inferred from the MNIST naming
/// convention: names starting with `t10k` are test data.
pub fn load_idx(path: &Path) -> Result<Dataset<f32>> {
    let images = parse_idx_images(&read_file(path)?)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let split = if name.starts_with("t10k") { Split::Test } else { Split::Train };
    Ok(Dataset::new(images, split, format!("idx:{name}")))
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let buf = read_file(path)?;
    check_magic(&buf, IDX_LABELS_MAGIC)?;
    let n = be_u32(&buf, 4, "label count")? as usize;
    check_payload(&buf, 8, n)?;
    Ok(buf[8..].to_vec())
}

/// Writes `[n, 1, rows, cols]` images in `[0, 1]` as an IDX image file.
pub fn write_idx_images(path: &Path, images: &Tensor4<f32>) -> Result<()> {
    let [n, c, h, w] = images.dims();
    if c != 1 {
        return Err(HscError::dim("channels", 1, c));
    }
    let mut out = Vec::with_capacity(16 + n * h * w);
    for v in [IDX_IMAGES_MAGIC, n as u32, h as u32, w as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(images.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    fs::write(path, out).map_err(|e| HscError::io(path, e))
}

fn find(dir: &Path, stem: &str) -> Result<PathBuf> {
    for cand in [stem.to_string(), format!("{stem}.gz"), stem.replacen("-idx", ".idx", 1)] {
        let p = dir.join(&cand);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(HscError::io(
        dir.join(stem),
        std::io::Error::new(std::io::ErrorKind::NotFound, "IDX file not found"),
    ))
}

/// Loads the MNIST train and test images from `dir`, truncated to the
/// first `limits.0` / `limits.1` images when given.
pub fn load_mnist(dir: &Path, limits: (Option<usize>, Option<usize>)) -> Result<(Dataset<f32>, Dataset<f32>)> {
    let train = load_idx(&find(dir, "train-images-idx3-ubyte")?)?;
    let test = load_idx(&find(dir, "t10k-images-idx3-ubyte")?)?;
    let train = limits.0.map_or(train.clone(), |n| train.take(n));
    let test = limits.1.map_or(test.clone(), |n| test.take(n));
    Ok((train, test))
}
