//! Atom mosaics: tiles laid out row-major on a near-square grid with a
//! one-pixel white gap, each tile min-max normalized on its own.

use std::fs;
use std::path::Path;

use crate::error::{HscError, Result};
use crate::real::Real;
use crate::tensor::Tensor4;

#[derive(Clone, Debug, PartialEq)]
pub struct Mosaic {
    pub width: usize,
    pub height: usize,
    /// 1 (gray) or 3 (RGB, interleaved).
    pub channels: usize,
    pub pixels: Vec<u8>,
    pub tiles: usize,
    pub tile_hw: (usize, usize),
    /// `(rows, cols)`
    pub grid: (usize, usize),
}

fn normalize_tile(values: &[f64]) -> Vec<u8> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0; values.len()];
    }
    values.iter().map(|v| ((v - lo) / (hi - lo) * 255.0).round() as u8).collect()
}

/// Lays out `atoms` `[n, c, h, w]` in `order` (all atoms in index order when
/// `None`), optionally dropping the first entry of the order.
///
/// Three-channel atoms render in colour; any other channel count is
/// averaged to gray.
pub fn render_mosaic<T: Real>(atoms: &Tensor4<T>, order: Option<&[usize]>, exclude_top: bool) -> Result<Mosaic> {
    let [n, c, h, w] = atoms.dims();
    let natural: Vec<usize> = (0..n).collect();
    let order = order.unwrap_or(&natural);
    if order.len() != n {
        return Err(HscError::dim("mosaic order length", n, order.len()));
    }
    if let Some(&bad) = order.iter().find(|&&a| a >= n) {
        return Err(HscError::param("order", format!("atom index {bad} out of range for {n} atoms")));
    }
    let shown = &order[usize::from(exclude_top).min(n)..];
    if shown.is_empty() {
        return Err(HscError::param("atoms", "no tiles left to draw"));
    }
    let out_c = if c == 3 { 3 } else { 1 };
    let cols = (shown.len() as f64).sqrt().ceil() as usize;
    let rows = shown.len().div_ceil(cols);
    let width = cols * w + cols - 1;
    let height = rows * h + rows - 1;
    let mut pixels = vec![255u8; width * height * out_c];
    for (t, &a) in shown.iter().enumerate() {
        let item = atoms.item(a);
        // tile values as [h, w, out_c]
        let vals: Vec<f64> = (0..h * w)
            .flat_map(|p| {
                if out_c == 3 {
                    (0..3).map(|ch| item[ch * h * w + p].as_f64()).collect::<Vec<_>>()
                } else {
                    vec![(0..c).map(|ch| item[ch * h * w + p].as_f64()).sum::<f64>() / c as f64]
                }
            })
            .collect();
        let tile = normalize_tile(&vals);
        let (ty, tx) = (t / cols * (h + 1), t % cols * (w + 1));
        for y in 0..h {
            let dst = ((ty + y) * width + tx) * out_c;
            pixels[dst..dst + w * out_c].copy_from_slice(&tile[y * w * out_c..(y + 1) * w * out_c]);
        }
    }
    Ok(Mosaic { width, height, channels: out_c, pixels, tiles: shown.len(), tile_hw: (h, w), grid: (rows, cols) })
}

/// Writes a mosaic as binary PGM/PPM (`.pgm`, `.ppm`, `.pnm`) or PNG.
pub fn export_mosaic(m: &Mosaic, path: &Path) -> Result<()> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "pgm" | "ppm" | "pnm" => {
            let magic = if m.channels == 3 { "P6" } else { "P5" };
            let mut buf = format!("{magic}\n{} {}\n255\n", m.width, m.height).into_bytes();
            buf.extend_from_slice(&m.pixels);
            fs::write(path, buf).map_err(|e| HscError::io(path, e))
        }
        "png" => {
            let color = if m.channels == 3 { image::ExtendedColorType::Rgb8 } else { image::ExtendedColorType::L8 };
            image::save_buffer(path, &m.pixels, m.width as u32, m.height as u32, color)?;
            Ok(())
        }
        _ => Err(HscError::param("path", format!("unsupported mosaic extension `{ext}` (pgm, ppm, png)"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_atom_is_its_normalized_self() {
        let a = Tensor4::from_vec([1, 1, 2, 2], vec![-1.0f64, 0.0, 1.0, 3.0]).unwrap();
        let m = render_mosaic(&a, None, false).unwrap();
        assert_eq!((m.width, m.height, m.tiles), (2, 2, 1));
        assert_eq!(m.pixels, vec![0, 64, 128, 255]);
    }

    #[test]
    fn tile_count_layout_and_exclusion() {
        let a = Tensor4::from_fn([5, 1, 3, 4], |[n, _, y, x]| (n * 7 + y * x) as f32);
        let m = render_mosaic(&a, None, false).unwrap();
        assert_eq!((m.tiles, m.grid, m.tile_hw), (5, (2, 3), (3, 4)));
        assert_eq!((m.width, m.height), (3 * 4 + 2, 2 * 3 + 1));
        let order = [4, 0, 1, 2, 3];
        let e = render_mosaic(&a, Some(&order), true).unwrap();
        assert_eq!(e.tiles, 4);
        assert_eq!(e.grid, (2, 2));
        assert!(render_mosaic(&a, Some(&[0, 1]), false).is_err());
    }

    #[test]
    fn writes_pgm_and_png() {
        let a = Tensor4::from_fn([2, 3, 2, 2], |[n, c, y, x]| (n + c + y + x) as f32);
        let m = render_mosaic(&a, None, false).unwrap();
        assert_eq!(m.channels, 3);
        let dir = tempfile::tempdir().unwrap();
        export_mosaic(&m, &dir.path().join("m.ppm")).unwrap();
        let raw = fs::read(dir.path().join("m.ppm")).unwrap();
        assert!(raw.starts_with(b"P6\n5 2\n255\n"));
        export_mosaic(&m, &dir.path().join("m.png")).unwrap();
        let back = image::open(dir.path().join("m.png")).unwrap().to_rgb8();
        assert_eq!(back.into_raw(), m.pixels);
    }
}
