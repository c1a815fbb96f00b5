//! Folders of raster images, resized to a common size and split
//! reproducibly into train and test sets.

use std::fs;
use std::path::Path;

use image::imageops::FilterType;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Split};
use crate::error::{HscError, Result};
use crate::tensor::Tensor4;

const EXTENSIONS: &[&str] = &["png", "pgm", "ppm", "pnm", "jpg", "jpeg", "bmp"];

/// Loads every image in `dir` (non-recursive, alphabetical), resized to
/// `hw` with bilinear interpolation and converted to `channels` (1 or 3).
///
/// `round(split_ratio * N)` images, chosen by a seeded shuffle, form the
/// training set; the rest form the test set. Both keep alphabetical order.
/// Unreadable files are skipped and noted in the provenance warnings.
pub fn load_image_dir(
    dir: &Path,
    hw: (usize, usize),
    channels: usize,
    split_ratio: f64,
    seed: u64,
) -> Result<(Dataset<f32>, Dataset<f32>)> {
    if channels != 1 && channels != 3 {
        return Err(HscError::param("channels", format!("must be 1 or 3, got {channels}")));
    }
    if !(0.0..=1.0).contains(&split_ratio) {
        return Err(HscError::param("split_ratio", format!("must lie in [0, 1], got {split_ratio}")));
    }
    if hw.0 == 0 || hw.1 == 0 {
        return Err(HscError::param("size", "must be positive"));
    }
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| HscError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    paths.sort();

    let (h, w) = hw;
    let mut items = Vec::new();
    let mut warnings = Vec::new();
    for p in &paths {
        let img = match image::open(p) {
            Ok(img) => img.resize_exact(w as u32, h as u32, FilterType::Triangle),
            Err(e) => {
                log::warn!("skipping {}: {e}", p.display());
                warnings.push(format!("skipped {}: {e}", p.display()));
                continue;
            }
        };
        let data: Vec<f32> = if channels == 1 {
            img.to_luma32f().into_raw()
        } else {
            // interleaved RGB to planar
            let rgb = img.to_rgb32f().into_raw();
            (0..3).flat_map(|c| rgb.iter().skip(c).step_by(3).copied().collect::<Vec<_>>()).collect()
        };
        items.push(Tensor4::from_vec([1, channels, h, w], data)?);
    }
    if items.is_empty() {
        return Err(HscError::EmptyDataset(format!("no readable images in {}", dir.display())));
    }

    let n = items.len();
    let n_train = ((split_ratio * n as f64) + 0.5).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train_idx = order[..n_train].to_vec();
    let mut test_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let all = Tensor4::stack(&items)?;
    let source = format!("dir:{} {}x{}x{} seed={seed} ratio={split_ratio}", dir.display(), channels, h, w);
    let mut train = Dataset::new(all.select_batch(&train_idx), Split::Train, source.clone());
    let mut test = Dataset::new(all.select_batch(&test_idx), Split::Test, source);
    if test_idx.is_empty() {
        warnings.push("test split is empty".into());
    }
    train.provenance.warnings = warnings.clone();
    test.provenance.warnings = warnings;
    Ok((train, test))
}
