//! Loads a folder of images, applies LCN, whitening and rescaling, and
//! saves both splits as dataset caches.
//!
//! ```text
//! cargo run --release --example preprocess_images -- IMAGE_DIR OUT_DIR [HEIGHT WIDTH]
//! ```

use std::path::PathBuf;

use hsc::preprocess::{dataset_rms, load_image_dir, preprocess_pair, save_dataset, PreprocessConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let usage = "usage: preprocess_images IMAGE_DIR OUT_DIR [HEIGHT WIDTH]";
    let dir = PathBuf::from(args.get(1).ok_or(usage)?);
    let out = PathBuf::from(args.get(2).ok_or(usage)?);
    let h = args.get(3).map_or(Ok(64), |s| s.parse())?;
    let w = args.get(4).map_or(Ok(64), |s| s.parse())?;

    let (train, test) = load_image_dir(&dir, (h, w), 1, 0.8, 0)?;
    for warning in &train.provenance.warnings {
        eprintln!("warning: {warning}");
    }
    let (train, test) = preprocess_pair(&train, &test, &PreprocessConfig::default())?;
    std::fs::create_dir_all(&out)?;
    save_dataset(&train, &out.join("train.hsd"))?;
    save_dataset(&test, &out.join("test.hsd"))?;
    println!(
        "{} train / {} test images of {h}x{w}, pixel RMS {:.3} / {:.3}, fingerprint {}",
        train.len(),
        test.len(),
        dataset_rms(&train),
        dataset_rms(&test),
        &train.provenance.fingerprint()[..16]
    );
    Ok(())
}
