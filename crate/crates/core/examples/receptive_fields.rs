//! Trains briefly on pen strokes, then writes one mosaic per layer of the
//! back-projected atoms, ranked by activation probability.
//!
//! ```text
//! cargo run --release --example receptive_fields -- OUT_DIR
//! ```

use std::path::PathBuf;

use hsc::analysis::{activation_probability, export_mosaic, render_mosaic};
use hsc::conv::effective_dictionary;
use hsc::learner::{train, NetworkSpec};
use hsc::preprocess::{preprocess_pair, Dataset, PreprocessConfig, Split};
use hsc::Tensor4;

fn strokes(n: usize, salt: usize) -> Tensor4<f32> {
    Tensor4::from_fn([n, 1, 28, 28], |[k, _, y, x]| {
        let k = k + 11 * salt;
        let (a, b) = ((k * 7 + 5) % 16 + 6, (k * 5 + 2) % 16 + 6);
        let on = x.abs_diff(a) <= 1 && (6..=22).contains(&y) || y.abs_diff(b) <= 1 && (6..=22).contains(&x);
        if on { 1.0 } else { 0.0 }
    })
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "rf_out".into()));
    std::fs::create_dir_all(&out)?;
    let mut spec = NetworkSpec::mnist();
    spec.epochs = 2;
    spec.batch_size = 8;
    let (train_set, test_set) = preprocess_pair(
        &Dataset::new(strokes(32, 0), Split::Train, "strokes"),
        &Dataset::new(strokes(16, 1), Split::Test, "strokes"),
        &PreprocessConfig::default(),
    )?;
    let (state, _) = train(&spec, &train_set.images, &test_set.images)?;
    let hist = activation_probability(&state, &test_set.images, &spec.inference_config())?;
    for (i, h) in hist.iter().enumerate() {
        let atoms = effective_dictionary(&state.dicts, i)?;
        let mosaic = render_mosaic(&atoms, Some(&h.order), false)?;
        let path = out.join(format!("layer{}.png", i + 1));
        export_mosaic(&mosaic, &path)?;
        let top: Vec<String> = h.sorted().iter().take(3).map(|(a, p)| format!("#{a} {:.0}%", 100.0 * p)).collect();
        println!("{}: {} tiles of {:?} px, most active {}", path.display(), mosaic.tiles, mosaic.tile_hw, top.join(", "));
    }
    Ok(())
}
