//! A 2x2 sweep over the two sparsity penalties with two seeds, on pen-stroke
//! images small enough to finish in seconds. Writes the per-cell summary
//! as CSV to stdout and the relative differences to stderr.

use hsc::analysis::{grid_csv, sweep, SweepOptions};
use hsc::learner::NetworkSpec;
use hsc::preprocess::{fit_rescale, rescale, Dataset, Split};
use hsc::Tensor4;

/// Straight strokes, two per image, 16x16.
fn strokes(n: usize, salt: usize) -> Tensor4<f32> {
    Tensor4::from_fn([n, 1, 16, 16], |[k, _, y, x]| {
        let k = k + 7 * salt;
        let (a, b) = ((k * 5 + 3) % 12 + 2, (k * 3 + 1) % 12 + 2);
        let on = x == a || y == b || x + y == a + b;
        if on { 1.0 } else { 0.0 }
    })
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut spec = NetworkSpec::mnist();
    spec.input = [1, 16, 16];
    spec.layers[0].n_features = 8;
    spec.layers[1].in_channels = 8;
    spec.layers[1].n_features = 12;
    spec.layers[1].kernel = [3, 3];
    spec.batch_size = 8;
    spec.epochs = 2;

    let train = Dataset::new(strokes(24, 0), Split::Train, "strokes");
    let test = Dataset::new(strokes(8, 1), Split::Test, "strokes");
    let k = fit_rescale(&train, 1.0)?;
    let (train, test) = (rescale(&train, k)?, rescale(&test, k)?);

    let grid = sweep(&spec, &[0.1, 0.2], &[0.1, 0.3], &[0, 1], &train.images, &test.images, &SweepOptions::default())?;
    print!("{}", grid_csv(&grid));
    for c in &grid.cells {
        eprintln!("λ = ({}, {}): (Hi-La - SPC) / Hi-La = {:+.1}%", c.lambda1, c.lambda2, 100.0 * c.rel_diff.unwrap_or(f64::NAN));
    }
    Ok(())
}
