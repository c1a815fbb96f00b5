//! Hi-La vs SPC on real digits over a small λ grid.
//!
//! ```text
//! cargo run --release --example mnist_directional -- DIR [N_TRAIN N_TEST EPOCHS SEEDS]
//! ```
//!
//! DIR holds `train-images-idx3-ubyte` and `t10k-images-idx3-ubyte`
//! (optionally gzipped). Defaults: 5000 train, 1000 test, 10 epochs, 3 seeds.
//! Images go through LCN and spectral whitening; the network is the MNIST
//! preset. Prints, per grid cell, the median test total of both modes, the
//! relative difference, mean iterations and the first-epoch totals.

use std::path::PathBuf;
use std::time::Instant;

use hsc::analysis::{sweep, SweepOptions};
use hsc::learner::NetworkSpec;
use hsc::preprocess::{load_mnist, preprocess_pair, PreprocessConfig};

fn arg<T: std::str::FromStr>(args: &[String], i: usize, default: T) -> T {
    args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<String> = std::env::args().collect();
    let dir = PathBuf::from(args.get(1).ok_or("usage: mnist_directional DIR [N_TRAIN N_TEST EPOCHS SEEDS]")?);
    let n_train = arg(&args, 2, 5000);
    let n_test = arg(&args, 3, 1000);
    let epochs = arg(&args, 4, 10);
    let n_seeds: u64 = arg(&args, 5, 3);

    let (train, test) = load_mnist(&dir, (Some(n_train), Some(n_test)))?;
    let (train, test) = preprocess_pair(&train, &test, &PreprocessConfig::default())?;
    let mut spec = NetworkSpec::mnist();
    spec.epochs = epochs;
    let lambda1 = [0.15, 0.2, 0.25];
    let lambda2 = [0.25, 0.3, 0.35];
    let seeds: Vec<u64> = (0..n_seeds).collect();
    println!(
        "{} train / {} test images, {epochs} epochs, seeds {seeds:?}",
        train.len(),
        test.len()
    );

    let started = Instant::now();
    let grid = sweep(&spec, &lambda1, &lambda2, &seeds, &train.images, &test.images, &SweepOptions::default())?;
    println!("sweep took {:.0}s\n", started.elapsed().as_secs_f64());

    println!(" λ1    λ2    | Hi-La total  SPC total  rel diff | iters Hi-La  SPC | epoch-1 Hi-La  SPC");
    for c in &grid.cells {
        let med = |s: &Option<hsc::analysis::Stat>| s.as_ref().map_or(f64::NAN, |s| s.median);
        println!(
            " {:.2}  {:.2}  | {:10.4} {:10.4} {:8.2}% | {:10.1} {:5.1} | {:12.4} {:8.4}{}",
            c.lambda1,
            c.lambda2,
            med(&c.hila),
            med(&c.spc),
            100.0 * c.rel_diff.unwrap_or(f64::NAN),
            med(&c.hila_iterations),
            med(&c.spc_iterations),
            med(&c.hila_first_epoch),
            med(&c.spc_first_epoch),
            if c.valid { "" } else { "  (invalid)" }
        );
    }
    Ok(())
}
