//! Learns two-layer dictionaries in both modes on data from a known generator.
//!
//! Prints the per-epoch test cost of each mode: total, then the quadratic
//! and sparsity terms of each layer.

use hsc::learner::{init_state, train_from, NetworkSpec, TrainEvent};
use hsc::preprocess::{generate_synthetic, SyntheticSpec};
use hsc::Mode;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut spec = NetworkSpec::mnist();
    spec.input = [1, 16, 16];
    spec.layers[0].n_features = 8;
    spec.layers[0].stride = 1;
    spec.layers[1].in_channels = 8;
    spec.layers[1].n_features = 8;
    spec.layers[1].kernel = [3, 3];
    spec.batch_size = 8;
    spec.epochs = 5;
    let spec = spec.with_lambdas(&[0.05, 0.05]);

    let generator = init_state::<f32>(&spec, 99)?;
    let draw = |n, seed| {
        let s = SyntheticSpec { n_images: n, active: 2, amplitude: [0.5, 1.5], noise_std: 0.01, seed };
        generate_synthetic(&generator.dicts, spec.input, &s).map(|(d, _)| d)
    };
    let (train, test) = (draw(64, 1)?, draw(32, 2)?);

    for mode in Mode::BOTH {
        let spec = NetworkSpec { mode, ..spec.clone() };
        println!("{mode}:");
        let mut show = |e: TrainEvent<'_, f32>| {
            if let TrainEvent::EpochDone { record, .. } = e {
                let layers: Vec<String> = record.layers.iter().map(|l| format!("{:.4} + {:.4}", l.quadratic, l.l1)).collect();
                println!("  epoch {}  total {:.4}  layers [{}]  iterations {:.1}", record.epoch, record.total, layers.join(", "), record.mean_iterations);
            }
        };
        train_from(&spec, init_state(&spec, spec.seed)?, &train.images, &test.images, &mut show)?;
    }
    Ok(())
}
