//! Cost decomposition, multi-seed statistics, λ-grid sweeps, activation
//! histograms and receptive-field mosaics.

mod export;
mod mosaic;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::error::{HscError, Result};
use crate::learner::{evaluate, Evaluation, NetworkState};
use crate::real::Real;
use crate::solver::{InferenceConfig, LayerCost, Mode};
use crate::tensor::Tensor4;

pub use export::{fmt_float, grid_csv, learning_curve_csv, runs_csv, to_json, RUNS_CSV_HEADER};
pub use mosaic::{export_mosaic, render_mosaic, Mosaic};
pub use sweep::{sweep, CellSummary, RunOutcome, RunRecord, Stat, SweepGrid, SweepOptions};

/// Per-layer Lasso cost terms of a network on a dataset, averaged over images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub mode: Mode,
    pub seed: u64,
    pub epoch: u64,
    pub lambdas: Vec<f64>,
    pub n_images: usize,
    pub layers: Vec<LayerCost>,
    pub total: f64,
    pub mean_iterations: f64,
    pub unconverged: usize,
}

impl CostReport {
    pub fn from_evaluation<T: Real>(state: &NetworkState<T>, mode: Mode, eval: &Evaluation) -> Self {
        let layers = eval.mean_layer_costs();
        CostReport {
            mode,
            seed: state.seed,
            epoch: state.epoch,
            lambdas: state.lambdas.clone(),
            n_images: eval.n_images(),
            total: layers.iter().map(|c| c.total()).sum(),
            layers,
            mean_iterations: eval.mean_iterations(),
            unconverged: eval.unconverged(),
        }
    }

    pub fn quadratic(&self) -> f64 {
        self.layers.iter().map(|c| c.quadratic).sum()
    }

    pub fn l1(&self) -> f64 {
        self.layers.iter().map(|c| c.l1).sum()
    }
}

/// Runs inference on every image and reports the mean per-layer costs.
pub fn cost_report<T: Real>(state: &NetworkState<T>, images: &Tensor4<T>, cfg: &InferenceConfig) -> Result<CostReport> {
    Ok(CostReport::from_evaluation(state, cfg.mode, &evaluate(state, images, cfg)?))
}

/// Median and median absolute deviation. Even-length medians average the
/// central pair.
pub fn median_mad(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(HscError::param("samples", "median of an empty list"));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(HscError::param("samples", "contains NaN"));
    }
    let med = median(samples.to_vec());
    let dev: Vec<f64> = samples.iter().map(|v| (v - med).abs()).collect();
    Ok((med, median(dev)))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Fraction of images in which each atom of one layer is active.
///
/// An atom is active in an image when at least one of its coefficients is
/// strictly positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationHistogram {
    /// 1-based layer index.
    pub layer: usize,
    pub n_images: usize,
    /// Indexed by atom.
    pub probabilities: Vec<f64>,
    /// Atom indices by descending probability, ties by ascending index.
    pub order: Vec<usize>,
    pub definition: String,
}

impl ActivationHistogram {
    pub fn from_counts(layer: usize, n_images: usize, counts: &[usize]) -> Self {
        let probabilities: Vec<f64> = counts.iter().map(|&c| c as f64 / n_images.max(1) as f64).collect();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        ActivationHistogram {
            layer,
            n_images,
            probabilities,
            order,
            definition: "per-image event: atom has >= 1 strictly positive coefficient".into(),
        }
    }

    /// `(atom, probability)` in descending order.
    pub fn sorted(&self) -> Vec<(usize, f64)> {
        self.order.iter().map(|&a| (a, self.probabilities[a])).collect()
    }
}

/// Per-layer histograms from an evaluation's activity flags.
pub fn activation_from_evaluation(eval: &Evaluation) -> Vec<ActivationHistogram> {
    let n_layers = eval.active.first().map_or(0, |a| a.len());
    (0..n_layers)
        .map(|l| {
            let n_atoms = eval.active[0][l].len();
            let counts: Vec<usize> = (0..n_atoms)
                .map(|a| eval.active.iter().filter(|img| img[l][a]).count())
                .collect();
            ActivationHistogram::from_counts(l + 1, eval.n_images(), &counts)
        })
        .collect()
}

/// Runs inference on `images` and returns one histogram per layer.
pub fn activation_probability<T: Real>(
    state: &NetworkState<T>,
    images: &Tensor4<T>,
    cfg: &InferenceConfig,
) -> Result<Vec<ActivationHistogram>> {
    Ok(activation_from_evaluation(&evaluate(state, images, cfg)?))
}

/// One point of an iteration-count curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub mode: Mode,
    /// Mean iterations over the dataset, one per seed.
    pub per_seed: Vec<f64>,
    pub median: f64,
    pub mad: f64,
    /// Images that hit `max_iters`; they are counted at `max_iters`.
    pub unconverged: usize,
}

/// Mean inference iterations per point and mode, aggregated over seeds.
///
/// Each entry of `points` is `(x, mode, states)` with one trained state per
/// seed; inference runs in `mode`.
pub fn iteration_curve<T: Real>(
    points: &[(f64, Mode, Vec<&NetworkState<T>>)],
    images: &Tensor4<T>,
    t_stab: f64,
    max_iters: usize,
) -> Result<Vec<CurvePoint>> {
    points
        .iter()
        .map(|(x, mode, states)| {
            let cfg = InferenceConfig { mode: *mode, t_stab, max_iters };
            let mut per_seed = Vec::with_capacity(states.len());
            let mut unconverged = 0;
            for s in states {
                let eval = evaluate(*s, images, &cfg)?;
                per_seed.push(eval.mean_iterations());
                unconverged += eval.unconverged();
            }
            let (median, mad) = median_mad(&per_seed)?;
            Ok(CurvePoint { x: *x, mode: *mode, per_seed, median, mad, unconverged })
        })
        .collect()
}
