//! Dictionary learning by alternating inference and gradient steps.
//!
//! Each mini-batch is first coded with the dictionaries frozen; then every
//! layer takes one SGD-with-momentum step on the quadratic term of its Lasso
//! cost and its atoms are renormalized to unit length. The top-down term of
//! the predictive-coding cost does not involve `D_i`, so the learning rule
//! is the same for both modes; only the codes it sees differ.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conv::{spectral_step_size, ConvDictionary, EigenOptions};
use crate::error::{HscError, Result};
use crate::real::Real;
use crate::solver::{
    infer_layers, infer_layers_batch, InferenceConfig, InferenceResult, LayerCost,
    LayerHyperParams, LayerView, Mode,
};
use crate::tensor::Tensor4;

pub const DEFAULT_MOMENTUM: f64 = 0.9;

fn default_max_iters() -> usize {
    InferenceConfig::DEFAULT_MAX_ITERS
}

fn default_momentum() -> f64 {
    DEFAULT_MOMENTUM
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub n_features: usize,
    pub in_channels: usize,
    /// `[k_h, k_w]`
    pub kernel: [usize; 2],
    pub stride: usize,
    pub lambda: f64,
    pub eta_learn: f64,
}

/// Architecture, inference and training hyper-parameters of a network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    /// Image dims `[channels, height, width]`.
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
    pub t_stab: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub mode: Mode,
    pub seed: u64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
}

impl NetworkSpec {
    #[allow(clippy::too_many_arguments)]
    fn two_layer(
        input: [usize; 3],
        d1: [usize; 5],
        d2: [usize; 5],
        t_stab: f64,
        epochs: usize,
        eta: (f64, f64),
        lambda: (f64, f64),
        batch_size: usize,
    ) -> Self {
        let layer = |d: [usize; 5], lambda, eta_learn| LayerSpec {
            n_features: d[0],
            in_channels: d[1],
            kernel: [d[2], d[3]],
            stride: d[4],
            lambda,
            eta_learn,
        };
        NetworkSpec {
            input,
            layers: vec![layer(d1, lambda.0, eta.0), layer(d2, lambda.1, eta.1)],
            t_stab,
            epochs,
            batch_size,
            mode: Mode::Spc,
            seed: 0,
            max_iters: InferenceConfig::DEFAULT_MAX_ITERS,
            momentum: DEFAULT_MOMENTUM,
        }
    }

    /// MNIST: 32 5x5 atoms stride 2, then 64 5x5 atoms stride 1.
    pub fn mnist() -> Self {
        Self::two_layer([1, 28, 28], [32, 1, 5, 5, 2], [64, 32, 5, 5, 1], 5e-4, 100, (5e-2, 1e-3), (0.2, 0.3), 32)
    }

    /// Chicago Face Database resized to 170x120 (width x height), colour.
    pub fn cfd() -> Self {
        Self::two_layer([3, 120, 170], [64, 3, 9, 9, 3], [128, 64, 9, 9, 1], 5e-3, 250, (1e-4, 5e-3), (0.5, 1.8), 10)
    }

    /// STL-10, 96x96 converted to grayscale.
    pub fn stl10() -> Self {
        Self::two_layer([1, 96, 96], [64, 1, 8, 8, 2], [128, 64, 8, 8, 1], 1e-4, 10, (1e-4, 5e-3), (0.4, 1.6), 32)
    }

    /// AT&T faces, 92x112 (width x height), grayscale.
    pub fn att() -> Self {
        Self::two_layer([1, 112, 92], [64, 1, 9, 9, 3], [128, 64, 9, 9, 1], 5e-4, 1000, (1e-4, 5e-3), (0.5, 1.0), 20)
    }

    pub fn inference_config(&self) -> InferenceConfig {
        InferenceConfig {
            mode: self.mode,
            t_stab: self.t_stab,
            max_iters: self.max_iters,
        }
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.lambda).collect()
    }

    pub fn with_lambdas(mut self, lambdas: &[f64]) -> Self {
        for (l, &v) in self.layers.iter_mut().zip(lambdas) {
            l.lambda = v;
        }
        self
    }

    /// Spatial dims of each layer's input followed by the top code dims.
    pub fn layer_hw(&self) -> Result<Vec<(usize, usize)>> {
        let mut hw = vec![(self.input[1], self.input[2])];
        for (i, l) in self.layers.iter().enumerate() {
            let (h, w) = *hw.last().unwrap();
            if l.kernel[0] > h || l.kernel[1] > w {
                return Err(HscError::Spec(format!(
                    "layer {}: kernel {}x{} larger than its {}x{} input",
                    i + 1,
                    l.kernel[0],
                    l.kernel[1],
                    h,
                    w
                )));
            }
            hw.push(((h - l.kernel[0]) / l.stride + 1, (w - l.kernel[1]) / l.stride + 1));
        }
        Ok(hw)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(HscError::Spec(m));
        if self.layers.is_empty() {
            return fail("network needs at least one layer".into());
        }
        if self.input.contains(&0) {
            return fail(format!("input dims must be positive, got {:?}", self.input));
        }
        let mut channels = self.input[0];
        for (i, l) in self.layers.iter().enumerate() {
            let n = i + 1;
            if l.in_channels != channels {
                return fail(format!(
                    "layer {n}: in_channels {} does not match {} channels from below",
                    l.in_channels, channels
                ));
            }
            if l.n_features == 0 || l.kernel[0] == 0 || l.kernel[1] == 0 {
                return fail(format!("layer {n}: features and kernel dims must be positive"));
            }
            if l.stride == 0 {
                return fail(format!("layer {n}: stride must be positive"));
            }
            if !(l.lambda >= 0.0) || !l.lambda.is_finite() {
                return fail(format!("layer {n}: lambda must be >= 0, got {}", l.lambda));
            }
            if !(l.eta_learn >= 0.0) || !l.eta_learn.is_finite() {
                return fail(format!("layer {n}: eta_learn must be >= 0, got {}", l.eta_learn));
            }
            channels = l.n_features;
        }
        self.layer_hw()?;
        if !(self.t_stab > 0.0) {
            return fail(format!("t_stab must be > 0, got {}", self.t_stab));
        }
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if self.max_iters == 0 {
            return fail("max_iters must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        Ok(())
    }
}

/// Learned dictionaries, their gradient momenta and cached inference steps.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState<T = f32> {
    /// Image dims `[channels, height, width]`.
    pub input: [usize; 3],
    pub dicts: Vec<ConvDictionary<T>>,
    pub momenta: Vec<Tensor4<T>>,
    pub eta_c: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub seed: u64,
    /// Completed training epochs.
    pub epoch: u64,
}

impl<T: Real> NetworkState<T> {
    /// Assembles a state from explicit dictionaries, computing step sizes.
    pub fn from_dicts(input: [usize; 3], dicts: Vec<ConvDictionary<T>>, lambdas: Vec<f64>, seed: u64) -> Result<Self> {
        if dicts.len() != lambdas.len() {
            return Err(HscError::dim("lambda count", dicts.len(), lambdas.len()));
        }
        let momenta = dicts.iter().map(|d| Tensor4::zeros(d.weights().dims())).collect();
        let mut state = NetworkState {
            input,
            eta_c: vec![0.0; dicts.len()],
            dicts,
            momenta,
            lambdas,
            seed,
            epoch: 0,
        };
        state.check_chain()?;
        for i in 0..state.n_layers() {
            state.refresh_step_size(i)?;
        }
        Ok(state)
    }

    pub fn n_layers(&self) -> usize {
        self.dicts.len()
    }

    fn check_chain(&self) -> Result<()> {
        let mut channels = self.input[0];
        let mut hw = (self.input[1], self.input[2]);
        for (i, d) in self.dicts.iter().enumerate() {
            if d.in_channels() != channels {
                return Err(HscError::dim(format!("layer {} in_channels", i + 1), channels, d.in_channels()));
            }
            hw = d.code_hw(hw)?;
            channels = d.n_features();
        }
        Ok(())
    }

    /// Spatial dims of layer `i`'s input (0-based; layer 0 reads the image).
    pub fn layer_input_hw(&self, i: usize) -> Result<(usize, usize)> {
        let mut hw = (self.input[1], self.input[2]);
        for d in &self.dicts[..i] {
            hw = d.code_hw(hw)?;
        }
        Ok(hw)
    }

    /// Recomputes `eta_c` for layer `i` from its current dictionary.
    pub fn refresh_step_size(&mut self, i: usize) -> Result<()> {
        let hw = self.layer_input_hw(i)?;
        if self.dicts[i].weights().max_abs() == 0.0 {
            // any step is exact when the smooth term is constant
            log::warn!("layer {}: dictionary is identically zero, using step size 1", i + 1);
            self.eta_c[i] = 1.0;
            return Ok(());
        }
        self.eta_c[i] = match spectral_step_size(&self.dicts[i], hw, &EigenOptions::default()) {
            Ok(eta) => eta,
            // the top Ritz value never exceeds the maximum, and after the
            // full budget it is within the last residual of it
            Err(HscError::NoConvergence { iterations, rayleigh }) if rayleigh > 0.0 => {
                log::debug!(
                    "layer {}: eigenvalue solver stopped after {iterations} iterations, using last estimate {rayleigh}",
                    i + 1
                );
                1.0 / rayleigh
            }
            Err(e) => return Err(e),
        };
        Ok(())
    }

    pub fn layer_views(&self) -> Result<Vec<LayerView<'_, T>>> {
        self.dicts
            .iter()
            .zip(self.lambdas.iter().zip(&self.eta_c))
            .map(|(dict, (&lambda, &eta_c))| {
                Ok(LayerView {
                    dict,
                    hp: LayerHyperParams::new(lambda, eta_c)?,
                })
            })
            .collect()
    }

    pub fn infer(&self, x: &Tensor4<T>, cfg: &InferenceConfig) -> Result<InferenceResult<T>> {
        infer_layers(&self.layer_views()?, x, cfg)
    }

    pub fn infer_batch(&self, x: &Tensor4<T>, cfg: &InferenceConfig) -> Result<Vec<InferenceResult<T>>> {
        self.check_input(x)?;
        infer_layers_batch(&self.layer_views()?, x, cfg)
    }

    pub fn check_input(&self, x: &Tensor4<T>) -> Result<()> {
        for (axis, name) in [(1, "image channels"), (2, "image height"), (3, "image width")] {
            if x.dims()[axis] != self.input[axis - 1] {
                return Err(HscError::dim(name, self.input[axis - 1], x.dims()[axis]));
            }
        }
        Ok(())
    }
}

/// Gradient of `0.5 * ||gamma_prev - D^T gamma||^2` w.r.t. the weights, averaged over the batch.
pub fn dict_gradient<T: Real>(
    d: &ConvDictionary<T>,
    gamma_prev: &Tensor4<T>,
    gamma: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    let residual = crate::solver::prediction_error(d, gamma_prev, gamma)?;
    let mut g = d.weight_gradient_sum(gamma, &residual)?;
    if gamma.batch() > 1 {
        g.scale(T::lit(1.0 / gamma.batch() as f64));
    }
    Ok(g)
}

/// Deterministic seed derived from several integers.
pub fn mix_seed(parts: &[u64]) -> u64 {
    // splitmix64 folding
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        h ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

/// Rescales every atom to unit l2 norm.
///
/// Atoms with zero norm are redrawn from a standard normal generator keyed
/// by `seed` and the atom index, then normalized.
pub fn normalize_atoms<T: Real>(d: &ConvDictionary<T>, seed: u64) -> ConvDictionary<T> {
    let mut out = d.clone();
    let n = out.n_features();
    let w = out.weights_mut();
    for f in 0..n {
        let atom = w.item_mut(f);
        let mut norm = atom.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, f as u64]));
            for v in atom.iter_mut() {
                let draw: f64 = StandardNormal.sample(&mut rng);
                *v = T::lit(draw);
            }
            norm = atom.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
        }
        for v in atom.iter_mut() {
            *v = T::lit(v.as_f64() / norm);
        }
    }
    out
}

/// Classical momentum update of layer `layer`: `v <- mu v + g`, `W <- W - eta v`,
/// then atom normalization and a step-size refresh.
///
/// A non-finite gradient leaves the state untouched and is reported.
pub fn sgd_momentum_step<T: Real>(
    state: &mut NetworkState<T>,
    layer: usize,
    gradient: &Tensor4<T>,
    eta_learn: f64,
    momentum: f64,
    dead_atom_seed: u64,
) -> Result<()> {
    let dims = state.dicts[layer].weights().dims();
    if gradient.dims() != dims {
        return Err(HscError::dim("gradient size", state.dicts[layer].weights().len(), gradient.len()));
    }
    if !gradient.is_finite() {
        log::warn!("layer {}: non-finite dictionary gradient, update skipped", layer + 1);
        return Err(HscError::Numerical {
            layer: layer + 1,
            iteration: 0,
            reason: "non-finite dictionary gradient; update skipped".into(),
        });
    }
    let v = &mut state.momenta[layer];
    v.scale(T::lit(momentum));
    v.axpy(T::one(), gradient)?;
    let mut d = state.dicts[layer].clone();
    d.weights_mut().axpy(T::lit(-eta_learn), v)?;
    state.dicts[layer] = normalize_atoms(&d, dead_atom_seed);
    state.refresh_step_size(layer)
}

/// Fresh network: standard-normal atoms normalized to unit norm, zero momenta.
pub fn init_state<T: Real>(spec: &NetworkSpec, seed: u64) -> Result<NetworkState<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dicts = Vec::with_capacity(spec.layers.len());
    for (i, l) in spec.layers.iter().enumerate() {
        let dims = [l.n_features, l.in_channels, l.kernel[0], l.kernel[1]];
        let w = Tensor4::from_fn(dims, |_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            T::lit(v)
        });
        let d = ConvDictionary::new(w, l.stride)?;
        dicts.push(normalize_atoms(&d, mix_seed(&[seed, i as u64, u64::MAX])));
    }
    NetworkState::from_dicts(spec.input, dicts, spec.lambdas(), seed)
}

/// Per-image outcome of inference on an evaluation set.
#[derive(Clone, Debug, Default)]
pub struct Evaluation {
    /// `costs[image][layer]`
    pub costs: Vec<Vec<LayerCost>>,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
    /// `active[image][layer][atom]`: atom has a strictly positive coefficient.
    pub active: Vec<Vec<Vec<bool>>>,
}

impl Evaluation {
    pub fn n_images(&self) -> usize {
        self.iterations.len()
    }

    /// Mean per-layer cost over images.
    pub fn mean_layer_costs(&self) -> Vec<LayerCost> {
        let n = self.costs.len().max(1) as f64;
        let layers = self.costs.first().map_or(0, |c| c.len());
        (0..layers)
            .map(|i| LayerCost {
                quadratic: self.costs.iter().map(|c| c[i].quadratic).sum::<f64>() / n,
                l1: self.costs.iter().map(|c| c[i].l1).sum::<f64>() / n,
            })
            .collect()
    }

    pub fn mean_total(&self) -> f64 {
        self.mean_layer_costs().iter().map(|c| c.total()).sum()
    }

    pub fn mean_iterations(&self) -> f64 {
        self.iterations.iter().sum::<usize>() as f64 / self.iterations.len().max(1) as f64
    }

    pub fn unconverged(&self) -> usize {
        self.converged.iter().filter(|c| !**c).count()
    }
}

fn summarize<T: Real>(state: &NetworkState<T>, results: &[InferenceResult<T>], into: &mut Evaluation) {
    for r in results {
        into.costs.push(
            r.gammas
                .iter()
                .zip(&r.residuals)
                .zip(&state.lambdas)
                .map(|((g, e), &lambda)| LayerCost {
                    quadratic: 0.5 * e.norm_sq(),
                    l1: lambda * g.l1_norm(),
                })
                .collect(),
        );
        into.iterations.push(r.iterations);
        into.converged.push(r.converged);
        into.active.push(
            r.gammas
                .iter()
                .map(|g| {
                    (0..g.channels())
                        .map(|f| {
                            let p = g.height() * g.width();
                            g.data()[f * p..(f + 1) * p].iter().any(|v| *v > T::zero())
                        })
                        .collect()
                })
                .collect(),
        );
    }
}

/// Infers every image (no learning) and records per-layer Lasso costs.
pub fn evaluate<T: Real>(state: &NetworkState<T>, images: &Tensor4<T>, cfg: &InferenceConfig) -> Result<Evaluation> {
    if images.batch() == 0 {
        return Err(HscError::EmptyDataset("evaluation set has no images".into()));
    }
    state.check_input(images)?;
    let mut eval = Evaluation::default();
    // bounded chunks keep the retained codes small
    const CHUNK: usize = 256;
    let mut start = 0;
    while start < images.batch() {
        let end = (start + CHUNK).min(images.batch());
        let results = state.infer_batch(&images.slice_batch(start..end), cfg)?;
        summarize(state, &results, &mut eval);
        start = end;
    }
    Ok(eval)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over test images of the summed per-layer Lasso costs.
    pub total: f64,
    pub layers: Vec<LayerCost>,
    pub mean_iterations: f64,
    pub unconverged: usize,
    pub skipped_updates: usize,
    /// Excluded from CSV exports.
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug)]
pub enum TrainEvent<'a, T> {
    BatchDone {
        epoch: usize,
        batch: usize,
        state: &'a NetworkState<T>,
    },
    EpochDone {
        record: &'a EpochRecord,
        state: &'a NetworkState<T>,
    },
}

#[derive(Debug, Error)]
#[error("training aborted: {source}")]
pub struct TrainError<T: Real> {
    #[source]
    pub source: HscError,
    /// Last state whose test evaluation was finite.
    pub snapshot: Box<NetworkState<T>>,
    pub log: TrainLog,
}

fn fail<T: Real>(source: HscError, snapshot: &NetworkState<T>, log: &TrainLog) -> TrainError<T> {
    TrainError {
        source,
        snapshot: Box::new(snapshot.clone()),
        log: log.clone(),
    }
}

/// Trains from `init_state(spec, spec.seed)`.
pub fn train<T: Real>(
    spec: &NetworkSpec,
    train_set: &Tensor4<T>,
    test_set: &Tensor4<T>,
) -> std::result::Result<(NetworkState<T>, TrainLog), TrainError<T>> {
    let state = match init_state(spec, spec.seed) {
        Ok(s) => s,
        Err(e) => {
            return Err(TrainError {
                source: e,
                snapshot: Box::new(NetworkState {
                    input: spec.input,
                    dicts: vec![],
                    momenta: vec![],
                    eta_c: vec![],
                    lambdas: vec![],
                    seed: spec.seed,
                    epoch: 0,
                }),
                log: TrainLog::default(),
            })
        }
    };
    train_from(spec, state, train_set, test_set, &mut |_| {})
}

/// Alternates inference and learning for `spec.epochs` epochs starting from
/// `state`, evaluating the test set after each epoch.
///
/// Training order is reshuffled every epoch from `spec.seed`.
pub fn train_from<T: Real>(
    spec: &NetworkSpec,
    mut state: NetworkState<T>,
    train_set: &Tensor4<T>,
    test_set: &Tensor4<T>,
    observer: &mut dyn FnMut(TrainEvent<'_, T>),
) -> std::result::Result<(NetworkState<T>, TrainLog), TrainError<T>> {
    let mut log = TrainLog::default();
    if let Err(e) = spec.validate() {
        return Err(fail(e, &state, &log));
    }
    if train_set.batch() == 0 {
        return Err(fail(HscError::EmptyDataset("training set".into()), &state, &log));
    }
    if let Err(e) = state.check_input(train_set) {
        return Err(fail(e, &state, &log));
    }
    state.lambdas = spec.lambdas();
    let cfg = spec.inference_config();
    let n_layers = state.n_layers();

    for epoch in 1..=spec.epochs {
        let started = Instant::now();
        let last_good = state.clone();
        let mut order: Vec<usize> = (0..train_set.batch()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[spec.seed, epoch as u64])));
        let mut skipped = 0;

        for (bi, chunk) in order.chunks(spec.batch_size).enumerate() {
            let batch = train_set.select_batch(chunk);
            let results = match state.infer_batch(&batch, &cfg) {
                Ok(r) => r,
                Err(e) => return Err(fail(e, &last_good, &log)),
            };
            let mut grads = Vec::with_capacity(n_layers);
            for i in 0..n_layers {
                let codes: Vec<Tensor4<T>> = results.iter().map(|r| r.gammas[i].values().clone()).collect();
                let residuals: Vec<Tensor4<T>> = results.iter().map(|r| r.residuals[i].clone()).collect();
                let grad = Tensor4::stack(&codes)
                    .and_then(|c| Ok((c, Tensor4::stack(&residuals)?)))
                    .and_then(|(c, r)| state.dicts[i].weight_gradient_sum(&c, &r))
                    .map(|mut g| {
                        g.scale(T::lit(1.0 / chunk.len() as f64));
                        g
                    });
                match grad {
                    Ok(g) => grads.push(g),
                    Err(e) => return Err(fail(e, &last_good, &log)),
                }
            }
            for (i, g) in grads.iter().enumerate() {
                let seed = mix_seed(&[spec.seed, epoch as u64, bi as u64, i as u64]);
                match sgd_momentum_step(&mut state, i, g, spec.layers[i].eta_learn, spec.momentum, seed) {
                    Ok(()) => {}
                    Err(HscError::Numerical { .. }) => skipped += 1,
                    Err(e) => return Err(fail(e, &last_good, &log)),
                }
            }
            observer(TrainEvent::BatchDone {
                epoch,
                batch: bi,
                state: &state,
            });
        }

        state.epoch = epoch as u64;
        let eval = match evaluate(&state, test_set, &cfg) {
            Ok(e) => e,
            Err(e) => return Err(fail(e, &last_good, &log)),
        };
        let layers = eval.mean_layer_costs();
        let total: f64 = layers.iter().map(|c| c.total()).sum();
        if !total.is_finite() {
            return Err(fail(
                HscError::Numerical {
                    layer: 0,
                    iteration: epoch,
                    reason: format!("non-finite test cost after epoch {epoch}"),
                },
                &last_good,
                &log,
            ));
        }
        let record = EpochRecord {
            epoch,
            total,
            layers,
            mean_iterations: eval.mean_iterations(),
            unconverged: eval.unconverged(),
            skipped_updates: skipped,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: test cost {:.6} mean iterations {:.1} ({:.1}s)",
            record.total,
            record.mean_iterations,
            record.wall_seconds
        );
        observer(TrainEvent::EpochDone {
            record: &record,
            state: &state,
        });
        log.epochs.push(record);
    }
    Ok((state, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> NetworkSpec {
        NetworkSpec {
            input: [1, 10, 10],
            layers: vec![
                LayerSpec { n_features: 4, in_channels: 1, kernel: [3, 3], stride: 1, lambda: 0.1, eta_learn: 0.01 },
                LayerSpec { n_features: 6, in_channels: 4, kernel: [3, 3], stride: 1, lambda: 0.1, eta_learn: 0.01 },
            ],
            t_stab: 1e-3,
            epochs: 1,
            batch_size: 4,
            mode: Mode::Spc,
            seed: 3,
            max_iters: 100,
            momentum: 0.9,
        }
    }

    #[test]
    fn presets_validate() {
        for spec in [NetworkSpec::mnist(), NetworkSpec::cfd(), NetworkSpec::stl10(), NetworkSpec::att()] {
            spec.validate().unwrap();
        }
        let m = NetworkSpec::mnist();
        assert_eq!((m.layers[0].n_features, m.layers[0].kernel, m.layers[0].stride), (32, [5, 5], 2));
        assert_eq!((m.layers[1].n_features, m.layers[1].kernel, m.layers[1].stride), (64, [5, 5], 1));
        assert_eq!((m.layers[0].eta_learn, m.layers[1].eta_learn, m.t_stab), (5e-2, 1e-3, 5e-4));
        assert_eq!(m.layer_hw().unwrap(), vec![(28, 28), (12, 12), (8, 8)]);
    }

    #[test]
    fn spec_rejects_broken_channel_chain() {
        let mut s = tiny_spec();
        s.layers[1].in_channels = 5;
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("layer 2"), "{err}");
        let mut s = tiny_spec();
        s.layers[1].kernel = [12, 3];
        assert!(s.validate().is_err());
    }

    #[test]
    fn normalize_examples() {
        let d = ConvDictionary::new(Tensor4::from_vec([1, 1, 1, 2], vec![3.0f64, 4.0]).unwrap(), 1).unwrap();
        let n = normalize_atoms(&d, 0);
        assert!((n.weights().data()[0] - 0.6).abs() < 1e-15);
        assert!((n.weights().data()[1] - 0.8).abs() < 1e-15);
        let again = normalize_atoms(&n, 0);
        for (a, b) in again.weights().data().iter().zip(n.weights().data()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn dead_atom_is_redrawn_deterministically() {
        let d = ConvDictionary::new(Tensor4::<f32>::zeros([2, 1, 3, 3]), 1).unwrap();
        let a = normalize_atoms(&d, 11);
        let b = normalize_atoms(&d, 11);
        let c = normalize_atoms(&d, 12);
        assert_eq!(a, b);
        assert_ne!(a, c);
        for f in 0..2 {
            let n: f64 = a.atom(f).iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
        assert_ne!(a.atom(0), a.atom(1));
    }

    #[test]
    fn init_is_seeded() {
        let s = tiny_spec();
        let a: NetworkState<f32> = init_state(&s, 7).unwrap();
        let b: NetworkState<f32> = init_state(&s, 7).unwrap();
        let c: NetworkState<f32> = init_state(&s, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.dicts[0].atom(0), c.dicts[0].atom(0));
        assert!(a.eta_c.iter().all(|e| *e > 0.0));
    }

    #[test]
    fn zero_gradient_keeps_unit_atoms() {
        let s = tiny_spec();
        let mut st: NetworkState<f64> = init_state(&s, 1).unwrap();
        let before = st.dicts[0].clone();
        let g = Tensor4::zeros(before.weights().dims());
        sgd_momentum_step(&mut st, 0, &g, 0.1, 0.9, 0).unwrap();
        for (a, b) in st.dicts[0].weights().data().iter().zip(before.weights().data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn momentum_accumulates() {
        let s = tiny_spec();
        let mut st: NetworkState<f64> = init_state(&s, 1).unwrap();
        let g = Tensor4::from_fn(st.dicts[0].weights().dims(), |[f, _, y, x]| 0.01 * (f + y + x) as f64);
        sgd_momentum_step(&mut st, 0, &g, 0.0, 0.9, 0).unwrap();
        sgd_momentum_step(&mut st, 0, &g, 0.0, 0.9, 0).unwrap();
        for (v, gv) in st.momenta[0].data().iter().zip(g.data()) {
            assert!((v - 1.9 * gv).abs() < 1e-15);
        }
    }

    #[test]
    fn one_step_from_rest_is_plain_gradient_step() {
        let s = tiny_spec();
        let mut st: NetworkState<f64> = init_state(&s, 1).unwrap();
        let w0 = st.dicts[0].clone();
        let g = Tensor4::from_fn(w0.weights().dims(), |[f, _, y, x]| 0.1 * ((f * 7 + y * 3 + x) % 5) as f64 - 0.2);
        sgd_momentum_step(&mut st, 0, &g, 0.05, 0.9, 0).unwrap();
        let mut manual = w0.clone();
        manual.weights_mut().axpy(-0.05, &g).unwrap();
        let manual = normalize_atoms(&manual, 0);
        for (a, b) in st.dicts[0].weights().data().iter().zip(manual.weights().data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_gradient_skips_update() {
        let s = tiny_spec();
        let mut st: NetworkState<f32> = init_state(&s, 1).unwrap();
        let before = st.clone();
        let mut g = Tensor4::zeros(st.dicts[1].weights().dims());
        g.data_mut()[3] = f32::NAN;
        assert!(matches!(
            sgd_momentum_step(&mut st, 1, &g, 0.1, 0.9, 0),
            Err(HscError::Numerical { layer: 2, .. })
        ));
        assert_eq!(st, before);
    }

    #[test]
    fn gradient_zero_cases() {
        let s = tiny_spec();
        let st: NetworkState<f64> = init_state(&s, 1).unwrap();
        let d = &st.dicts[0];
        let gamma = Tensor4::from_fn([2, 4, 8, 8], |[n, f, y, x]| if (n + f + y + x) % 7 == 0 { 0.5 } else { 0.0 });
        let perfect = d.decode(&gamma).unwrap();
        let g = dict_gradient(d, &perfect, &gamma).unwrap();
        assert!(g.max_abs() < 1e-12);
        let x = Tensor4::from_fn([2, 1, 10, 10], |[_, _, y, x]| (y * x) as f64);
        let g = dict_gradient(d, &x, &Tensor4::zeros([2, 4, 8, 8])).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }
}
