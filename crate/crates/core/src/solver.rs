//! Proximal inference for stacked sparse coding layers.
//!
//! Both network types share one loop: an accelerated proximal gradient sweep
//! over layers `1..=L`, stopped once every layer's relative change drops
//! below `t_stab`. The predictive-coding mode adds, for every non-top layer,
//! the top-down error `gamma_i - D_{i+1}^T gamma_{i+1}` to the gradient; the
//! Hi-La mode leaves it out. Nothing else differs.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conv::{ConvDictionary, SparseMap};
use crate::error::{HscError, Result};
use crate::real::Real;
use crate::tensor::Tensor4;

/// Which inference dynamics to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    /// Independent Lasso layers (no inter-layer feedback).
    #[serde(rename = "hila", alias = "HiLa")]
    HiLa,
    /// Sparse predictive coding (top-down feedback between layers).
    #[serde(rename = "spc", alias = "SPC")]
    Spc,
}

impl Mode {
    pub const BOTH: [Mode; 2] = [Mode::HiLa, Mode::Spc];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::HiLa => "hila",
            Mode::Spc => "spc",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = HscError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hila" | "hi-la" | "lasso" => Ok(Mode::HiLa),
            "spc" | "2l-spc" | "pc" => Ok(Mode::Spc),
            _ => Err(HscError::param("mode", format!("unknown mode `{s}` (hila|spc)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerHyperParams {
    pub lambda: f64,
    pub eta_c: f64,
}

impl LayerHyperParams {
    pub fn new(lambda: f64, eta_c: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(HscError::param("lambda", format!("must be >= 0, got {lambda}")));
        }
        if !(eta_c > 0.0) || !eta_c.is_finite() {
            return Err(HscError::param("eta_c", format!("must be > 0, got {eta_c}")));
        }
        Ok(LayerHyperParams { lambda, eta_c })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub mode: Mode,
    pub t_stab: f64,
    pub max_iters: usize,
}

impl InferenceConfig {
    pub const DEFAULT_MAX_ITERS: usize = 500;

    pub fn new(mode: Mode, t_stab: f64) -> Self {
        InferenceConfig {
            mode,
            t_stab,
            max_iters: Self::DEFAULT_MAX_ITERS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_stab > 0.0) {
            return Err(HscError::param("t_stab", format!("must be > 0, got {}", self.t_stab)));
        }
        if self.max_iters == 0 {
            return Err(HscError::param("max_iters", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct InferenceResult<T = f32> {
    pub gammas: Vec<SparseMap<T>>,
    pub iterations: usize,
    /// Bottom-up prediction errors `gamma_{i-1} - D_i^T gamma_i`, with `gamma_0 = x`.
    pub residuals: Vec<Tensor4<T>>,
    pub converged: bool,
}

/// Quadratic and sparsity terms of one layer's Lasso cost.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    pub quadratic: f64,
    pub l1: f64,
}

impl LayerCost {
    pub fn total(&self) -> f64 {
        self.quadratic + self.l1
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpcCost {
    pub quadratic: f64,
    pub l1: f64,
    pub topdown: f64,
}

impl SpcCost {
    pub fn total(&self) -> f64 {
        self.quadratic + self.l1 + self.topdown
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0) {
        return Err(HscError::param("alpha", format!("threshold must be >= 0, got {alpha}")));
    }
    Ok(())
}

#[inline]
fn shrink<T: Real>(v: T, alpha: T) -> T {
    let s = v - alpha;
    if s > T::zero() {
        s
    } else {
        T::zero()
    }
}

/// Elementwise `max(v - alpha, 0)`.
pub fn soft_threshold_nonneg<T: Real>(v: &Tensor4<T>, alpha: f64) -> Result<SparseMap<T>> {
    check_alpha(alpha)?;
    let a = T::lit(alpha);
    Ok(SparseMap::from_rectified(v.map(|x| shrink(x, a))))
}

fn soft_threshold_in_place<T: Real>(mut v: Tensor4<T>, alpha: T) -> SparseMap<T> {
    for x in v.data_mut() {
        *x = shrink(*x, alpha);
    }
    SparseMap::from_rectified(v)
}

fn prev_hw<T: Real>(t: &Tensor4<T>) -> (usize, usize) {
    (t.height(), t.width())
}

/// `gamma_prev - D^T gamma`.
pub fn prediction_error<T: Real>(
    d: &ConvDictionary<T>,
    gamma_prev: &Tensor4<T>,
    gamma: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    let recon = d.decode_to(gamma, prev_hw(gamma_prev))?;
    gamma_prev.sub(&recon)
}

/// Gradient of `0.5 * ||gamma_prev - D^T gamma||^2` w.r.t. `gamma`, i.e. `-D (gamma_prev - D^T gamma)`.
pub fn smooth_gradient<T: Real>(
    d: &ConvDictionary<T>,
    gamma_prev: &Tensor4<T>,
    gamma: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    let err = prediction_error(d, gamma_prev, gamma)?;
    let mut g = d.encode(&err)?;
    g.scale(-T::one());
    Ok(g)
}

/// `F = 0.5 * ||gamma_prev - D^T gamma||^2 + lambda * ||gamma||_1`, summed over the batch.
pub fn lasso_cost<T: Real>(
    d: &ConvDictionary<T>,
    gamma_prev: &Tensor4<T>,
    gamma: &Tensor4<T>,
    lambda: f64,
) -> Result<LayerCost> {
    let err = prediction_error(d, gamma_prev, gamma)?;
    Ok(LayerCost {
        quadratic: 0.5 * err.norm_sq(),
        l1: lambda * gamma.l1_norm(),
    })
}

/// Lasso cost plus the top-down term `0.5 * ||gamma - D_next^T gamma_next||^2`.
///
/// `upper` is `None` for the top layer, where the top-down term is zero.
pub fn spc_cost<T: Real>(
    d: &ConvDictionary<T>,
    gamma_prev: &Tensor4<T>,
    gamma: &Tensor4<T>,
    lambda: f64,
    upper: Option<(&ConvDictionary<T>, &Tensor4<T>)>,
) -> Result<SpcCost> {
    let base = lasso_cost(d, gamma_prev, gamma, lambda)?;
    let topdown = match upper {
        Some((d_next, gamma_next)) => 0.5 * prediction_error(d_next, gamma, gamma_next)?.norm_sq(),
        None => 0.0,
    };
    Ok(SpcCost {
        quadratic: base.quadratic,
        l1: base.l1,
        topdown,
    })
}

/// Pre-threshold proximal-gradient point `gamma - eta * (grad F + feedback)`.
fn gradient_point<T: Real>(
    gamma: &Tensor4<T>,
    gamma_prev: &Tensor4<T>,
    d: &ConvDictionary<T>,
    eta: T,
    feedback: Option<&Tensor4<T>>,
) -> Result<Tensor4<T>> {
    let grad = smooth_gradient(d, gamma_prev, gamma)?;
    if grad.dims() != gamma.dims() {
        return Err(HscError::dim("gamma size", grad.len(), gamma.len()));
    }
    let mut v = gamma.clone();
    v.axpy(-eta, &grad)?;
    if let Some(fb) = feedback {
        gamma.check_same_dims(fb, "feedback")?;
        v.axpy(-eta, fb)?;
    }
    Ok(v)
}

/// One proximal step on a layer's state.
///
/// `T_{eta*lambda}(gamma + eta * D (gamma_prev - D^T gamma) - eta * feedback)`;
/// without feedback this is the plain Lasso (ISTA) step.
pub fn layer_update<T: Real>(
    gamma: &Tensor4<T>,
    gamma_prev: &Tensor4<T>,
    d: &ConvDictionary<T>,
    hp: &LayerHyperParams,
    feedback: Option<&Tensor4<T>>,
) -> Result<SparseMap<T>> {
    let eta = T::lit(hp.eta_c);
    let v = gradient_point(gamma, gamma_prev, d, eta, feedback)?;
    if !v.is_finite() {
        return Err(HscError::Numerical {
            layer: 0,
            iteration: 0,
            reason: "non-finite value in layer update".into(),
        });
    }
    Ok(soft_threshold_in_place(v, T::lit(hp.eta_c * hp.lambda)))
}

/// Momentum sequence `(1 + sqrt(1 + 4 a^2)) / 2`.
pub fn fista_alpha_next(alpha: f64) -> Result<f64> {
    if !(alpha >= 1.0) {
        return Err(HscError::param("alpha_t", format!("must be >= 1, got {alpha}")));
    }
    Ok((1.0 + (1.0 + 4.0 * alpha * alpha).sqrt()) / 2.0)
}

/// Extrapolated point `T_0(gamma_t + (alpha_t - 1) / alpha_next * (gamma_t - gamma_prev))`.
pub fn fista_momentum<T: Real>(
    gamma_t: &Tensor4<T>,
    gamma_prev: &Tensor4<T>,
    alpha_t: f64,
    alpha_next: f64,
) -> Result<SparseMap<T>> {
    gamma_t.check_same_dims(gamma_prev, "momentum operand")?;
    let beta = T::lit((alpha_t - 1.0) / alpha_next);
    let mut out = gamma_t.clone();
    for (o, &p) in out.data_mut().iter_mut().zip(gamma_prev.data()) {
        let m = *o + beta * (*o - p);
        *o = if m > T::zero() { m } else { T::zero() };
    }
    Ok(SparseMap::from_rectified(out))
}

/// Relative change `||a - b|| / ||a||` with the zero-norm convention: a zero
/// state is stable (change 0) iff the previous state was zero too.
pub fn relative_change<T: Real>(current: &Tensor4<T>, previous: &Tensor4<T>) -> f64 {
    let mut diff = 0.0;
    let mut norm = 0.0;
    let mut prev_norm = 0.0;
    for (&a, &b) in current.data().iter().zip(previous.data()) {
        let (a, b) = (a.as_f64(), b.as_f64());
        diff += (a - b) * (a - b);
        norm += a * a;
        prev_norm += b * b;
    }
    if norm == 0.0 {
        if prev_norm == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (diff / norm).sqrt()
    }
}

/// True iff every layer's relative change is below `t_stab`.
pub fn stability_reached<T: Real>(
    gammas_t: &[SparseMap<T>],
    gammas_prev: &[SparseMap<T>],
    t_stab: f64,
) -> bool {
    gammas_t.len() == gammas_prev.len()
        && gammas_t
            .iter()
            .zip(gammas_prev)
            .all(|(a, b)| relative_change(a, b) < t_stab)
}

/// A single layer's dictionary plus its hyper-parameters, as seen by inference.
#[derive(Clone, Copy, Debug)]
pub struct LayerView<'a, T> {
    pub dict: &'a ConvDictionary<T>,
    pub hp: LayerHyperParams,
}

/// Spatial dims of every layer's state, `[input, gamma_1, ..., gamma_L]`.
pub fn layer_hw<T: Real>(layers: &[LayerView<'_, T>], input_hw: (usize, usize)) -> Result<Vec<(usize, usize)>> {
    let mut hw = vec![input_hw];
    for l in layers {
        let next = l.dict.code_hw(*hw.last().unwrap())?;
        hw.push(next);
    }
    Ok(hw)
}

/// Runs inference on one image `x` of shape `[1, c, h, w]`.
pub fn infer_layers<T: Real>(
    layers: &[LayerView<'_, T>],
    x: &Tensor4<T>,
    cfg: &InferenceConfig,
) -> Result<InferenceResult<T>> {
    cfg.validate()?;
    if layers.is_empty() {
        return Err(HscError::param("layers", "network has no layers"));
    }
    if x.batch() != 1 {
        return Err(HscError::dim("image batch", 1, x.batch()));
    }
    if x.channels() != layers[0].dict.in_channels() {
        return Err(HscError::dim(
            "image channels",
            layers[0].dict.in_channels(),
            x.channels(),
        ));
    }
    for (i, w) in layers.windows(2).enumerate() {
        if w[1].dict.in_channels() != w[0].dict.n_features() {
            return Err(HscError::dim(
                format!("layer {} input channels", i + 2),
                w[0].dict.n_features(),
                w[1].dict.in_channels(),
            ));
        }
    }
    let hw = layer_hw(layers, (x.height(), x.width()))?;
    let n_layers = layers.len();
    let dims = |i: usize| [1, layers[i].dict.n_features(), hw[i + 1].0, hw[i + 1].1];

    let mut gamma: Vec<SparseMap<T>> = (0..n_layers).map(|i| SparseMap::zeros(dims(i))).collect();
    let mut gamma_old = gamma.clone();
    let mut momentum = gamma.clone();
    let mut alpha = 1.0;
    let mut t = 0;
    let mut converged = false;

    while t < cfg.max_iters {
        t += 1;
        let alpha_next = fista_alpha_next(alpha)?;
        for i in 0..n_layers {
            let lower: &Tensor4<T> = if i == 0 { x } else { &momentum[i - 1] };
            let feedback = match cfg.mode {
                Mode::Spc if i + 1 < n_layers => Some(prediction_error(
                    layers[i + 1].dict,
                    &momentum[i],
                    &momentum[i + 1],
                )?),
                _ => None,
            };
            let eta = T::lit(layers[i].hp.eta_c);
            let v = gradient_point(&momentum[i], lower, layers[i].dict, eta, feedback.as_ref())?;
            if !v.is_finite() {
                return Err(HscError::Numerical {
                    layer: i + 1,
                    iteration: t,
                    reason: "non-finite state (NaN or Inf) after update".into(),
                });
            }
            let updated = soft_threshold_in_place(v, T::lit(layers[i].hp.eta_c * layers[i].hp.lambda));
            momentum[i] = fista_momentum(&updated, &gamma[i], alpha, alpha_next)?;
            gamma_old[i] = std::mem::replace(&mut gamma[i], updated);
        }
        alpha = alpha_next;
        if stability_reached(&gamma, &gamma_old, cfg.t_stab) {
            converged = true;
            break;
        }
    }

    let mut residuals = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let lower: &Tensor4<T> = if i == 0 { x } else { &gamma[i - 1] };
        residuals.push(prediction_error(layers[i].dict, lower, &gamma[i])?);
    }
    Ok(InferenceResult {
        gammas: gamma,
        iterations: t,
        residuals,
        converged,
    })
}

/// Runs [`infer_layers`] independently on every image of a batch, in parallel.
///
/// Results are returned in batch order.
pub fn infer_layers_batch<T: Real>(
    layers: &[LayerView<'_, T>],
    x: &Tensor4<T>,
    cfg: &InferenceConfig,
) -> Result<Vec<InferenceResult<T>>> {
    (0..x.batch())
        .into_par_iter()
        .map(|b| infer_layers(layers, &x.slice_batch(b..b + 1), cfg))
        .collect()
}

/// Runs inference on one image with a network's dictionaries and step sizes.
pub fn infer<T: Real>(
    state: &crate::learner::NetworkState<T>,
    x: &Tensor4<T>,
    cfg: &InferenceConfig,
) -> Result<InferenceResult<T>> {
    state.check_input(x)?;
    state.infer(x, cfg)
}
