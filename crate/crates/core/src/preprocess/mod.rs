//! Dataset ingestion and preprocessing.
//!
//! Images are loaded from IDX files, raster image folders or the synthetic
//! generator, then passed through local contrast normalization and
//! whitening, then rescaled so the training split has a fixed RMS (the
//! sparsity penalties are absolute, so the data scale matters). Every step is recorded in the dataset's provenance; applying
//! a step twice is refused.

mod cache;
mod idx;
mod image_dir;
mod lcn;
mod synthetic;
mod whiten;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HscError, Result};
use crate::real::Real;
use crate::tensor::Tensor4;

pub use cache::{load_dataset, save_dataset, DATASET_MAGIC};
pub use idx::{load_idx, load_idx_labels, load_mnist, parse_idx_images, write_idx_images, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use image_dir::load_image_dir;
pub use lcn::{lcn, lcn_dataset, LcnParams};
pub use synthetic::{generate_synthetic, SyntheticSpec, SyntheticTruth};
pub use whiten::{spectral_filter_gain, whiten, WhiteningMethod, WhiteningOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// A preprocessing step as recorded in provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Step {
    Lcn(LcnParams),
    Whiten(WhiteningMethod),
    /// Multiply every pixel by `factor`; `factor` is fitted on the training split.
    Rescale { factor: f64 },
}

impl Step {
    fn kind(&self) -> &'static str {
        match self {
            Step::Lcn(_) => "lcn",
            Step::Whiten(_) => "whiten",
            Step::Rescale { .. } => "rescale",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub steps: Vec<Step>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Provenance {
    pub fn new(source: impl Into<String>) -> Self {
        Provenance {
            source: source.into(),
            ..Default::default()
        }
    }

    /// Hex SHA-256 of the source descriptor and the applied steps.
    pub fn fingerprint(&self) -> String {
        let payload = serde_json::to_vec(&(&self.source, &self.steps)).expect("provenance serializes");
        hex::encode(Sha256::digest(payload))
    }

    pub fn has_step(&self, kind: &str) -> bool {
        self.steps.iter().any(|s| s.kind() == kind)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T = f32> {
    pub images: Tensor4<T>,
    pub split: Split,
    pub provenance: Provenance,
}

impl<T: Real> Dataset<T> {
    pub fn new(images: Tensor4<T>, split: Split, source: impl Into<String>) -> Self {
        Dataset {
            images,
            split,
            provenance: Provenance::new(source),
        }
    }

    pub fn len(&self) -> usize {
        self.images.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.images.batch() == 0
    }

    /// Image dims `[channels, height, width]`.
    pub fn image_dims(&self) -> [usize; 3] {
        let d = self.images.dims();
        [d[1], d[2], d[3]]
    }

    /// First `n` images (or all, if fewer).
    pub fn take(&self, n: usize) -> Dataset<T> {
        let n = n.min(self.len());
        let mut out = self.clone();
        out.images = self.images.slice_batch(0..n);
        if n < self.len() {
            out.provenance.source = format!("{} [first {n}]", self.provenance.source);
        }
        out
    }

    /// Consecutive mini-batches in dataset order; the last may be short.
    pub fn batches(&self, batch_size: usize) -> impl Iterator<Item = Tensor4<T>> + '_ {
        let n = self.len();
        let bs = batch_size.max(1);
        (0..n.div_ceil(bs)).map(move |b| self.images.slice_batch(b * bs..((b + 1) * bs).min(n)))
    }

    pub fn cast<U: Real>(&self) -> Dataset<U> {
        Dataset {
            images: self.images.cast(),
            split: self.split,
            provenance: self.provenance.clone(),
        }
    }

    fn record(&mut self, step: Step) -> Result<()> {
        if self.provenance.has_step(step.kind()) {
            return Err(HscError::AlreadyApplied(step.kind().into()));
        }
        self.provenance.steps.push(step);
        Ok(())
    }
}

/// Preprocessing parameters applied to a dataset pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    #[serde(default)]
    pub lcn: Option<LcnParams>,
    #[serde(default)]
    pub whitening: Option<WhiteningMethod>,
    /// Target RMS of the training split after the other steps.
    #[serde(default)]
    pub rescale: Option<f64>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            lcn: Some(LcnParams::default()),
            whitening: Some(WhiteningMethod::default()),
            rescale: Some(1.0),
        }
    }
}

/// Pixel RMS of a dataset; 0 when empty.
pub fn dataset_rms<T: Real>(ds: &Dataset<T>) -> f64 {
    match ds.images.len() {
        0 => 0.0,
        n => (ds.images.norm_sq() / n as f64).sqrt(),
    }
}

/// Scales `ds` by a fixed `factor`, recording the step.
pub fn rescale<T: Real>(ds: &Dataset<T>, factor: f64) -> Result<Dataset<T>> {
    if !factor.is_finite() || factor <= 0.0 {
        return Err(HscError::param("rescale factor", format!("must be positive and finite, got {factor}")));
    }
    let mut out = ds.clone();
    out.record(Step::Rescale { factor })?;
    out.images.scale(T::lit(factor));
    Ok(out)
}

/// Factor that brings `train` to pixel RMS `target`. A zero-energy split
/// keeps factor 1.
pub fn fit_rescale<T: Real>(train: &Dataset<T>, target: f64) -> Result<f64> {
    if !target.is_finite() || target <= 0.0 {
        return Err(HscError::param("rescale", format!("target RMS must be positive and finite, got {target}")));
    }
    let rms = dataset_rms(train);
    if !rms.is_finite() {
        return Err(HscError::param("rescale", "training data is not finite"));
    }
    Ok(if rms > 0.0 { target / rms } else { 1.0 })
}

/// LCN, whitening, then rescaling; data-dependent operators are fitted on
/// `train` only and applied unchanged to `test`.
pub fn preprocess_pair<T: Real>(
    train: &Dataset<T>,
    test: &Dataset<T>,
    cfg: &PreprocessConfig,
) -> Result<(Dataset<T>, Dataset<T>)> {
    let (mut train, mut test) = (train.clone(), test.clone());
    if let Some(p) = &cfg.lcn {
        train = lcn_dataset(&train, p)?;
        test = lcn_dataset(&test, p)?;
    }
    if let Some(m) = &cfg.whitening {
        let (tr, op) = whiten(&train, m)?;
        train = tr;
        test = op.apply(&test)?;
    }
    if let Some(target) = cfg.rescale {
        let factor = fit_rescale(&train, target)?;
        train = rescale(&train, factor)?;
        test = rescale(&test, factor)?;
    }
    Ok((train, test))
}
