//! TOML run configuration.
//!
//! ```toml
//! output_dir = "runs/mnist"
//!
//! [network]
//! preset = "mnist"        # mnist | cfd | stl10 | att; other keys override it
//! epochs = 10
//! lambdas = [0.2, 0.3]
//!
//! [dataset]
//! kind = "mnist"
//! dir = "data/mnist"
//! train_limit = 5000
//! test_limit = 1000
//!
//! [preprocess]
//! lcn = true
//! whitening = "spectral"
//! rescale_rms = 1.0       # 0 disables
//!
//! [sweep]
//! lambda1 = "0.15:0.25::0.05"
//! lambda2 = [0.25, 0.3, 0.35]
//! seeds = [0, 1, 2]
//! ```
//!
//! Relative paths are resolved against the directory holding the config
//! file. The echo written next to results is fully resolved: no preset, no
//! shorthand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HscError, Result};
use crate::learner::{init_state, mix_seed, NetworkSpec};
use crate::preprocess::{
    generate_synthetic, load_dataset, load_idx, load_image_dir, load_mnist, preprocess_pair, Dataset, LcnParams,
    PreprocessConfig, Split, SyntheticSpec, WhiteningMethod,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    /// `train-images-idx3-ubyte` and `t10k-images-idx3-ubyte` (optionally `.gz`) in `dir`.
    Mnist {
        dir: PathBuf,
        train_limit: Option<usize>,
        test_limit: Option<usize>,
    },
    /// Two IDX image files.
    Idx {
        train: PathBuf,
        test: PathBuf,
        train_limit: Option<usize>,
        test_limit: Option<usize>,
    },
    /// A folder of raster images, split reproducibly.
    Images {
        dir: PathBuf,
        /// `[height, width]`
        size: [usize; 2],
        channels: usize,
        split_ratio: f64,
        seed: u64,
    },
    /// Two `HSD1` dataset caches.
    Cache { train: PathBuf, test: PathBuf },
    /// Images drawn from randomly initialized dictionaries of the network's architecture.
    Synthetic {
        n_train: usize,
        n_test: usize,
        active: usize,
        #[serde(default = "default_amplitude")]
        amplitude: [f64; 2],
        #[serde(default)]
        noise_std: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        generator_seed: u64,
    },
}

fn default_amplitude() -> [f64; 2] {
    DEFAULT_AMPLITUDE
}

/// Range of the nonzero top-layer amplitudes of generated images.
pub const DEFAULT_AMPLITUDE: [f64; 2] = [1.0, 2.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WhiteningKind {
    None,
    Spectral,
    Zca,
}

fn yes() -> bool {
    true
}

fn spectral() -> WhiteningKind {
    WhiteningKind::Spectral
}

/// LCN and whitening are on unless disabled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSection {
    #[serde(default = "yes")]
    pub lcn: bool,
    #[serde(default)]
    pub lcn_window: Option<usize>,
    #[serde(default)]
    pub lcn_sigma: Option<f64>,
    #[serde(default)]
    pub lcn_epsilon: Option<f64>,
    #[serde(default = "spectral")]
    pub whitening: WhiteningKind,
    #[serde(default)]
    pub cutoff: Option<f64>,
    #[serde(default)]
    pub zca_epsilon: Option<f64>,
    /// Target pixel RMS of the training split; 0 disables rescaling.
    #[serde(default = "unit")]
    pub rescale_rms: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for PreprocessSection {
    fn default() -> Self {
        PreprocessSection {
            lcn: true,
            lcn_window: None,
            lcn_sigma: None,
            lcn_epsilon: None,
            whitening: WhiteningKind::Spectral,
            cutoff: None,
            zca_epsilon: None,
            rescale_rms: 1.0,
        }
    }
}

impl PreprocessSection {
    pub fn to_config(&self) -> PreprocessConfig {
        let d = LcnParams::default();
        PreprocessConfig {
            lcn: self.lcn.then(|| LcnParams {
                window: self.lcn_window.unwrap_or(d.window),
                sigma: self.lcn_sigma,
                epsilon: self.lcn_epsilon.unwrap_or(d.epsilon),
            }),
            whitening: match self.whitening {
                WhiteningKind::None => None,
                WhiteningKind::Spectral => Some(WhiteningMethod::Spectral { cutoff: self.cutoff.unwrap_or(0.8) }),
                WhiteningKind::Zca => Some(WhiteningMethod::Zca { epsilon: self.zca_epsilon.unwrap_or(1e-2) }),
            },
            rescale: (self.rescale_rms != 0.0).then_some(self.rescale_rms),
        }
    }
}

/// A λ axis: an explicit list or a range shorthand string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    List(Vec<f64>),
    Shorthand(String),
}

impl Axis {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            Axis::List(v) if v.is_empty() => Err(HscError::param("sweep axis", "empty list")),
            Axis::List(v) => Ok(v.clone()),
            Axis::Shorthand(s) => parse_axis(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub lambda1: Axis,
    pub lambda2: Axis,
    pub seeds: Vec<u64>,
}

/// The on-disk configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    pub network: toml::Table,
    #[serde(default)]
    pub dataset: Option<DatasetSource>,
    #[serde(default)]
    pub preprocess: PreprocessSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

/// A validated configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub network: NetworkSpec,
    pub dataset: Option<DatasetSource>,
    pub preprocess: PreprocessSection,
    pub sweep: Option<SweepSection>,
}

fn round12(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

fn parse_num(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| HscError::param("range", format!("`{}` is not a number", s.trim())))
}

/// Parses `start:stop::step`, a plain number, or a bracketed comma list of
/// either. Range endpoints are inclusive; values are rounded to 1e-12 and
/// duplicates dropped.
pub fn parse_axis(s: &str) -> Result<Vec<f64>> {
    let t = s.trim();
    let inner = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')).unwrap_or(t);
    let mut out: Vec<f64> = Vec::new();
    for part in inner.split(',') {
        let part = part.trim();
        if part.is_empty() {
            return Err(HscError::param("range", format!("empty entry in `{s}`")));
        }
        let vals = if let Some((range, step)) = part.split_once("::") {
            let (a, b) = range
                .split_once(':')
                .ok_or_else(|| HscError::param("range", format!("`{part}` is not start:stop::step")))?;
            let (a, b, step) = (parse_num(a)?, parse_num(b)?, parse_num(step)?);
            if !(step > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
                return Err(HscError::param("range", format!("`{part}` needs start <= stop and step > 0")));
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            (0..=n).map(|k| round12(a + k as f64 * step)).collect()
        } else {
            vec![round12(parse_num(part)?)]
        };
        for v in vals {
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
    Ok(out)
}

fn preset(name: &str) -> Result<NetworkSpec> {
    match name {
        "mnist" => Ok(NetworkSpec::mnist()),
        "cfd" => Ok(NetworkSpec::cfd()),
        "stl10" => Ok(NetworkSpec::stl10()),
        "att" => Ok(NetworkSpec::att()),
        _ => Err(HscError::Spec(format!("unknown preset `{name}` (mnist, cfd, stl10, att)"))),
    }
}

fn toml_err(e: impl std::fmt::Display) -> HscError {
    HscError::Spec(e.to_string())
}

/// Builds a [`NetworkSpec`] from a `[network]` table: optional `preset`,
/// optional `lambdas` list, and any spec field overriding the preset.
pub fn resolve_network(table: &toml::Table) -> Result<NetworkSpec> {
    let mut user = table.clone();
    let mut base = match user.remove("preset") {
        Some(toml::Value::String(name)) => match toml::Value::try_from(preset(&name)?).map_err(toml_err)? {
            toml::Value::Table(t) => t,
            _ => unreachable!("a struct serializes to a table"),
        },
        Some(other) => return Err(HscError::Spec(format!("network.preset must be a string, got {other}"))),
        None => toml::Table::new(),
    };
    let lambdas = user.remove("lambdas");
    for (k, v) in user {
        base.insert(k, v);
    }
    let mut spec: NetworkSpec = toml::Value::Table(base).try_into().map_err(|e| HscError::Spec(format!("[network] {e}")))?;
    if let Some(l) = lambdas {
        let l: Vec<f64> = l.try_into().map_err(|e| HscError::Spec(format!("network.lambdas: {e}")))?;
        if l.len() != spec.layers.len() {
            return Err(HscError::Spec(format!(
                "network.lambdas has {} entries for {} layers",
                l.len(),
                spec.layers.len()
            )));
        }
        spec = spec.with_lambdas(&l);
    }
    spec.validate()?;
    Ok(spec)
}

fn rebase(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HscError::Spec(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Resolved> {
        let text = std::fs::read_to_string(path).map_err(|e| HscError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_toml(&text)?.resolve(base)
    }

    /// Validates and expands the configuration; relative paths are joined to `base`.
    pub fn resolve(&self, base: &Path) -> Result<Resolved> {
        let network = resolve_network(&self.network)?;
        let dataset = self.dataset.clone().map(|d| match d {
            DatasetSource::Mnist { dir, train_limit, test_limit } => {
                DatasetSource::Mnist { dir: rebase(base, &dir), train_limit, test_limit }
            }
            DatasetSource::Idx { train, test, train_limit, test_limit } => DatasetSource::Idx {
                train: rebase(base, &train),
                test: rebase(base, &test),
                train_limit,
                test_limit,
            },
            DatasetSource::Images { dir, size, channels, split_ratio, seed } => {
                DatasetSource::Images { dir: rebase(base, &dir), size, channels, split_ratio, seed }
            }
            DatasetSource::Cache { train, test } => {
                DatasetSource::Cache { train: rebase(base, &train), test: rebase(base, &test) }
            }
            s @ DatasetSource::Synthetic { .. } => s,
        });
        if let Some(s) = &self.sweep {
            s.lambda1.values()?;
            s.lambda2.values()?;
            if s.seeds.is_empty() {
                return Err(HscError::param("sweep.seeds", "empty list"));
            }
        }
        if self.workers == Some(0) {
            return Err(HscError::param("workers", "must be >= 1"));
        }
        Ok(Resolved {
            output_dir: self.output_dir.as_ref().map(|p| rebase(base, p)),
            workers: self.workers,
            network,
            dataset,
            preprocess: self.preprocess.clone(),
            sweep: self.sweep.clone(),
        })
    }
}

impl Resolved {
    /// Fully explicit TOML reproducing this configuration.
    pub fn echo(&self) -> Result<String> {
        let network = match toml::Value::try_from(&self.network).map_err(toml_err)? {
            toml::Value::Table(t) => t,
            _ => unreachable!("a struct serializes to a table"),
        };
        let sweep = match &self.sweep {
            Some(s) => Some(SweepSection {
                lambda1: Axis::List(s.lambda1.values()?),
                lambda2: Axis::List(s.lambda2.values()?),
                seeds: s.seeds.clone(),
            }),
            None => None,
        };
        let cfg = RunConfig {
            output_dir: self.output_dir.clone(),
            workers: self.workers,
            network,
            dataset: self.dataset.clone(),
            preprocess: self.preprocess.clone(),
            sweep,
        };
        toml::to_string(&cfg).map_err(toml_err)
    }

    /// Loads and preprocesses the train and test sets. Whitening, when data
    /// dependent, is fitted on the training set only.
    pub fn load_data(&self) -> Result<(Dataset<f32>, Dataset<f32>)> {
        let source = self
            .dataset
            .as_ref()
            .ok_or_else(|| HscError::Spec("no [dataset] section in the config".into()))?;
        let (train, test) = load_source(source, &self.network)?;
        let want = self.network.input;
        if train.image_dims() != want {
            return Err(HscError::Spec(format!(
                "dataset images are {:?} but the network input is {:?}",
                train.image_dims(),
                want
            )));
        }
        if train.is_empty() {
            return Err(HscError::EmptyDataset("training split".into()));
        }
        if test.is_empty() {
            return Err(HscError::EmptyDataset("test split".into()));
        }
        preprocess_pair(&train, &test, &self.preprocess.to_config())
    }
}

/// Raw (unpreprocessed) train and test sets of a source.
pub fn load_source(source: &DatasetSource, network: &NetworkSpec) -> Result<(Dataset<f32>, Dataset<f32>)> {
    match source {
        DatasetSource::Mnist { dir, train_limit, test_limit } => load_mnist(dir, (*train_limit, *test_limit)),
        DatasetSource::Idx { train, test, train_limit, test_limit } => {
            let mut tr = load_idx(train)?;
            let mut te = load_idx(test)?;
            tr.split = Split::Train;
            te.split = Split::Test;
            Ok((train_limit.map_or(tr.clone(), |n| tr.take(n)), test_limit.map_or(te.clone(), |n| te.take(n))))
        }
        DatasetSource::Images { dir, size, channels, split_ratio, seed } => {
            load_image_dir(dir, (size[0], size[1]), *channels, *split_ratio, *seed)
        }
        DatasetSource::Cache { train, test } => Ok((load_dataset(train)?, load_dataset(test)?)),
        DatasetSource::Synthetic { n_train, n_test, active, amplitude, noise_std, seed, generator_seed } => {
            let gen = init_state::<f32>(network, *generator_seed)?;
            let spec = |n, s| SyntheticSpec { n_images: n, active: *active, amplitude: *amplitude, noise_std: *noise_std, seed: s };
            let (train, _) = generate_synthetic(&gen.dicts, network.input, &spec(*n_train, *seed))?;
            let (mut test, _) = generate_synthetic(&gen.dicts, network.input, &spec(*n_test, mix_seed(&[*seed, 1])))?;
            test.split = Split::Test;
            Ok((train, test))
        }
    }
}
