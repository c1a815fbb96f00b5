//! Synthetic images drawn from a known hierarchical generative model:
//! a sparse nonnegative top-layer code is decoded down through every
//! dictionary and Gaussian noise is added to the result.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::conv::ConvDictionary;
use crate::error::{HscError, Result};
use crate::real::Real;
use crate::tensor::Tensor4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_images: usize,
    /// Nonzero entries per top-layer code.
    pub active: usize,
    /// Uniform range of the nonzero amplitudes.
    pub amplitude: [f64; 2],
    pub noise_std: f64,
    pub seed: u64,
}

/// Generating codes, `codes[i]` has shape `[n_images, F_i, h_i, w_i]`.
/// Only the top layer is sparse by construction; lower entries are the
/// decoded upper codes.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTruth<T> {
    pub codes: Vec<Tensor4<T>>,
}

/// Draws `spec.n_images` images of dims `input` from `dicts`.
pub fn generate_synthetic<T: Real>(
    dicts: &[ConvDictionary<T>],
    input: [usize; 3],
    spec: &SyntheticSpec,
) -> Result<(Dataset<T>, SyntheticTruth<T>)> {
    if dicts.is_empty() {
        return Err(HscError::Spec("at least one dictionary is required".into()));
    }
    let [lo, hi] = spec.amplitude;
    if !(lo > 0.0 && hi >= lo) {
        return Err(HscError::param("amplitude", format!("need 0 < lo <= hi, got [{lo}, {hi}]")));
    }
    if !(spec.noise_std >= 0.0) {
        return Err(HscError::param("noise_std", "must be >= 0"));
    }
    let mut hw = vec![(input[1], input[2])];
    let mut channels = input[0];
    for (i, d) in dicts.iter().enumerate() {
        if d.in_channels() != channels {
            return Err(HscError::dim(format!("in_channels of layer {}", i + 1), channels, d.in_channels()));
        }
        hw.push(d.code_hw(*hw.last().unwrap())?);
        channels = d.n_features();
    }
    let top = dicts.len() - 1;
    let (th, tw) = hw[top + 1];
    let top_dims = [1, dicts[top].n_features(), th, tw];
    let top_len = top_dims[1] * th * tw;
    if spec.active > top_len {
        return Err(HscError::param(
            "active",
            format!("{} nonzeros requested but the top code has only {top_len} entries", spec.active),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| HscError::param("noise_std", e.to_string()))?;
    let mut per_layer: Vec<Vec<Tensor4<T>>> = vec![Vec::with_capacity(spec.n_images); dicts.len()];
    let mut images = Vec::with_capacity(spec.n_images);
    for _ in 0..spec.n_images {
        let mut code = Tensor4::zeros(top_dims);
        for idx in sample(&mut rng, top_len, spec.active) {
            code.data_mut()[idx] = T::lit(rng.gen_range(lo..=hi));
        }
        for i in (0..=top).rev() {
            per_layer[i].push(code.clone());
            code = dicts[i].decode_to(&code, hw[i])?;
        }
        if spec.noise_std > 0.0 {
            for v in code.data_mut() {
                *v += T::lit(noise.sample(&mut rng));
            }
        }
        images.push(code);
    }
    if images.is_empty() {
        return Err(HscError::EmptyDataset("n_images is 0".into()));
    }
    let codes = per_layer.iter().map(|c| Tensor4::stack(c)).collect::<Result<_>>()?;
    let source = format!(
        "synthetic n={} active={} amp=[{lo},{hi}] noise={} seed={}",
        spec.n_images, spec.active, spec.noise_std, spec.seed
    );
    Ok((Dataset::new(Tensor4::stack(&images)?, Split::Train, source), SyntheticTruth { codes }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(active: usize, noise: f64) -> SyntheticSpec {
        SyntheticSpec { n_images: 4, active, amplitude: [1.0, 2.0], noise_std: noise, seed: 11 }
    }

    fn dicts() -> Vec<ConvDictionary<f64>> {
        let d1 = ConvDictionary::new(Tensor4::from_fn([2, 1, 2, 2], |[f, _, y, x]| (f + y + x) as f64), 1).unwrap();
        let d2 = ConvDictionary::new(Tensor4::from_fn([3, 2, 2, 2], |[f, c, _, x]| (f * c + x) as f64), 2).unwrap();
        vec![d1, d2]
    }

    #[test]
    fn images_are_decoded_top_codes() {
        let d = dicts();
        let (ds, truth) = generate_synthetic(&d, [1, 7, 7], &spec(3, 0.0)).unwrap();
        assert_eq!(ds.images.dims(), [4, 1, 7, 7]);
        assert_eq!(truth.codes[1].dims(), [4, 3, 3, 3]);
        assert_eq!(truth.codes[0].dims(), [4, 2, 6, 6]);
        for b in 0..4 {
            let top = truth.codes[1].slice_batch(b..b + 1);
            assert_eq!(top.data().iter().filter(|v| **v != 0.0).count(), 3);
            assert!(top.data().iter().all(|v| *v == 0.0 || (1.0..=2.0).contains(v)));
            let mid = d[1].decode_to(&top, (6, 6)).unwrap();
            let img = d[0].decode_to(&mid, (7, 7)).unwrap();
            assert_eq!(img, ds.images.slice_batch(b..b + 1));
        }
    }

    #[test]
    fn deterministic_and_rejects_overfull_codes() {
        let d = dicts();
        let a = generate_synthetic(&d, [1, 7, 7], &spec(2, 0.1)).unwrap();
        let b = generate_synthetic(&d, [1, 7, 7], &spec(2, 0.1)).unwrap();
        assert_eq!(a, b);
        assert!(generate_synthetic(&d, [1, 7, 7], &spec(28, 0.0)).is_err());
    }
}
