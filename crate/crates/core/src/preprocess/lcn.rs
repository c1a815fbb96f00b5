//! Local contrast normalization: Gaussian-weighted local mean subtraction
//! followed by division by the local standard deviation.
//!
//! Windows are truncated at the image border and their weights renormalized,
//! so a constant image maps to zero everywhere. Channels share one local
//! mean and one local deviation per pixel.

use serde::{Deserialize, Serialize};

use super::{Dataset, Step};
use crate::error::{HscError, Result};
use crate::real::Real;
use crate::tensor::Tensor4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LcnParams {
    /// Odd window side length.
    pub window: usize,
    /// Gaussian width; `window / 4` when absent.
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Floor on the divisive deviation.
    pub epsilon: f64,
}

impl Default for LcnParams {
    fn default() -> Self {
        LcnParams {
            window: 9,
            sigma: None,
            epsilon: 1e-3,
        }
    }
}

impl LcnParams {
    pub fn sigma(&self) -> f64 {
        self.sigma.unwrap_or(self.window as f64 / 4.0)
    }

    fn validate(&self, h: usize, w: usize) -> Result<()> {
        if self.window.is_multiple_of(2) {
            return Err(HscError::param("window", format!("must be odd, got {}", self.window)));
        }
        if self.window > h.min(w) {
            return Err(HscError::param(
                "window",
                format!("{} exceeds the smaller image side {}", self.window, h.min(w)),
            ));
        }
        if !(self.epsilon > 0.0) {
            return Err(HscError::param("epsilon", "must be > 0"));
        }
        if !(self.sigma() > 0.0) {
            return Err(HscError::param("sigma", "must be > 0"));
        }
        Ok(())
    }
}

fn kernel_1d(params: &LcnParams) -> Vec<f64> {
    let r = (params.window / 2) as isize;
    let s2 = 2.0 * params.sigma() * params.sigma();
    (-r..=r).map(|d| (-((d * d) as f64) / s2).exp()).collect()
}

/// Separable Gaussian average of one plane with border renormalization.
fn local_mean(plane: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let (mut acc, mut norm) = (0.0, 0.0);
            for (i, kv) in k.iter().enumerate() {
                let xx = x as isize + i as isize - r;
                if xx >= 0 && (xx as usize) < w {
                    acc += kv * plane[y * w + xx as usize];
                    norm += kv;
                }
            }
            tmp[y * w + x] = acc / norm;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let (mut acc, mut norm) = (0.0, 0.0);
            for (i, kv) in k.iter().enumerate() {
                let yy = y as isize + i as isize - r;
                if yy >= 0 && (yy as usize) < h {
                    acc += kv * tmp[yy as usize * w + x];
                    norm += kv;
                }
            }
            out[y * w + x] = acc / norm;
        }
    }
    out
}

/// Gaussian-weighted local mean of an image `[c, h, w]`, averaged over channels.
pub(crate) fn channel_mean_map(item: &[f64], c: usize, h: usize, w: usize, params: &LcnParams) -> Vec<f64> {
    let k = kernel_1d(params);
    let mut mean = vec![0.0; h * w];
    for ch in 0..c {
        let m = local_mean(&item[ch * h * w..(ch + 1) * h * w], h, w, &k);
        for (a, b) in mean.iter_mut().zip(m) {
            *a += b / c as f64;
        }
    }
    mean
}

fn lcn_item(item: &[f64], c: usize, h: usize, w: usize, params: &LcnParams) -> Vec<f64> {
    let k = kernel_1d(params);
    let mean = channel_mean_map(item, c, h, w, params);
    let mut centered = item.to_vec();
    for ch in 0..c {
        for (v, m) in centered[ch * h * w..(ch + 1) * h * w].iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let mut var = vec![0.0; h * w];
    for ch in 0..c {
        let sq: Vec<f64> = centered[ch * h * w..(ch + 1) * h * w].iter().map(|v| v * v).collect();
        for (a, b) in var.iter_mut().zip(local_mean(&sq, h, w, &k)) {
            *a += b / c as f64;
        }
    }
    for ch in 0..c {
        for (v, s) in centered[ch * h * w..(ch + 1) * h * w].iter_mut().zip(&var) {
            *v /= s.sqrt().max(params.epsilon);
        }
    }
    centered
}

/// Applies LCN to every image of a batch `[n, c, h, w]`.
pub fn lcn<T: Real>(images: &Tensor4<T>, params: &LcnParams) -> Result<Tensor4<T>> {
    let [n, c, h, w] = images.dims();
    params.validate(h, w)?;
    let mut out = Tensor4::zeros(images.dims());
    for b in 0..n {
        let item: Vec<f64> = images.item(b).iter().map(|v| v.as_f64()).collect();
        let res = lcn_item(&item, c, h, w, params);
        for (o, r) in out.item_mut(b).iter_mut().zip(res) {
            *o = T::lit(r);
        }
    }
    Ok(out)
}

/// LCN on a dataset, refusing a second application.
pub fn lcn_dataset<T: Real>(ds: &Dataset<T>, params: &LcnParams) -> Result<Dataset<T>> {
    let mut out = ds.clone();
    out.record(Step::Lcn(*params))?;
    out.images = lcn(&ds.images, params)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_image_maps_to_zero() {
        let img = Tensor4::from_fn([1, 2, 12, 12], |_| 3.5f64);
        let out = lcn(&img, &LcnParams::default()).unwrap();
        assert!(out.max_abs() < 1e-12);
    }

    #[test]
    fn parameter_checks() {
        let img = Tensor4::<f64>::zeros([1, 1, 8, 8]);
        assert!(lcn(&img, &LcnParams { window: 4, ..Default::default() }).is_err());
        assert!(lcn(&img, &LcnParams { window: 9, ..Default::default() }).is_err());
        assert!(lcn(&img, &LcnParams { window: 7, ..Default::default() }).is_ok());
    }

    #[test]
    fn bright_pixel_center_ring_far_field() {
        let mut img = Tensor4::<f64>::zeros([1, 1, 21, 21]);
        img.set([0, 0, 10, 10], 1.0);
        let out = lcn(&img, &LcnParams::default()).unwrap();
        assert!(out.get([0, 0, 10, 10]) > 0.0);
        for (y, x) in [(9, 10), (11, 10), (10, 9), (10, 11), (8, 8), (12, 12)] {
            assert!(out.get([0, 0, y, x]) < 0.0, "ring at ({y},{x})");
        }
        // windows of radius 4 around these pixels never see the bright pixel
        for (y, x) in [(0, 0), (2, 20), (20, 5), (10, 1), (15, 10)] {
            assert_eq!(out.get([0, 0, y, x]), 0.0, "far field at ({y},{x})");
        }
    }

    #[test]
    fn invariant_to_positive_affine_rescale() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = Tensor4::from_fn([1, 1, 16, 16], |_| rng.gen_range(0.0..1.0f64));
        let p = LcnParams::default();
        let a = lcn(&img, &p).unwrap();
        let b = lcn(&img.map(|v| 3.0 * v + 7.0), &p).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-5);
        }
    }

    #[test]
    fn subtractive_stage_removes_affine_trends_in_interior() {
        let img = Tensor4::from_fn([1, 1, 20, 20], |[_, _, y, x]| 0.3 * y as f64 - 0.2 * x as f64 + 1.0);
        let p = LcnParams::default();
        let item: Vec<f64> = img.data().to_vec();
        let mean = channel_mean_map(&item, 1, 20, 20, &p);
        for y in 4..16 {
            for x in 4..16 {
                assert!((item[y * 20 + x] - mean[y * 20 + x]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn refuses_double_application() {
        let ds = Dataset::new(Tensor4::<f32>::zeros([1, 1, 10, 10]), super::super::Split::Train, "z");
        let once = lcn_dataset(&ds, &LcnParams::default()).unwrap();
        assert!(matches!(lcn_dataset(&once, &LcnParams::default()), Err(HscError::AlreadyApplied(_))));
    }
}
