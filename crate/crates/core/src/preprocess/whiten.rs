//! Whitening. The default is a fixed frequency-domain filter that flattens
//! the 1/f amplitude spectrum of natural images and rolls off before the
//! Nyquist limit. ZCA is available for small images.

use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{Dataset, Step};
use crate::error::{HscError, Result};
use crate::real::Real;

/// Largest flattened image size accepted by ZCA.
pub const ZCA_MAX_DIM: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum WhiteningMethod {
    /// Gain `|f| exp(-(|f|/f0)^4)` with `f0 = cutoff * 0.5` cycles per pixel.
    Spectral { cutoff: f64 },
    /// `U diag(1/sqrt(s + epsilon)) U^T` from the training covariance.
    Zca { epsilon: f64 },
}

impl Default for WhiteningMethod {
    fn default() -> Self {
        WhiteningMethod::Spectral { cutoff: 0.8 }
    }
}

/// Gain of the spectral filter at radial frequency `r` (cycles per pixel).
pub fn spectral_filter_gain(r: f64, cutoff: f64) -> f64 {
    let f0 = cutoff * 0.5;
    r * (-(r / f0).powi(4)).exp()
}

/// A fitted whitening transform, reusable on held-out data.
#[derive(Clone, Debug, PartialEq)]
pub enum WhiteningOperator {
    Spectral { cutoff: f64 },
    Zca { method: WhiteningMethod, mean: Vec<f64>, transform: DMatrix<f64> },
}

fn signed_freq(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64 / n as f64
    } else {
        (k as f64 - n as f64) / n as f64
    }
}

fn fft2(planner: &mut FftPlanner<f64>, buf: &mut [Complex<f64>], h: usize, w: usize, inverse: bool) {
    let row = if inverse { planner.plan_fft_inverse(w) } else { planner.plan_fft_forward(w) };
    for r in buf.chunks_exact_mut(w) {
        row.process(r);
    }
    let col = if inverse { planner.plan_fft_inverse(h) } else { planner.plan_fft_forward(h) };
    let mut tmp = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            tmp[y] = buf[y * w + x];
        }
        col.process(&mut tmp);
        for y in 0..h {
            buf[y * w + x] = tmp[y];
        }
    }
}

fn spectral_plane(planner: &mut FftPlanner<f64>, plane: &[f64], h: usize, w: usize, cutoff: f64) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = plane.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft2(planner, &mut buf, h, w, false);
    for y in 0..h {
        let fy = signed_freq(y, h);
        for x in 0..w {
            let fx = signed_freq(x, w);
            buf[y * w + x] *= spectral_filter_gain((fy * fy + fx * fx).sqrt(), cutoff);
        }
    }
    fft2(planner, &mut buf, h, w, true);
    let n = (h * w) as f64;
    buf.iter().map(|c| c.re / n).collect()
}

impl WhiteningOperator {
    pub fn method(&self) -> WhiteningMethod {
        match self {
            WhiteningOperator::Spectral { cutoff } => WhiteningMethod::Spectral { cutoff: *cutoff },
            WhiteningOperator::Zca { method, .. } => *method,
        }
    }

    /// Applies the transform, refusing datasets that are already whitened.
    pub fn apply<T: Real>(&self, ds: &Dataset<T>) -> Result<Dataset<T>> {
        let mut out = ds.clone();
        out.record(Step::Whiten(self.method()))?;
        let [n, c, h, w] = ds.images.dims();
        match self {
            WhiteningOperator::Spectral { cutoff } => {
                let mut planner = FftPlanner::new();
                for b in 0..n {
                    let item = ds.images.item(b);
                    let dst = out.images.item_mut(b);
                    for ch in 0..c {
                        let plane: Vec<f64> = item[ch * h * w..(ch + 1) * h * w].iter().map(|v| v.as_f64()).collect();
                        let res = spectral_plane(&mut planner, &plane, h, w, *cutoff);
                        for (o, r) in dst[ch * h * w..(ch + 1) * h * w].iter_mut().zip(res) {
                            *o = T::lit(r);
                        }
                    }
                }
            }
            WhiteningOperator::Zca { mean, transform, .. } => {
                let d = c * h * w;
                if d != mean.len() {
                    return Err(HscError::dim("flattened image", mean.len(), d));
                }
                for b in 0..n {
                    let v = nalgebra::DVector::from_iterator(
                        d,
                        ds.images.item(b).iter().zip(mean).map(|(x, m)| x.as_f64() - m),
                    );
                    let r = transform * v;
                    for (o, r) in out.images.item_mut(b).iter_mut().zip(r.iter()) {
                        *o = T::lit(*r);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Whitens `train` and returns the operator for use on other splits.
pub fn whiten<T: Real>(train: &Dataset<T>, method: &WhiteningMethod) -> Result<(Dataset<T>, WhiteningOperator)> {
    let [n, c, h, w] = train.images.dims();
    if h < 2 || w < 2 {
        return Err(HscError::param("whitening", format!("image of {h}x{w} has no spatial spectrum")));
    }
    let op = match *method {
        WhiteningMethod::Spectral { cutoff } => {
            if !(cutoff > 0.0) {
                return Err(HscError::param("cutoff", "must be > 0"));
            }
            WhiteningOperator::Spectral { cutoff }
        }
        WhiteningMethod::Zca { epsilon } => {
            let d = c * h * w;
            if d > ZCA_MAX_DIM {
                return Err(HscError::TooLarge { required: d, limit: ZCA_MAX_DIM });
            }
            if n == 0 {
                return Err(HscError::EmptyDataset("ZCA needs training images".into()));
            }
            if !(epsilon > 0.0) {
                return Err(HscError::param("epsilon", "must be > 0"));
            }
            let x = DMatrix::from_fn(n, d, |i, j| train.images.item(i)[j].as_f64());
            let mean: Vec<f64> = (0..d).map(|j| x.column(j).mean()).collect();
            let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
            let cov = centered.transpose() * &centered / n as f64;
            let eig = SymmetricEigen::new(cov);
            let scale = DMatrix::from_diagonal(&eig.eigenvalues.map(|s| 1.0 / (s.max(0.0) + epsilon).sqrt()));
            let transform = &eig.eigenvectors * scale * eig.eigenvectors.transpose();
            WhiteningOperator::Zca { method: *method, mean, transform }
        }
    };
    Ok((op.apply(train)?, op))
}

#[cfg(test)]
mod tests {
    use super::super::Split;
    use super::*;
    use crate::tensor::Tensor4;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn gain_is_zero_at_dc_and_peaks_before_cutoff() {
        assert_eq!(spectral_filter_gain(0.0, 0.8), 0.0);
        let peak = (0..500).map(|i| i as f64 / 1000.0).fold((0.0, 0.0), |best, r| {
            let g = spectral_filter_gain(r, 0.8);
            if g > best.1 { (r, g) } else { best }
        });
        // d/dr [r exp(-(r/f0)^4)] = 0 at r = f0 / 4^(1/4)
        assert!((peak.0 - 0.4 / 4f64.powf(0.25)).abs() < 2e-3);
    }

    #[test]
    fn constant_image_whitens_to_zero() {
        let ds = Dataset::new(Tensor4::from_fn([2, 1, 8, 6], |_| 0.7f64), Split::Train, "c");
        let (out, _) = whiten(&ds, &WhiteningMethod::default()).unwrap();
        assert!(out.images.max_abs() < 1e-12);
    }

    #[test]
    fn sinusoid_is_scaled_by_gain() {
        let (h, w) = (16, 16);
        let img = Tensor4::from_fn([1, 1, h, w], |[_, _, _, x]| (2.0 * std::f64::consts::PI * 3.0 * x as f64 / w as f64).cos());
        let ds = Dataset::new(img.clone(), Split::Train, "s");
        let (out, _) = whiten(&ds, &WhiteningMethod::default()).unwrap();
        let g = spectral_filter_gain(3.0 / 16.0, 0.8);
        for (a, b) in out.images.data().iter().zip(img.data()) {
            assert!((a - g * b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_single_pixel_and_double_application() {
        let tiny = Dataset::new(Tensor4::<f64>::zeros([1, 1, 1, 1]), Split::Train, "t");
        assert!(whiten(&tiny, &WhiteningMethod::default()).is_err());
        let ds = Dataset::new(Tensor4::<f64>::zeros([1, 1, 4, 4]), Split::Train, "z");
        let (once, op) = whiten(&ds, &WhiteningMethod::default()).unwrap();
        assert!(matches!(op.apply(&once), Err(HscError::AlreadyApplied(_))));
    }

    #[test]
    fn zca_decorrelates_training_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 400;
        let base = Tensor4::from_fn([n, 1, 2, 2], |_| StandardNormal.sample(&mut rng));
        // correlate pixels: p1 += p0
        let mut imgs: Tensor4<f64> = base.clone();
        for b in 0..n {
            let it = imgs.item_mut(b);
            it[1] += 2.0 * it[0];
            it[3] = 0.5 * it[3] + it[2];
        }
        let ds = Dataset::new(imgs, Split::Train, "g");
        let (out, _) = whiten(&ds, &WhiteningMethod::Zca { epsilon: 1e-9 }).unwrap();
        let x = DMatrix::from_fn(n, 4, |i, j| out.images.item(i)[j]);
        let cov = x.transpose() * &x / n as f64;
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((cov[(i, j)] - want).abs() < 1e-6, "cov[{i},{j}]={}", cov[(i, j)]);
            }
        }
    }

    #[test]
    fn step_serializes_with_method_tag() {
        let s = Step::Whiten(WhiteningMethod::default());
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<Step>(&json).unwrap(), s);
    }
}
