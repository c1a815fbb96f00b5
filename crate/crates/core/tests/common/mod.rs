#![allow(dead_code)]

use hsc::{ConvDictionary, Tensor4};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor4<f64> {
    Tensor4::from_fn(dims, |_| rng.sample(StandardNormal))
}

/// Nonnegative tensor with roughly `density` of its entries nonzero.
pub fn sparse_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4], density: f64) -> Tensor4<f64> {
    Tensor4::from_fn(dims, |_| if rng.gen::<f64>() < density { rng.gen_range(0.1..2.0) } else { 0.0 })
}

/// Random small layer: `(dictionary, input (c, h, w))`, input at least one kernel.
pub fn random_layer(rng: &mut ChaCha8Rng) -> (ConvDictionary<f64>, (usize, usize, usize)) {
    let f = rng.gen_range(1..=4);
    let c = rng.gen_range(1..=3);
    let kh = rng.gen_range(1..=4);
    let kw = rng.gen_range(1..=4);
    let stride = rng.gen_range(1..=3);
    let h = kh + rng.gen_range(0..=7);
    let w = kw + rng.gen_range(0..=7);
    let d = ConvDictionary::new(normal_tensor(rng, [f, c, kh, kw]), stride).unwrap();
    (d, (c, h, w))
}

pub fn column(t: &Tensor4<f64>) -> DVector<f64> {
    DVector::from_column_slice(t.data())
}

/// `||a - b|| / max(||b||, tiny)`
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(1e-300)
}

pub fn unit_atoms<T: hsc::Real>(d: &ConvDictionary<T>, tol: f64) -> bool {
    (0..d.n_features()).all(|f| {
        let n = d.atom(f).iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
        (n - 1.0).abs() <= tol
    })
}

/// Digit-like images: one to three anti-aliased pen strokes (straight
/// segments, width about 2 px) on a black 28x28 canvas, values in `[0, 1]`.
pub fn stroke_images(n: usize, seed: u64) -> Tensor4<f32> {
    let mut r = rng(seed);
    let (h, w) = (28usize, 28usize);
    let mut out = Tensor4::<f32>::zeros([n, 1, h, w]);
    for k in 0..n {
        let strokes = r.gen_range(1..=3);
        let img = out.item_mut(k);
        for _ in 0..strokes {
            let p0: (f64, f64) = (r.gen_range(5.0..23.0), r.gen_range(5.0..23.0));
            let p1: (f64, f64) = (r.gen_range(5.0..23.0), r.gen_range(5.0..23.0));
            let (dy, dx) = (p1.0 - p0.0, p1.1 - p0.1);
            let len2 = (dy * dy + dx * dx).max(1e-9);
            for y in 0..h {
                for x in 0..w {
                    let (py, px) = (y as f64 - p0.0, x as f64 - p0.1);
                    let t = ((py * dy + px * dx) / len2).clamp(0.0, 1.0);
                    let dist = ((py - t * dy).powi(2) + (px - t * dx).powi(2)).sqrt();
                    let ink = (1.5 - dist).clamp(0.0, 1.0) as f32;
                    let v = &mut img[y * w + x];
                    *v = v.max(ink);
                }
            }
        }
    }
    out
}
