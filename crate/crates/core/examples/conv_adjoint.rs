//! Checks a strided convolutional dictionary against its dense matrix.
//!
//! Builds a random 3-atom, 2-channel, 3x3, stride-2 layer on 9x9 inputs,
//! then compares `encode`/`decode` with the explicit Toeplitz matrix and
//! the spectral step size with a dense eigendecomposition.

use hsc::conv::{spectral_step_size, toeplitz_expand, EigenOptions};
use hsc::{ConvDictionary, Tensor4};
use nalgebra::{DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut normal = |dims| Tensor4::<f64>::from_fn(dims, |_| rng.sample(StandardNormal));
    let d = ConvDictionary::new(normal([3, 2, 3, 3]), 2)?;
    let (c, h, w) = (2, 9, 9);
    let (ho, wo) = d.code_hw((h, w))?;
    let m = toeplitz_expand(&d, (c, h, w))?;
    println!("layer operator: {} code entries x {} signal entries", m.nrows(), m.ncols());

    let s = normal([1, c, h, w]);
    let code = normal([1, 3, ho, wo]);
    let dense_enc = &m * DVector::from_column_slice(s.data());
    let dense_dec = m.transpose() * DVector::from_column_slice(code.data());
    let enc_err = (DVector::from_column_slice(d.encode(&s)?.data()) - &dense_enc).norm() / dense_enc.norm();
    let dec_err = (DVector::from_column_slice(d.decode_to(&code, (h, w))?.data()) - &dense_dec).norm() / dense_dec.norm();
    println!("encode vs D s:     relative error {enc_err:.2e}");
    println!("decode vs D^T c:   relative error {dec_err:.2e}");

    let lhs = d.encode(&s)?.dot(&code)?;
    let rhs = s.dot(&d.decode_to(&code, (h, w))?)?;
    println!("<Ds, c> - <s, D^T c> = {:.2e}", lhs - rhs);

    let dense_max = SymmetricEigen::new(&m * m.transpose()).eigenvalues.max();
    let eta = spectral_step_size(&d, (h, w), &EigenOptions::default())?;
    println!("step size {eta:.6}  (dense 1/lambda_max {:.6})", 1.0 / dense_max);
    Ok(())
}
