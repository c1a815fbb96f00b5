//! Convolutional dictionary algebra.
//!
//! A dictionary holds `n_features` atoms of shape `[in_channels, k_h, k_w]`
//! applied with a stride and no padding ("valid" convolution), so the layer
//! operator is exactly a Toeplitz matrix `D` with one row per code entry:
//!
//! ```text
//! encode(s) = D s        (strided correlation, signal -> code space)
//! decode(c) = D^T c      (strided transposed convolution, code -> signal)
//! ```
//!
//! Both directions are computed per batch item as an im2col gather followed
//! by a single GEMM.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{HscError, Result};
use crate::real::Real;
use crate::tensor::Tensor4;

/// Entry budget for [`toeplitz_expand`].
pub const TOEPLITZ_MAX_ENTRIES: usize = 10_000_000;

/// Settings of the largest-eigenvalue solver used by [`spectral_step_size`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Budget of operator applications.
    pub max_iters: usize,
    /// Lanczos basis size per restart.
    pub krylov_dim: usize,
    /// Stop when the Ritz residual is at most `rel_tol` times the Ritz value.
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            max_iters: 500,
            krylov_dim: 30,
            rel_tol: 1e-6,
            seed: 0x5eed_c0de,
        }
    }
}

/// One layer's decoding weights `[n_features, in_channels, k_h, k_w]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvDictionary<T = f32> {
    weights: Tensor4<T>,
    stride: usize,
}

/// Nonnegative sparse code `[batch, n_features, h_out, w_out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMap<T = f32>(Tensor4<T>);

impl<T: Real> SparseMap<T> {
    pub fn zeros(dims: [usize; 4]) -> Self {
        SparseMap(Tensor4::zeros(dims))
    }

    /// Wraps a tensor, rejecting negative or non-finite entries.
    pub fn new(values: Tensor4<T>) -> Result<Self> {
        if let Some(v) = values.data().iter().find(|v| !(**v >= T::zero())) {
            return Err(HscError::param(
                "sparse map",
                format!("entries must be finite and nonnegative, found {v}"),
            ));
        }
        Ok(SparseMap(values))
    }

    /// Caller guarantees nonnegativity (output of a rectifier).
    pub(crate) fn from_rectified(values: Tensor4<T>) -> Self {
        debug_assert!(values.data().iter().all(|v| *v >= T::zero()));
        SparseMap(values)
    }

    pub fn values(&self) -> &Tensor4<T> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor4<T> {
        self.0
    }
}

impl<T> std::ops::Deref for SparseMap<T> {
    type Target = Tensor4<T>;

    fn deref(&self) -> &Tensor4<T> {
        &self.0
    }
}

impl<T: Real> ConvDictionary<T> {
    pub fn new(weights: Tensor4<T>, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(HscError::param("stride", "must be positive"));
        }
        if weights.is_empty() {
            return Err(HscError::param("weights", "dictionary has no entries"));
        }
        Ok(ConvDictionary { weights, stride })
    }

    pub fn weights(&self) -> &Tensor4<T> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Tensor4<T> {
        &mut self.weights
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn n_features(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.dims()[1]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weights.dims()[2], self.weights.dims()[3])
    }

    fn atom_len(&self) -> usize {
        self.weights.item_len()
    }

    pub fn atom(&self, f: usize) -> &[T] {
        self.weights.item(f)
    }

    pub fn cast<U: Real>(&self) -> ConvDictionary<U> {
        ConvDictionary {
            weights: self.weights.cast(),
            stride: self.stride,
        }
    }

    /// Code spatial dims produced by a valid strided correlation over `input_hw`.
    pub fn code_hw(&self, input_hw: (usize, usize)) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel();
        if kh > input_hw.0 {
            return Err(HscError::dim("kernel height vs input height", input_hw.0, kh));
        }
        if kw > input_hw.1 {
            return Err(HscError::dim("kernel width vs input width", input_hw.1, kw));
        }
        Ok((
            (input_hw.0 - kh) / self.stride + 1,
            (input_hw.1 - kw) / self.stride + 1,
        ))
    }

    /// Smallest signal that a code map of `code_hw` fully covers.
    pub fn min_signal_hw(&self, code_hw: (usize, usize)) -> (usize, usize) {
        let (kh, kw) = self.kernel();
        (
            (code_hw.0.max(1) - 1) * self.stride + kh,
            (code_hw.1.max(1) - 1) * self.stride + kw,
        )
    }

    fn im2col(&self, item: &[T], in_hw: (usize, usize), code_hw: (usize, usize), col: &mut [T]) {
        let (kh, kw) = self.kernel();
        let (h, w) = in_hw;
        let (ho, wo) = code_hw;
        let p = ho * wo;
        let s = self.stride;
        for c in 0..self.in_channels() {
            for ky in 0..kh {
                for kx in 0..kw {
                    let row = ((c * kh + ky) * kw + kx) * p;
                    for y in 0..ho {
                        let src = (c * h + y * s + ky) * w + kx;
                        let dst = row + y * wo;
                        for x in 0..wo {
                            col[dst + x] = item[src + x * s];
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[T], out_hw: (usize, usize), code_hw: (usize, usize), item: &mut [T]) {
        let (kh, kw) = self.kernel();
        let (h, w) = out_hw;
        let (ho, wo) = code_hw;
        let p = ho * wo;
        let s = self.stride;
        for c in 0..self.in_channels() {
            for ky in 0..kh {
                for kx in 0..kw {
                    let row = ((c * kh + ky) * kw + kx) * p;
                    for y in 0..ho {
                        let dst = (c * h + y * s + ky) * w + kx;
                        let src = row + y * wo;
                        for x in 0..wo {
                            item[dst + x * s] += col[src + x];
                        }
                    }
                }
            }
        }
    }

    /// `D s`: strided correlation of every atom with the signal.
    ///
    /// The result lives in code space but is not a sparse map (it may be
    /// negative).
    pub fn encode(&self, signal: &Tensor4<T>) -> Result<Tensor4<T>> {
        if signal.channels() != self.in_channels() {
            return Err(HscError::dim(
                "signal channels",
                self.in_channels(),
                signal.channels(),
            ));
        }
        let in_hw = (signal.height(), signal.width());
        let code_hw = self.code_hw(in_hw)?;
        let f = self.n_features();
        let k = self.atom_len();
        let p = code_hw.0 * code_hw.1;
        let mut out = Tensor4::zeros([signal.batch(), f, code_hw.0, code_hw.1]);
        let mut col = vec![T::zero(); k * p];
        for b in 0..signal.batch() {
            self.im2col(signal.item(b), in_hw, code_hw, &mut col);
            T::gemm(
                f,
                k,
                p,
                T::one(),
                self.weights.data(),
                (k as isize, 1),
                &col,
                (p as isize, 1),
                T::zero(),
                out.item_mut(b),
                (p as isize, 1),
            );
        }
        Ok(out)
    }

    /// `D^T c` into the smallest signal the code covers.
    pub fn decode(&self, code: &Tensor4<T>) -> Result<Tensor4<T>> {
        let hw = self.min_signal_hw((code.height(), code.width()));
        self.decode_to(code, hw)
    }

    /// `D^T c` into a signal of spatial size `out_hw`.
    ///
    /// `out_hw` must map back onto the code dims under [`Self::code_hw`];
    /// trailing rows/columns not reached by any stride position stay zero.
    pub fn decode_to(&self, code: &Tensor4<T>, out_hw: (usize, usize)) -> Result<Tensor4<T>> {
        if code.channels() != self.n_features() {
            return Err(HscError::dim(
                "code features",
                self.n_features(),
                code.channels(),
            ));
        }
        let code_hw = self.code_hw(out_hw)?;
        if code_hw.0 != code.height() {
            return Err(HscError::dim("code height", code_hw.0, code.height()));
        }
        if code_hw.1 != code.width() {
            return Err(HscError::dim("code width", code_hw.1, code.width()));
        }
        let f = self.n_features();
        let k = self.atom_len();
        let p = code_hw.0 * code_hw.1;
        let mut out = Tensor4::zeros([code.batch(), self.in_channels(), out_hw.0, out_hw.1]);
        let mut col = vec![T::zero(); k * p];
        for b in 0..code.batch() {
            T::gemm(
                k,
                f,
                p,
                T::one(),
                self.weights.data(),
                (1, k as isize),
                code.item(b),
                (p as isize, 1),
                T::zero(),
                &mut col,
                (p as isize, 1),
            );
            self.col2im(&col, out_hw, code_hw, out.item_mut(b));
        }
        Ok(out)
    }

    /// Gradient of `0.5 * ||target - D^T code||^2` with respect to the
    /// weights, given the residual `target - D^T code`, summed over the batch.
    pub(crate) fn weight_gradient_sum(
        &self,
        code: &Tensor4<T>,
        residual: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        if code.batch() != residual.batch() {
            return Err(HscError::dim("batch", code.batch(), residual.batch()));
        }
        if residual.channels() != self.in_channels() {
            return Err(HscError::dim(
                "residual channels",
                self.in_channels(),
                residual.channels(),
            ));
        }
        let in_hw = (residual.height(), residual.width());
        let code_hw = self.code_hw(in_hw)?;
        if (code.height(), code.width()) != code_hw || code.channels() != self.n_features() {
            return Err(HscError::dim(
                "code size",
                self.n_features() * code_hw.0 * code_hw.1,
                code.item_len(),
            ));
        }
        let f = self.n_features();
        let k = self.atom_len();
        let p = code_hw.0 * code_hw.1;
        let mut grad = Tensor4::zeros(self.weights.dims());
        let mut col = vec![T::zero(); k * p];
        for b in 0..code.batch() {
            self.im2col(residual.item(b), in_hw, code_hw, &mut col);
            T::gemm(
                f,
                p,
                k,
                -T::one(),
                code.item(b),
                (p as isize, 1),
                &col,
                (1, p as isize),
                T::one(),
                grad.data_mut(),
                (k as isize, 1),
            );
        }
        Ok(grad)
    }
}

/// Materializes the layer operator as a dense `(code entries) x (signal entries)` matrix.
///
/// `decode(c) == D^T vec(c)` and `encode(s) == D vec(s)`. Built by direct
/// enumeration of kernel placements, independently of the im2col path.
pub fn toeplitz_expand<T: Real>(
    d: &ConvDictionary<T>,
    input_dims: (usize, usize, usize),
) -> Result<DMatrix<f64>> {
    let (c_in, h, w) = input_dims;
    if c_in != d.in_channels() {
        return Err(HscError::dim("input channels", d.in_channels(), c_in));
    }
    let (ho, wo) = d.code_hw((h, w))?;
    let (kh, kw) = d.kernel();
    let rows = d.n_features() * ho * wo;
    let cols = c_in * h * w;
    let required = rows.saturating_mul(cols);
    if required > TOEPLITZ_MAX_ENTRIES {
        return Err(HscError::TooLarge {
            required,
            limit: TOEPLITZ_MAX_ENTRIES,
        });
    }
    let s = d.stride();
    let mut m = DMatrix::<f64>::zeros(rows, cols);
    for f in 0..d.n_features() {
        for y in 0..ho {
            for x in 0..wo {
                let r = (f * ho + y) * wo + x;
                for c in 0..c_in {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let col = (c * h + y * s + ky) * w + x * s + kx;
                            m[(r, col)] = d.weights().get([f, c, ky, kx]).as_f64();
                        }
                    }
                }
            }
        }
    }
    Ok(m)
}

fn fnv1a(words: impl Iterator<Item = u64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for word in words {
        for byte in word.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Largest eigenvalue of `D D^T` (equivalently `D^T D`) by explicitly
/// restarted Lanczos on `c -> encode(decode(c))`, carried out in `f64`.
///
/// Each cycle builds a fully reorthogonalized Krylov basis from the current
/// vector and restarts from the top Ritz vector. The stopping test bounds
/// `||A y - theta y||` for the unit Ritz vector `y`, so unlike a test on
/// the change of a Rayleigh quotient it cannot stall on a small spectral gap.
///
/// Each atom's block of the start vector is drawn from a generator keyed by
/// the run seed and the atom's own weights, so the result does not depend on
/// the order of atoms in the dictionary.
pub fn max_eigenvalue<T: Real>(
    d: &ConvDictionary<T>,
    input_hw: (usize, usize),
    opts: &EigenOptions,
) -> Result<f64> {
    let d64: ConvDictionary<f64> = d.cast();
    let (ho, wo) = d64.code_hw(input_hw)?;
    let p = ho * wo;
    let f = d64.n_features();
    let dims = [1, f, ho, wo];
    let mut v = Tensor4::<f64>::zeros(dims);
    for atom in 0..f {
        let key = fnv1a(d64.atom(atom).iter().map(|x| x.to_bits()));
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ key);
        for e in &mut v.data_mut()[atom * p..(atom + 1) * p] {
            *e = StandardNormal.sample(&mut rng);
        }
    }
    let n0 = v.norm();
    if n0 == 0.0 {
        return Err(HscError::param("start vector", "degenerate"));
    }
    v.scale(1.0 / n0);
    let degenerate = || HscError::param("dictionary", "operator is zero or non-finite; spectral step undefined");

    let n = v.len();
    let mut applied = 0;
    loop {
        let m = opts.krylov_dim.max(1).min(n).min(opts.max_iters.saturating_sub(applied)).max(1);
        let mut basis: Vec<Tensor4<f64>> = vec![v];
        let (mut alpha, mut beta) = (Vec::with_capacity(m), Vec::with_capacity(m));
        for j in 0..m {
            let mut w = d64.encode(&d64.decode_to(&basis[j], input_hw)?)?;
            applied += 1;
            let a = basis[j].dot(&w)?;
            // two Gram-Schmidt passes against the whole basis
            for _ in 0..2 {
                for q in &basis {
                    let c = q.dot(&w)?;
                    w.axpy(-c, q)?;
                }
            }
            let b = w.norm();
            if !a.is_finite() || !b.is_finite() {
                return Err(degenerate());
            }
            alpha.push(a);
            beta.push(b);
            if b <= 1e-13 * a.abs().max(f64::MIN_POSITIVE) {
                break; // invariant subspace: Ritz values are exact
            }
            if j + 1 < m {
                w.scale(1.0 / b);
                basis.push(w);
            }
        }
        let k = alpha.len();
        let tri = DMatrix::<f64>::from_fn(k, k, |r, c| match r.abs_diff(c) {
            0 => alpha[r],
            1 => beta[r.min(c)],
            _ => 0.0,
        });
        let eig = SymmetricEigen::new(tri);
        let top = eig.eigenvalues.imax();
        let theta = eig.eigenvalues[top];
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(degenerate());
        }
        let s = eig.eigenvectors.column(top);
        let residual = beta[k - 1] * s[k - 1].abs();
        if residual <= opts.rel_tol * theta {
            return Ok(theta);
        }
        if applied >= opts.max_iters {
            return Err(HscError::NoConvergence { iterations: applied, rayleigh: theta });
        }
        let mut y = Tensor4::<f64>::zeros(dims);
        for (q, &c) in basis.iter().zip(s.iter()) {
            y.axpy(c, q)?;
        }
        let ny = y.norm();
        y.scale(1.0 / ny);
        v = y;
    }
}

/// Inference step size `1 / lambda_max(D^T D)` for a layer fed `input_hw` inputs.
pub fn spectral_step_size<T: Real>(
    d: &ConvDictionary<T>,
    input_hw: (usize, usize),
    opts: &EigenOptions,
) -> Result<f64> {
    Ok(1.0 / max_eigenvalue(d, input_hw, opts)?)
}

/// Back-projects the atoms of layer `layer` (0-based) into input space by
/// cascading `decode` through all lower layers.
///
/// Returns `[n_features(layer), image channels, rf_h, rf_w]`.
pub fn effective_dictionary<T: Real>(dicts: &[ConvDictionary<T>], layer: usize) -> Result<Tensor4<T>> {
    if layer >= dicts.len() {
        return Err(HscError::param(
            "layer",
            format!("index {layer} out of range for {} layers", dicts.len()),
        ));
    }
    let mut t = dicts[layer].weights().clone();
    for j in (0..layer).rev() {
        if t.channels() != dicts[j].n_features() {
            return Err(HscError::dim(
                format!("channels at layer boundary {j}/{}", j + 1),
                dicts[j].n_features(),
                t.channels(),
            ));
        }
        t = dicts[j].decode(&t)?;
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn identity_1x1(scale: f64) -> ConvDictionary<f64> {
        ConvDictionary::new(Tensor4::from_vec([1, 1, 1, 1], vec![scale]).unwrap(), 1).unwrap()
    }

    fn random_dict(rng: &mut ChaCha8Rng, dims: [usize; 4], stride: usize) -> ConvDictionary<f64> {
        ConvDictionary::new(
            Tensor4::from_fn(dims, |_| rng.gen_range(-1.0..1.0)),
            stride,
        )
        .unwrap()
    }

    #[test]
    fn decode_identity_kernel() {
        let d = identity_1x1(1.0);
        let code = Tensor4::from_vec([1, 1, 1, 1], vec![2.0]).unwrap();
        assert_eq!(d.decode(&code).unwrap().data(), &[2.0]);
        assert_eq!(d.encode(&Tensor4::from_vec([1, 1, 1, 1], vec![3.0]).unwrap()).unwrap().data(), &[3.0]);
    }

    #[test]
    fn zeros_map_to_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_dict(&mut rng, [3, 2, 3, 3], 2);
        let out = d.decode(&Tensor4::zeros([2, 3, 3, 3])).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));
        assert_eq!(out.dims(), [2, 2, 7, 7]);
        let enc = d.encode(&Tensor4::zeros([1, 2, 7, 7])).unwrap();
        assert!(enc.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn decode_rejects_bad_features() {
        let d = identity_1x1(1.0);
        let err = d.decode(&Tensor4::zeros([1, 2, 1, 1])).unwrap_err().to_string();
        assert!(err.contains("code features"), "{err}");
        let err = d.encode(&Tensor4::zeros([1, 3, 1, 1])).unwrap_err().to_string();
        assert!(err.contains("signal channels"), "{err}");
    }

    #[test]
    fn decode_to_leaves_uncovered_border_zero() {
        let d = ConvDictionary::new(Tensor4::from_vec([1, 1, 1, 1], vec![1.0f64]).unwrap(), 2).unwrap();
        let code = Tensor4::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = d.decode_to(&code, (4, 4)).unwrap();
        assert_eq!(
            out.data(),
            &[1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3.0, 0.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert!(d.decode_to(&code, (6, 6)).is_err());
    }

    #[test]
    fn toeplitz_identity() {
        let m = toeplitz_expand(&identity_1x1(1.0), (1, 2, 2)).unwrap();
        assert_eq!(m, DMatrix::identity(4, 4));
    }

    #[test]
    fn toeplitz_sliding_window_of_ones() {
        let d = ConvDictionary::new(Tensor4::from_vec([1, 1, 2, 2], vec![1.0f64; 4]).unwrap(), 1).unwrap();
        let m = toeplitz_expand(&d, (1, 3, 3)).unwrap();
        assert_eq!(m.shape(), (4, 9));
        // hand-enumerated windows: top-left corners (0,0), (0,1), (1,0), (1,1)
        let expect = [
            [0, 1, 3, 4],
            [1, 2, 4, 5],
            [3, 4, 6, 7],
            [4, 5, 7, 8],
        ];
        for (r, cols) in expect.iter().enumerate() {
            for c in 0..9 {
                let want = if cols.contains(&c) { 1.0 } else { 0.0 };
                assert_eq!(m[(r, c)], want, "row {r} col {c}");
            }
        }
    }

    #[test]
    fn toeplitz_stride_two_disjoint_supports() {
        let d = ConvDictionary::new(Tensor4::from_vec([1, 1, 2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap(), 2).unwrap();
        let m = toeplitz_expand(&d, (1, 4, 4)).unwrap();
        assert_eq!(m.shape(), (4, 16));
        let expect = [[0, 1, 4, 5], [2, 3, 6, 7], [8, 9, 12, 13], [10, 11, 14, 15]];
        for (r, cols) in expect.iter().enumerate() {
            let nz: Vec<usize> = (0..16).filter(|&c| m[(r, c)] != 0.0).collect();
            assert_eq!(&nz, cols);
            assert_eq!(m[(r, cols[0])], 1.0);
            assert_eq!(m[(r, cols[3])], 4.0);
        }
    }

    #[test]
    fn toeplitz_size_guard() {
        let d = ConvDictionary::new(Tensor4::<f64>::zeros([64, 1, 3, 3]), 1).unwrap();
        match toeplitz_expand(&d, (1, 100, 100)) {
            Err(HscError::TooLarge { limit, .. }) => assert_eq!(limit, TOEPLITZ_MAX_ENTRIES),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn step_size_of_identity_and_scaled_identity() {
        let opts = EigenOptions::default();
        let eta = spectral_step_size(&identity_1x1(1.0), (5, 5), &opts).unwrap();
        assert!((eta - 1.0).abs() < 1e-12);
        let eta = spectral_step_size(&identity_1x1(2.0), (5, 5), &opts).unwrap();
        assert!((eta - 0.25).abs() < 1e-12);
    }

    #[test]
    fn step_size_rejects_zero_dictionary() {
        let d = ConvDictionary::new(Tensor4::<f64>::zeros([2, 1, 2, 2]), 1).unwrap();
        assert!(spectral_step_size(&d, (4, 4), &EigenOptions::default()).is_err());
    }

    #[test]
    fn step_size_reports_non_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = random_dict(&mut rng, [4, 1, 3, 3], 1);
        let opts = EigenOptions { max_iters: 2, krylov_dim: 30, rel_tol: 0.0, seed: 1 };
        match max_eigenvalue(&d, (6, 6), &opts) {
            Err(HscError::NoConvergence { iterations, rayleigh }) => {
                assert_eq!(iterations, 2);
                assert!(rayleigh > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn effective_dictionary_first_layer_is_identity_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_dict(&mut rng, [4, 1, 3, 3], 2);
        let eff = effective_dictionary(std::slice::from_ref(&d), 0).unwrap();
        assert_eq!(&eff, d.weights());
    }

    #[test]
    fn effective_dictionary_identity_chain() {
        let d = vec![identity_1x1(1.0), identity_1x1(1.0)];
        let eff = effective_dictionary(&d, 1).unwrap();
        assert_eq!(eff.data(), &[1.0]);
    }

    #[test]
    fn effective_dictionary_receptive_field_sizes() {
        // kernel/stride chains of the reference architectures
        for (k1, s1, k2, want) in [(8, 2, 8, 22), (9, 3, 9, 33), (5, 2, 5, 13)] {
            let d1 = ConvDictionary::new(Tensor4::<f32>::zeros([2, 1, k1, k1]), s1).unwrap();
            let d2 = ConvDictionary::new(Tensor4::<f32>::zeros([3, 2, k2, k2]), 1).unwrap();
            let eff = effective_dictionary(&[d1, d2], 1).unwrap();
            assert_eq!(eff.dims(), [3, 1, want, want]);
        }
    }

    #[test]
    fn effective_dictionary_names_boundary() {
        let d1 = ConvDictionary::new(Tensor4::<f32>::zeros([2, 1, 3, 3]), 1).unwrap();
        let d2 = ConvDictionary::new(Tensor4::<f32>::zeros([3, 5, 3, 3]), 1).unwrap();
        let err = effective_dictionary(&[d1, d2], 1).unwrap_err().to_string();
        assert!(err.contains("boundary 0/1"), "{err}");
    }
}
