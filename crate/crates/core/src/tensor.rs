//! Dense row-major 4-d tensors `[n, c, h, w]`.

use serde::{Deserialize, Serialize};

use crate::error::{HscError, Result};
use crate::real::Real;

/// Row-major tensor with dims `[batch | n_features, channels, height, width]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor4<T = f32> {
    dims: [usize; 4],
    data: Vec<T>,
}

impl<T: Real> Tensor4<T> {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Tensor4 {
            dims,
            data: vec![T::zero(); dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        let want: usize = dims.iter().product();
        if data.len() != want {
            return Err(HscError::dim("data length", want, data.len()));
        }
        Ok(Tensor4 { dims, data })
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for n in 0..dims[0] {
            for c in 0..dims[1] {
                for y in 0..dims[2] {
                    for x in 0..dims[3] {
                        data.push(f([n, c, y, x]));
                    }
                }
            }
        }
        Tensor4 { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.dims[2]
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.dims[3]
    }

    /// Number of elements in one batch item.
    #[inline]
    pub fn item_len(&self) -> usize {
        self.dims[1] * self.dims[2] * self.dims[3]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn offset(&self, idx: [usize; 4]) -> usize {
        ((idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2]) * self.dims[3] + idx[3]
    }

    #[inline]
    pub fn get(&self, idx: [usize; 4]) -> T {
        self.data[self.offset(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: [usize; 4], v: T) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    pub fn item(&self, n: usize) -> &[T] {
        let l = self.item_len();
        &self.data[n * l..(n + 1) * l]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [T] {
        let l = self.item_len();
        &mut self.data[n * l..(n + 1) * l]
    }

    /// Copy of batch items `range` as a new tensor.
    pub fn slice_batch(&self, range: std::ops::Range<usize>) -> Tensor4<T> {
        let l = self.item_len();
        Tensor4 {
            dims: [range.len(), self.dims[1], self.dims[2], self.dims[3]],
            data: self.data[range.start * l..range.end * l].to_vec(),
        }
    }

    /// Gather batch items by index.
    pub fn select_batch(&self, idx: &[usize]) -> Tensor4<T> {
        let mut data = Vec::with_capacity(idx.len() * self.item_len());
        for &i in idx {
            data.extend_from_slice(self.item(i));
        }
        Tensor4 {
            dims: [idx.len(), self.dims[1], self.dims[2], self.dims[3]],
            data,
        }
    }

    /// Concatenate tensors along the batch axis.
    pub fn stack(items: &[Tensor4<T>]) -> Result<Tensor4<T>> {
        let first = items
            .first()
            .ok_or_else(|| HscError::param("items", "cannot stack an empty list"))?;
        let mut data = Vec::with_capacity(items.iter().map(|t| t.len()).sum());
        let mut n = 0;
        for t in items {
            for (axis, name) in [(1, "channels"), (2, "height"), (3, "width")] {
                if t.dims[axis] != first.dims[axis] {
                    return Err(HscError::dim(name, first.dims[axis], t.dims[axis]));
                }
            }
            n += t.dims[0];
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor4 {
            dims: [n, first.dims[1], first.dims[2], first.dims[3]],
            data,
        })
    }

    pub fn reshape(self, dims: [usize; 4]) -> Result<Tensor4<T>> {
        Tensor4::from_vec(dims, self.data)
    }

    pub fn cast<U: Real>(&self) -> Tensor4<U> {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor4<T> {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn check_same_dims(&self, other: &Tensor4<T>, what: &str) -> Result<()> {
        for (axis, name) in ["batch", "channels", "height", "width"].iter().enumerate() {
            if self.dims[axis] != other.dims[axis] {
                return Err(HscError::dim(
                    format!("{what} {name}"),
                    self.dims[axis],
                    other.dims[axis],
                ));
            }
        }
        Ok(())
    }

    /// `self - other`, elementwise.
    pub fn sub(&self, other: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_same_dims(other, "subtrahend")?;
        Ok(Tensor4 {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        })
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: T, other: &Tensor4<T>) -> Result<()> {
        self.check_same_dims(other, "axpy operand")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: T) {
        for v in &mut self.data {
            *v *= alpha;
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64() * v.as_f64()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64().abs()).sum()
    }

    pub fn dot(&self, other: &Tensor4<T>) -> Result<f64> {
        self.check_same_dims(other, "dot operand")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.as_f64() * b.as_f64())
            .sum())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data
            .iter()
            .map(|v| v.as_f64().abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor4::<f32>::from_vec([1, 1, 2, 2], vec![0.0; 3]).is_err());
        let t = Tensor4::<f32>::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.get([0, 0, 1, 0]), 3.0);
    }

    #[test]
    fn stack_and_select() {
        let a = Tensor4::<f64>::from_fn([2, 1, 1, 2], |[n, _, _, x]| (n * 10 + x) as f64);
        let b = Tensor4::stack(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(b.dims(), [4, 1, 1, 2]);
        let s = b.select_batch(&[3, 0]);
        assert_eq!(s.data(), &[10.0, 11.0, 0.0, 1.0]);
    }

    #[test]
    fn sub_reports_axis() {
        let a = Tensor4::<f32>::zeros([1, 2, 3, 3]);
        let b = Tensor4::<f32>::zeros([1, 3, 3, 3]);
        let err = a.sub(&b).unwrap_err().to_string();
        assert!(err.contains("channels"), "{err}");
    }
}
