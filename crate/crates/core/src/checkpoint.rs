//! `HSC1` checkpoint files.
//!
//! Little-endian layout:
//!
//! ```text
//! b"HSC1"
//! u32 layer count L
//! u32 x3 input channels, height, width
//! L x { u32 n_features, u32 in_channels, u32 k_h, u32 k_w, u32 stride, f64 lambda }
//! L x f32 weights, row-major [n_features, in_channels, k_h, k_w]
//! L x f32 momentum, same shape
//! u64 seed
//! u64 epoch
//! ```
//!
//! Step sizes are not stored; they are recomputed on load.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::conv::ConvDictionary;
use crate::error::{HscError, Result};
use crate::learner::NetworkState;
use crate::tensor::Tensor4;

pub const MAGIC: &[u8; 4] = b"HSC1";

pub fn to_bytes(state: &NetworkState<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(state.n_layers() as u32).to_le_bytes());
    for v in state.input {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for (d, lambda) in state.dicts.iter().zip(&state.lambdas) {
        let [f, c, kh, kw] = d.weights().dims();
        for v in [f, c, kh, kw, d.stride()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&lambda.to_le_bytes());
    }
    for d in &state.dicts {
        for v in d.weights().data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for m in &state.momenta {
        for v in m.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&state.seed.to_le_bytes());
    out.extend_from_slice(&state.epoch.to_le_bytes());
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(HscError::Format {
                offset: self.pos as u64,
                reason: format!("truncated while reading {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| HscError::Format {
            offset: self.pos as u64,
            reason: format!("{what} size overflows"),
        })?, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<NetworkState<f32>> {
    if buf.len() < 4 || &buf[..4] != MAGIC {
        return Err(HscError::BadMagic {
            expected: String::from_utf8_lossy(MAGIC).into_owned(),
            found: String::from_utf8_lossy(&buf[..buf.len().min(4)]).into_owned(),
        });
    }
    let mut cur = Cursor { buf, pos: 4 };
    let n_layers = cur.u32("layer count")?;
    if n_layers == 0 || n_layers > 64 {
        return Err(HscError::Format {
            offset: 4,
            reason: format!("implausible layer count {n_layers}"),
        });
    }
    let input = [cur.u32("input channels")?, cur.u32("input height")?, cur.u32("input width")?];
    let mut headers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let what = format!("layer {} header", i + 1);
        let dims = [cur.u32(&what)?, cur.u32(&what)?, cur.u32(&what)?, cur.u32(&what)?];
        let stride = cur.u32(&what)?;
        let lambda = cur.f64(&what)?;
        headers.push((dims, stride, lambda));
    }
    let mut dicts = Vec::with_capacity(n_layers);
    for (i, (dims, stride, _)) in headers.iter().enumerate() {
        let n = dims.iter().product();
        let w = cur.f32s(n, &format!("layer {} weights", i + 1))?;
        dicts.push(ConvDictionary::new(Tensor4::from_vec(*dims, w)?, *stride)?);
    }
    let mut momenta = Vec::with_capacity(n_layers);
    for (i, (dims, _, _)) in headers.iter().enumerate() {
        let n = dims.iter().product();
        momenta.push(Tensor4::from_vec(*dims, cur.f32s(n, &format!("layer {} momentum", i + 1))?)?);
    }
    let seed = cur.u64("seed")?;
    let epoch = cur.u64("epoch")?;
    if cur.pos != buf.len() {
        return Err(HscError::Format {
            offset: cur.pos as u64,
            reason: format!("{} trailing bytes", buf.len() - cur.pos),
        });
    }
    let lambdas = headers.iter().map(|h| h.2).collect();
    let mut state = NetworkState::from_dicts(input, dicts, lambdas, seed)?;
    state.momenta = momenta;
    state.epoch = epoch;
    Ok(state)
}

pub fn save(state: &NetworkState<f32>, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| HscError::io(path, e))?;
    f.write_all(&to_bytes(state)).map_err(|e| HscError::io(path, e))
}

pub fn load(path: &Path) -> Result<NetworkState<f32>> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| HscError::io(path, e))?;
    from_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::{init_state, LayerSpec, NetworkSpec};
    use crate::solver::Mode;

    fn spec() -> NetworkSpec {
        NetworkSpec {
            input: [1, 9, 9],
            layers: vec![
                LayerSpec { n_features: 3, in_channels: 1, kernel: [3, 3], stride: 2, lambda: 0.15, eta_learn: 0.1 },
                LayerSpec { n_features: 5, in_channels: 3, kernel: [2, 2], stride: 1, lambda: 0.35, eta_learn: 0.1 },
            ],
            t_stab: 1e-3,
            epochs: 1,
            batch_size: 2,
            mode: Mode::Spc,
            seed: 42,
            max_iters: 50,
            momentum: 0.9,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut st: NetworkState<f32> = init_state(&spec(), 42).unwrap();
        st.momenta[1].data_mut()[2] = -0.125;
        st.epoch = 17;
        let bytes = to_bytes(&st);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, st);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let st: NetworkState<f32> = init_state(&spec(), 1).unwrap();
        let mut bytes = to_bytes(&st);
        let err = from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, HscError::Format { .. }), "{err}");
        bytes[0] = b'X';
        let err = from_bytes(&bytes).unwrap_err().to_string();
        assert!(err.contains("bad magic"), "{err}");
    }
}
