//! Hierarchical convolutional sparse coding.
//!
//! Two solvers for stacked nonnegative convolutional sparse coding share one
//! accelerated proximal-gradient loop:
//!
//! - **Hi-La** (hierarchical Lasso): each layer minimizes its own Lasso cost
//!   `0.5 * ||gamma_{i-1} - D_i^T gamma_i||^2 + lambda_i * ||gamma_i||_1`.
//! - **SPC** (sparse predictive coding): each non-top layer also pays the
//!   top-down error `0.5 * ||gamma_i - D_{i+1}^T gamma_{i+1}||^2`.
//!
//! Around the solvers sit dictionary learning ([`learner`]), dataset
//! ingestion and preprocessing ([`preprocess`]), the analysis pipeline used
//! to compare the two models ([`analysis`]), the checkpoint format
//! ([`checkpoint`]) and the command-line front end ([`cli`]).
//!
//! ```
//! use hsc::{conv::ConvDictionary, solver::{InferenceConfig, Mode}, tensor::Tensor4, learner::NetworkState};
//!
//! let atom = Tensor4::from_vec([1, 1, 2, 2], vec![0.5f32; 4]).unwrap();
//! let dict = ConvDictionary::new(atom, 1).unwrap();
//! let state = NetworkState::from_dicts([1, 4, 4], vec![dict], vec![0.05], 0).unwrap();
//! let x = Tensor4::from_fn([1, 1, 4, 4], |[_, _, y, x]| if y < 2 && x < 2 { 0.5 } else { 0.0 });
//! let res = state.infer(&x, &InferenceConfig::new(Mode::Spc, 1e-4)).unwrap();
//! assert!(res.converged);
//! assert!(res.gammas[0].get([0, 0, 0, 0]) > 0.0);
//! ```

// guards are written `!(x > 0.0)` so that NaN fails them too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod checkpoint;
pub mod cli;
pub mod conv;
pub mod error;
pub mod learner;
pub mod preprocess;
pub mod real;
pub mod solver;
pub mod tensor;

pub use conv::{ConvDictionary, SparseMap};
pub use error::{HscError, Result};
pub use learner::{NetworkSpec, NetworkState, TrainLog};
pub use real::Real;
pub use solver::{InferenceConfig, InferenceResult, Mode};
pub use tensor::Tensor4;
