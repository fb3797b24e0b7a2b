//! Recurrent pyramid transformer reconstruction of under-sampled Cartesian MRI.
//!
//! The crate is organized bottom-up:
//!
//! * [`kspace`]: complex images, centered FFTs, masks and data consistency.
//! * [`autodiff`]: a reverse-mode tape, Adam and finite-difference checks.
//! * [`attention`]: window partitioning and the attention kernels behind a
//!   name-keyed registry.
//! * [`net`]: the recurrent units, refine module and unrolled forward pass.
//! * [`data`]: synthetic phantoms, the `RFK1` tensor container and datasets.
//! * [`train`]: training, metrics, evaluation and the ablation/unroll studies.
//! * [`selftest`]: a quick invariant suite for installed binaries.

pub mod attention;
pub mod autodiff;
pub mod config;
pub mod data;
pub mod error;
pub mod kspace;
pub mod net;
pub mod rng;
pub mod scalar;
pub mod selftest;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Real;
pub use tensor::Tensor;
