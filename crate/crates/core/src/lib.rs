#![forbid(unsafe_code)]

//! Dense tensors, the differentiable kernels built on them, and the
//! reverse-mode tape that ties them together.
//!
//! Everything is CPU, f64-first (f32 only for latency measurements),
//! and deterministic: fixed accumulation orders, seedable streams, and
//! worker partitioning that never changes results.

pub mod autograd;
pub mod container;
pub mod conv;
pub mod dft;
pub mod error;
pub mod fgrep;
pub mod gemm;
pub mod optim;
pub mod parallel;
pub mod rng;
pub mod sample;
pub mod scalar;
pub mod tensor;

pub use autograd::{backward, Graph, Var};
pub use error::{CoreError, Result};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tensor::Tensor;
