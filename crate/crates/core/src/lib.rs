//! Semi-dual JKO (S-JKO) training of Wasserstein gradient flows.
//!
//! This crate is `no_std` (it needs `alloc`) and holds every piece of the
//! algorithm that does not touch the outside world:
//!
//! | module | contents |
//! |--------|----------|
//! | [`tensor`] | dense row-major `f64` matrices and the kernels shared by every path |
//! | [`autodiff`] | reverse-mode tape with differentiable backward (double backprop for R1) |
//! | [`nets`] | MLPs for the transport map and potential, frozen snapshots, Adam |
//! | [`divergence`] | f-divergence generators, convex conjugates and `f°` |
//! | [`datasets`] | seeded samplers: Gaussian source, Two Circles, 25-Gaussian mixture |
//! | [`sjko`] | the per-phase adversarial trainer and the UOTM baselines |
//! | [`wgf`] | closed-form Ornstein-Uhlenbeck flow, Euler-Maruyama oracle, Gaussian symmetric KL |
//! | [`metrics`] | mode coverage, ring concentration, exact empirical W2 |
//!
//! IO, configuration files, checkpoints and the command line live in the
//! companion `sjko` crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod autodiff;
pub mod datasets;
pub mod divergence;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod nets;
pub mod rng;
pub mod sjko;
pub mod tensor;
pub mod wgf;

pub use error::{Error, Result};
pub use tensor::RealTensor;
