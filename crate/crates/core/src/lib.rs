//! Two-stage image super-resolution: an L0-regularized multi-frame
//! reconstructor feeding a residual back-projection network.
//!
//! The crate is organized bottom-up:
//!
//! - [`imaging`]: planes, kernels and the circular linear operators (with
//!   exact adjoints) that everything else is built on.
//! - [`degradation`]: the observation model `W_k = D·B·M_k` and the
//!   synthetic sequence generator.
//! - [`registration`]: translational subpixel motion estimation.
//! - [`lorig`]: the multi-frame variational solver (hard-threshold
//!   subproblems plus a preconditioned conjugate-gradient image update).
//! - [`erbpn`]: the single-frame network, its layers, gradients, ADAM and
//!   training loop.
//! - [`cascade`]: multi-frame-first and single-frame-first pipelines.
//! - [`metrics`]: PSNR/SSIM and the benchmark harness.
//! - [`cli`]: the `srcascade` command-line front end.
//!
//! See the `examples/` directory of this crate for one runnable program
//! per capability.

pub mod cascade;
pub mod cli;
pub mod config;
pub mod degradation;
pub mod erbpn;
pub mod error;
pub mod imaging;
pub mod lorig;
pub mod metrics;
pub mod registration;
pub mod synthetic;

pub use error::{Error, Result};
pub use imaging::{GradientPair, ImagePlane, Kernel2D};
