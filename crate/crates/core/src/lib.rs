//! Motion-basis factorization of dynamic Gaussian scenes.
//!
//! Every point of a dynamic scene moves as its canonical position plus a
//! per-point blend of a small number of shared basis trajectories:
//!
//! ```text
//! mu_i(t) = mu_c,i + sum_j c_ij * b_j(t)
//! q_i(t)  = normalize(q_c,i + sum_j c_ij * b^R_j(t))
//! ```
//!
//! The bases are either an explicit Fourier series or a small MLP queried
//! only over (positionally encoded) time. This crate holds the whole
//! numerical engine and is `no_std` (it needs `alloc`):
//!
//! - [`scene`]: Gaussian cloud, coefficient layouts, deformation, decomposition.
//! - [`basis`]: Fourier and MLP bases, with exact reverse-mode gradients for the MLP.
//! - [`fit`]: losses, Adam, schedules and the fitting loop over observed trajectories.
//! - [`synth`]: synthetic scene generators with closed-form ground truth.
//! - [`testkit`]: independent oracles (rank-residual SVD, finite differences).
//! - [`splat`]: forward CPU Gaussian splatting and PSNR.
//! - [`knn`]: a small kd-tree for neighbor graphs.
//!
//! File formats, the CLI and the viewer server live in the `motionfield` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod basis;
mod error;
pub mod fit;
pub mod knn;
mod linalg;
pub mod scene;
pub mod splat;
pub mod synth;
pub mod testkit;

pub use basis::{BasisFamily, FourierBasis, MlpBasis, MlpGradient, MlpShape, MotionBasis};
pub use error::{Error, Result};
pub use scene::{BasisSample, CoefficientLayout, Coefficients, GaussianCloud, PosedCloud, TimeDomain};
pub use synth::{PointLabel, TrajectoryDataset};
