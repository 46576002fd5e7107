//! Matrix-free coded-aperture snapshot spectral imaging (CASSI).
//!
//! The crate models the single-disperser CASSI forward process, its
//! element-wise pseudo-inverse, and range-null space reconstruction with a
//! pluggable prior:
//!
//! - [`tensor`]: scene geometry and the dense cube types.
//! - [`operator`]: the sensing operator `Phi`, its transpose, pseudo-inverse
//!   and the range/null projectors.
//! - [`dense`]: explicit `Phi` and SVD pseudo-inverse for small instances,
//!   used as ground truth.
//! - [`recon`]: initialization, TV prior, GAP solver and the data-consistent
//!   wrapper.
//! - [`sim`]: seeded masks, scenes and shot noise.
//! - [`metrics`]: PSNR and SSIM.

pub mod dense;
pub mod error;
pub mod metrics;
pub mod operator;
pub mod recon;
pub mod sim;
pub mod tensor;

pub use error::{Error, Result};
pub use operator::{build_operator, shift_cube, shift_mask, unshift_cube, SensingOperator};
pub use tensor::{
    flatten_index, validate, CodedAperture, HsiCube, Measurement, SceneConfig, ShiftedCube,
    Validate,
};
