//! Wavelet-domain implicit shape pipeline.
//!
//! Shapes become truncated signed distance fields ([`tsdf`]), are decomposed
//! into a coarse/detail biorthogonal wavelet pyramid ([`wavelet`]), generated
//! or inverted with diffusion samplers over the coarse volume ([`diffusion`],
//! [`conditioning`], [`manipulation`]), turned back into meshes ([`surface`])
//! and compared with point-set and silhouette metrics ([`metrics`]).

pub mod conditioning;
pub mod diffusion;
pub mod error;
pub mod grid;
pub mod io;
pub mod manipulation;
pub mod metrics;
pub mod surface;
pub mod tsdf;
pub mod wavelet;

pub use error::{Error, Result};
pub use grid::{masked_combine, trilinear_sample, Dims, RegionMask3, Volume3};
