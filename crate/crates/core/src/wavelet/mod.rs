//! Biorthogonal filter banks, separable 3D transforms and the coarse/detail
//! pyramid built on them.

mod filters;
mod pyramid;
mod transform;

pub use filters::{zeros_at_pi, FilterBank, DEFAULT_BANK};
pub use pyramid::{
    analysis_support, compactness_report, level_dims, pyramid_decompose, pyramid_reconstruct, reconstruct_truncated,
    synthesis_support, synthesize_upsample, CompactnessReport, LevelTable, WaveletPyramid,
};
pub use transform::{dwt3_full, idwt3_full, Subbands};

/// Default number of pyramid levels.
pub const DEFAULT_LEVELS: usize = 3;
