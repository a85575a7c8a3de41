//! Region-aware manipulation: two diffusion chains combined under a coarse
//! mask every few steps, with short re-noise/denoise cycles to blend seams.

mod mask;
mod plan;
mod scheduler;

pub use mask::{boundary_discontinuity, coefficient_influence, mask_to_coefficient_domain};
pub use plan::{resolve_mask, PlanFile};
pub use scheduler::{
    harmonize, manipulate, naive_mix_baseline, ManipulationMode, ManipulationPlan, NoiseMode, DEFAULT_DELTA_T,
    DEFAULT_REPEATS,
};
