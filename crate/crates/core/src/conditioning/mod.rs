//! Latent codes, encoders, detail predictors and latent refinement.

mod detail;
mod encoder;
mod latent;
mod model;
mod refine;

pub use detail::{DetailPredictor, NearestDetailPredictor};
pub use encoder::{Encoder, EncoderSpec, PoolProjectEncoder, DEFAULT_POOL};
pub use latent::{interpolate_latent, LatentCode, DEFAULT_LATENT_LEN};
pub use model::{Model, ModelBuild, ModelManifest, MODEL_FORMAT, MODEL_MANIFEST};
pub use refine::{
    invert, refine_latent, smoothed_quarters, Inversion, InvertOptions, RefineConfig, Refinement, DEFAULT_ITERS,
    DEFAULT_LR, EMA_WINDOW, FD_STEP, REFINE_PAIRS,
};
