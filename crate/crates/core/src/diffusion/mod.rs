//! Noise schedules, forward corruption, reverse samplers and closed-form
//! mixture denoisers over coarse coefficient volumes.

mod denoiser;
mod oracle;
pub mod rng;
mod sampler;
mod schedule;

pub use denoiser::{Denoiser, ZeroDenoiser};
pub use oracle::{oracle_predict_eps, CorpusManifest, GaussianMixtureOracle, CORPUS_MANIFEST};
pub(crate) use sampler::require_finite;
pub use sampler::{
    ddim_step, default_subset, draw_training_pair, initial_noise, p_step, predict_x0, q_sample, sample,
    sample_with_plan, training_loss, training_loss_at, Chain, StepPlan,
};
pub use schedule::{NoiseSchedule, ScheduleParams, DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_STEPS};

/// `NoiseSchedule::linear` under its conventional name.
pub fn make_linear_schedule(steps: usize, beta_start: f64, beta_end: f64) -> crate::Result<NoiseSchedule> {
    NoiseSchedule::linear(steps, beta_start, beta_end)
}
