use crate::conditioning::LatentCode;
use crate::error::Result;
use crate::grid::Volume3;

use super::schedule::NoiseSchedule;

/// Noise predictor used by every sampler and by refinement.
///
/// Implementations must be deterministic in `(c_t, t, z)` and reentrant.
pub trait Denoiser: Send + Sync {
    /// Predicted noise, same dims and frame as `c_t`.
    fn predict_eps(&self, c_t: &Volume3, t: usize, z: Option<&LatentCode>, sched: &NoiseSchedule) -> Result<Volume3>;

    /// Latent length accepted for conditioning, if any.
    fn latent_len(&self) -> Option<usize> {
        None
    }

    /// Gradient with respect to `z` of the voxel-mean squared error between
    /// `eps` and `predict_eps(c_t, t, z)`. `None` when not available
    /// analytically.
    fn predict_eps_grad_z(
        &self,
        _c_t: &Volume3,
        _t: usize,
        _z: &LatentCode,
        _eps: &Volume3,
        _sched: &NoiseSchedule,
    ) -> Option<Result<Vec<f64>>> {
        None
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict_eps(&self, c_t: &Volume3, t: usize, z: Option<&LatentCode>, sched: &NoiseSchedule) -> Result<Volume3> {
        (**self).predict_eps(c_t, t, z, sched)
    }

    fn latent_len(&self) -> Option<usize> {
        (**self).latent_len()
    }

    fn predict_eps_grad_z(
        &self,
        c_t: &Volume3,
        t: usize,
        z: &LatentCode,
        eps: &Volume3,
        sched: &NoiseSchedule,
    ) -> Option<Result<Vec<f64>>> {
        (**self).predict_eps_grad_z(c_t, t, z, eps, sched)
    }
}

/// Always predicts zero noise.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDenoiser;

impl Denoiser for ZeroDenoiser {
    fn predict_eps(
        &self,
        c_t: &Volume3,
        _t: usize,
        _z: Option<&LatentCode>,
        _sched: &NoiseSchedule,
    ) -> Result<Volume3> {
        Ok(c_t.map(|_| 0.0))
    }
}
