use serde::{Deserialize, Serialize};

use crate::diffusion::rng::{StreamId, StreamTag};
use crate::diffusion::{draw_training_pair, q_sample, sample, Denoiser, NoiseSchedule};
use crate::error::{Error, Result};
use crate::grid::Volume3;

use super::encoder::Encoder;
use super::latent::LatentCode;

pub const DEFAULT_ITERS: usize = 400;
pub const DEFAULT_LR: f64 = 5e-2;
pub const FD_STEP: f64 = 1e-3;
pub const EMA_WINDOW: usize = 50;
/// Size of the fixed `(t, eps)` set the refinement objective cycles through.
pub const REFINE_PAIRS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub iters: usize,
    pub lr: f64,
    pub seed: u64,
    /// Use central differences even when an analytic gradient exists.
    #[serde(default)]
    pub force_finite_differences: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            iters: DEFAULT_ITERS,
            lr: DEFAULT_LR,
            seed: 0,
            force_finite_differences: false,
        }
    }
}

/// Result of latent refinement: the final code and the per-iteration loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub z: LatentCode,
    pub trace: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            lr,
        }
    }

    fn update(&mut self, x: &mut [f64], g: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - Self::B1.powi(self.step);
        let c2 = 1.0 - Self::B2.powi(self.step);
        for i in 0..x.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g[i] * g[i];
            x[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

fn loss_at(
    den: &dyn Denoiser,
    ct: &Volume3,
    t: usize,
    eps: &Volume3,
    z: &LatentCode,
    sched: &NoiseSchedule,
) -> Result<f64> {
    let pred = den.predict_eps(ct, t, Some(z), sched)?;
    Ok(pred.sub(eps)?.sum_sq() / ct.len() as f64)
}

/// Optimizes the condition `z` against the denoising objective for a fixed
/// clean volume `c0`; the denoiser is never modified.
///
/// The objective is estimated over a fixed set of [`REFINE_PAIRS`] seeded
/// `(t, eps)` pairs, pair `k` drawn from stream `(seed, 0, k, Refinement)`;
/// iteration `i` uses pair `i mod REFINE_PAIRS`, so trace values taken a
/// full cycle apart differ only through `z`. Gradients come from the denoiser when it
/// provides them, otherwise from central differences with step `1e-3`
/// (two denoiser calls per latent coordinate). The trace records the loss at
/// each iterate before its update.
pub fn refine_latent(
    c0: &Volume3,
    z_init: &LatentCode,
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
    cfg: &RefineConfig,
) -> Result<Refinement> {
    match denoiser.latent_len() {
        Some(n) => z_init.require_len(n)?,
        None => return Err(Error::InvalidArgument("denoiser does not accept a latent code".into())),
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {}",
            cfg.lr
        )));
    }
    let mut z = z_init.values().to_vec();
    let mut adam = Adam::new(z.len(), cfg.lr);
    let mut trace = Vec::with_capacity(cfg.iters);
    for i in 0..cfg.iters {
        let mut rng = StreamId::new(cfg.seed, 0, (i % REFINE_PAIRS) as u64, StreamTag::Refinement).rng();
        let (t, eps) = draw_training_pair(c0, sched, &mut rng)?;
        let ct = q_sample(c0, t, &eps, sched)?;
        let zc = LatentCode::new(z.clone())?;
        let loss = loss_at(denoiser, &ct, t, &eps, &zc, sched)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "refinement loss became non-finite at iteration {i} (t = {t}); trace so far: {trace:?}"
            )));
        }
        trace.push(loss);
        let analytic = if cfg.force_finite_differences {
            None
        } else {
            denoiser.predict_eps_grad_z(&ct, t, &zc, &eps, sched)
        };
        let grad = match analytic {
            Some(g) => g?,
            None => {
                let mut g = vec![0.0; z.len()];
                for (d, gd) in g.iter_mut().enumerate() {
                    let mut up = z.clone();
                    let mut dn = z.clone();
                    up[d] += FD_STEP;
                    dn[d] -= FD_STEP;
                    let lu = loss_at(denoiser, &ct, t, &eps, &LatentCode::new(up)?, sched)?;
                    let ld = loss_at(denoiser, &ct, t, &eps, &LatentCode::new(dn)?, sched)?;
                    *gd = (lu - ld) / (2.0 * FD_STEP);
                }
                g
            }
        };
        if grad.len() != z.len() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "invalid gradient at iteration {i}; trace so far: {trace:?}"
            )));
        }
        adam.update(&mut z, &grad);
    }
    Ok(Refinement {
        z: LatentCode::new(z)?,
        trace,
    })
}

fn ema_last(xs: &[f64], window: usize) -> f64 {
    let a = 2.0 / (window as f64 + 1.0);
    let mut it = xs.iter();
    let mut e = *it.next().unwrap_or(&f64::NAN);
    for x in it {
        e = a * x + (1.0 - a) * e;
    }
    e
}

/// Exponential moving averages (span `window`) of the first and final
/// quarters of a loss trace, each restarted at its quarter's first value.
pub fn smoothed_quarters(trace: &[f64], window: usize) -> Option<(f64, f64)> {
    let q = trace.len() / 4;
    if q == 0 {
        return None;
    }
    Some((
        ema_last(&trace[..q], window),
        ema_last(&trace[trace.len() - q..], window),
    ))
}

/// Inversion settings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InvertOptions {
    /// `None` skips refinement.
    pub refine: Option<RefineConfig>,
    pub seed: u64,
    pub step_subset: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inversion {
    pub z: LatentCode,
    pub volume: Volume3,
    pub trace: Vec<f64>,
}

/// Encodes `c0`, optionally refines the code, and samples conditioned on it.
pub fn invert(
    c0: &Volume3,
    encoder: &dyn Encoder,
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
    opts: &InvertOptions,
) -> Result<Inversion> {
    let z0 = encoder.encode(c0)?;
    let (z, trace) = match &opts.refine {
        Some(cfg) => {
            let r = refine_latent(c0, &z0, denoiser, sched, cfg)?;
            (r.z, r.trace)
        }
        None => (z0, Vec::new()),
    };
    let volume = sample(
        denoiser,
        sched,
        c0.dims(),
        opts.seed,
        Some(&z),
        opts.step_subset.as_deref(),
    )?;
    let volume = volume.with_frame(c0.origin(), c0.spacing())?;
    Ok(Inversion { z, volume, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::rng::normal_volume;
    use crate::diffusion::GaussianMixtureOracle;
    use crate::grid::Dims;

    fn vol(seed: u64, dims: Dims) -> Volume3 {
        normal_volume(StreamId::new(seed, 4, 0, StreamTag::Misc), dims).unwrap()
    }

    /// For a zero clean volume this predicts `eps + sqrt(N) (z - a)` on a
    /// grid of `N = len(z)` voxels, so the loss is exactly `|z - a|^2`.
    struct Quadratic {
        anchor: Vec<f64>,
    }

    impl Denoiser for Quadratic {
        fn predict_eps(
            &self,
            c_t: &Volume3,
            t: usize,
            z: Option<&LatentCode>,
            sched: &NoiseSchedule,
        ) -> Result<Volume3> {
            // Recover eps from c_t assuming the clean volume is zero.
            let r = (1.0 - sched.alpha_bar(t)).sqrt();
            let z = z.unwrap();
            let scale = (self.anchor.len() as f64).sqrt();
            let vals = c_t
                .values()
                .iter()
                .enumerate()
                .map(|(i, c)| c / r + scale * (z.values()[i] - self.anchor[i]))
                .collect();
            c_t.with_values(vals)
        }

        fn latent_len(&self) -> Option<usize> {
            Some(self.anchor.len())
        }
    }

    #[test]
    fn zero_iterations_is_identity() {
        let sched = NoiseSchedule::default();
        let x = vol(1, [8, 8, 8]);
        let a = LatentCode::new(vec![0.5; 4]).unwrap();
        let o = GaussianMixtureOracle::uniform(vec![x.clone()])
            .unwrap()
            .with_anchors(vec![a], 1.0)
            .unwrap();
        let z = LatentCode::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let cfg = RefineConfig {
            iters: 0,
            ..Default::default()
        };
        let r = refine_latent(&x, &z, &o, &sched, &cfg).unwrap();
        assert_eq!(r.z, z);
        assert!(r.trace.is_empty());
    }

    #[test]
    fn quadratic_target_converges() {
        let sched = NoiseSchedule::default();
        let dims = [2, 2, 2];
        let anchor = vec![0.3, -0.7, 1.1, 0.0, 0.25, -0.5, 0.9, 0.4];
        let den = Quadratic { anchor: anchor.clone() };
        let c0 = Volume3::zeros(dims).unwrap();
        let z0 = LatentCode::zeros(8).unwrap();
        let cfg = RefineConfig {
            iters: 400,
            lr: 5e-2,
            seed: 3,
            force_finite_differences: true,
        };
        let r = refine_latent(&c0, &z0, &den, &sched, &cfg).unwrap();
        let a = LatentCode::new(anchor).unwrap();
        assert!(r.z.distance(&a).unwrap() < 1e-3, "{}", r.z.distance(&a).unwrap());
        let (first, last) = smoothed_quarters(&r.trace, EMA_WINDOW).unwrap();
        assert!(last <= first);
    }

    #[test]
    fn oracle_refinement_moves_toward_matching_anchor() {
        let sched = NoiseSchedule::default();
        let dims = [8, 8, 8];
        let comps: Vec<Volume3> = (0..2).map(|i| vol(10 + i, dims).scale(0.1)).collect();
        let anchors = vec![
            LatentCode::new(vec![1.0, 0.0, 0.0]).unwrap(),
            LatentCode::new(vec![0.0, 1.0, 0.0]).unwrap(),
        ];
        let o = GaussianMixtureOracle::uniform(comps.clone())
            .unwrap()
            .with_anchors(anchors.clone(), 0.5)
            .unwrap();
        let cfg = RefineConfig {
            iters: 200,
            lr: 5e-2,
            seed: 1,
            force_finite_differences: false,
        };
        let r = refine_latent(&comps[0], &anchors[1], &o, &sched, &cfg).unwrap();
        assert!(r.z.distance(&anchors[0]).unwrap() < anchors[1].distance(&anchors[0]).unwrap());
        let (first, last) = smoothed_quarters(&r.trace, EMA_WINDOW).unwrap();
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn finite_differences_agree_with_analytic_steps() {
        let sched = NoiseSchedule::default();
        let dims = [4, 4, 4];
        let comps: Vec<Volume3> = (0..2).map(|i| vol(20 + i, dims).scale(0.2)).collect();
        let anchors = vec![
            LatentCode::new(vec![1.0, 0.0]).unwrap(),
            LatentCode::new(vec![0.0, 1.0]).unwrap(),
        ];
        let o = GaussianMixtureOracle::uniform(comps.clone())
            .unwrap()
            .with_anchors(anchors.clone(), 0.6)
            .unwrap();
        let base = RefineConfig {
            iters: 5,
            lr: 1e-2,
            seed: 2,
            force_finite_differences: false,
        };
        let a = refine_latent(&comps[1], &anchors[0], &o, &sched, &base).unwrap();
        let b = refine_latent(
            &comps[1],
            &anchors[0],
            &o,
            &sched,
            &RefineConfig {
                force_finite_differences: true,
                ..base
            },
        )
        .unwrap();
        assert!(a.z.distance(&b.z).unwrap() < 1e-4);
    }

    #[test]
    fn rejects_unconditional_denoiser() {
        let sched = NoiseSchedule::default();
        let x = vol(1, [2, 2, 2]);
        let o = GaussianMixtureOracle::uniform(vec![x.clone()]).unwrap();
        let z = LatentCode::zeros(2).unwrap();
        assert!(refine_latent(&x, &z, &o, &sched, &RefineConfig::default()).is_err());
    }

    #[test]
    fn quarters() {
        assert_eq!(smoothed_quarters(&[1.0, 2.0, 3.0], 50), None);
        let t: Vec<f64> = (0..8).map(|i| 8.0 - i as f64).collect();
        let (a, b) = smoothed_quarters(&t, 1).unwrap();
        assert_eq!((a, b), (7.0, 1.0));
    }
}
