use serde::{Deserialize, Serialize};

use crate::conditioning::{interpolate_latent, LatentCode};
use crate::diffusion::rng::{StreamId, StreamTag, CHAIN_A, CHAIN_B};
use crate::diffusion::{initial_noise, require_finite, sample, Chain, Denoiser, NoiseSchedule};
use crate::error::{Error, Result};
use crate::grid::{masked_combine, Dims, RegionMask3, Volume3};

pub const DEFAULT_DELTA_T: usize = 10;
pub const DEFAULT_REPEATS: usize = 10;

/// What chain B contributes inside the mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManipulationMode {
    /// Chain B is guided by `z_B`.
    Replacement,
    /// Chain B is guided by `(1 - alpha) z_A + alpha z_B`, with one alpha per
    /// combine point (first block first); a single entry applies to all.
    PartInterpolation { alphas: Vec<f64> },
    /// Chain B samples unconditionally.
    Regeneration,
    /// No mask: one chain guided by the interpolated code.
    WholeInterpolation { alpha: f64 },
}

/// A manipulation over the coarse grid (mask true = take chain B).
#[derive(Debug, Clone, PartialEq)]
pub struct ManipulationPlan {
    pub mode: ManipulationMode,
    pub mask: RegionMask3,
    pub delta_t: usize,
    pub harmonize_repeats: usize,
}

impl ManipulationPlan {
    pub fn new(mode: ManipulationMode, mask: RegionMask3) -> Self {
        Self {
            mode,
            mask,
            delta_t: DEFAULT_DELTA_T,
            harmonize_repeats: DEFAULT_REPEATS,
        }
    }

    pub fn validate(&self, sched: &NoiseSchedule, dims: Dims) -> Result<()> {
        let steps = sched.steps();
        if self.delta_t == 0 || steps % self.delta_t != 0 {
            return Err(Error::InvalidArgument(format!(
                "delta_t {} must divide T = {steps}",
                self.delta_t
            )));
        }
        if self.mask.dims() != dims {
            return Err(Error::ShapeMismatch(format!(
                "mask {:?} vs coarse dims {dims:?}",
                self.mask.dims()
            )));
        }
        match &self.mode {
            ManipulationMode::PartInterpolation { alphas } => {
                let blocks = steps / self.delta_t;
                if alphas.is_empty() || (alphas.len() != 1 && alphas.len() != blocks) {
                    return Err(Error::InvalidArgument(format!(
                        "need 1 or {blocks} alphas, got {}",
                        alphas.len()
                    )));
                }
                if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
                    return Err(Error::InvalidArgument("alphas must lie in [0, 1]".into()));
                }
            }
            ManipulationMode::WholeInterpolation { alpha } if !(0.0..=1.0).contains(alpha) => {
                return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Injected-noise policy; `Zero` makes every step deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Seeded(u64),
    Zero,
}

fn repeat_key(t: usize, r: usize) -> u64 {
    ((t as u64) << 32) | r as u64
}

/// Combine-and-harmonize around step `t`.
///
/// `c_mix` sits at step `t - 1`. Each repeat re-noises it one step with
/// `N(sqrt(1 - beta_t) C, beta_t I)`, takes one reverse step with each chain
/// from that shared volume and recombines the two under `mask`.
#[allow(clippy::too_many_arguments)]
pub fn harmonize(
    c_mix: &Volume3,
    t: usize,
    mask: &RegionMask3,
    repeats: usize,
    chain_a: &Chain<'_>,
    chain_b: &Chain<'_>,
    sched: &NoiseSchedule,
    noise: NoiseMode,
) -> Result<Volume3> {
    if t == 0 || t >= sched.steps() {
        return Err(Error::InvalidArgument(format!(
            "harmonize step {t} outside 1..{}",
            sched.steps()
        )));
    }
    let beta = sched.beta(t);
    let (keep, spread) = ((1.0 - beta).sqrt(), beta.sqrt());
    let mut c = c_mix.clone();
    for r in 0..repeats {
        let key = repeat_key(t, r);
        let renoised = match noise {
            NoiseMode::Seeded(seed) => {
                let n = crate::diffusion::rng::normal_volume(
                    StreamId::new(seed, CHAIN_A, key, StreamTag::Harmonize),
                    c.dims(),
                )?;
                c.zip_map(&n, |x, e| keep * x + spread * e)?
            }
            NoiseMode::Zero => c.scale(keep),
        };
        let stream = |chain: &Chain<'_>| match noise {
            NoiseMode::Seeded(seed) => Some(StreamId::new(seed, chain.id, key, StreamTag::HarmonizeStep)),
            NoiseMode::Zero => None,
        };
        let a = chain_a.advance(&renoised, t, t - 1, false, sched, stream(chain_a))?;
        c = if mask.any() {
            let b = chain_b.advance(&renoised, t, t - 1, false, sched, stream(chain_b))?;
            masked_combine(&a, &b, mask)?
        } else {
            a
        };
    }
    Ok(c)
}

/// Latent guiding chain B for block `block`.
fn chain_b_code(
    mode: &ManipulationMode,
    za: &LatentCode,
    zb: Option<&LatentCode>,
    block: usize,
) -> Result<Option<LatentCode>> {
    let need_b = || zb.ok_or_else(|| Error::InvalidArgument("this mode needs a second latent code".into()));
    Ok(match mode {
        ManipulationMode::Replacement => Some(need_b()?.clone()),
        ManipulationMode::PartInterpolation { alphas } => {
            let alpha = if alphas.len() == 1 { alphas[0] } else { alphas[block] };
            Some(interpolate_latent(za, need_b()?, alpha)?)
        }
        ManipulationMode::Regeneration => None,
        ManipulationMode::WholeInterpolation { .. } => unreachable!(),
    })
}

/// Runs the two-chain manipulation and returns the final coarse volume of
/// chain A.
///
/// Both chains start from the shared initial noise and draw step noise from
/// their own streams. After every `delta_t` ancestral steps (ending at step
/// `s`), chain A is replaced by the masked combination of both chains and,
/// when `s + 1 < T`, harmonized around step `s + 1`; chain B keeps its own
/// trajectory. Blocks where chain B is guided by `z_A` itself skip the
/// combination, so an all-false mask or `z_B == z_A` reproduces plain
/// conditional sampling bit for bit.
pub fn manipulate(
    za: &LatentCode,
    zb: Option<&LatentCode>,
    plan: &ManipulationPlan,
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
    dims: Dims,
    seed: u64,
) -> Result<Volume3> {
    plan.validate(sched, dims)?;
    if let ManipulationMode::WholeInterpolation { alpha } = plan.mode {
        let zb = zb.ok_or_else(|| Error::InvalidArgument("interpolation needs a second latent code".into()))?;
        let z = interpolate_latent(za, zb, alpha)?;
        return sample(denoiser, sched, dims, seed, Some(&z), None);
    }
    let blocks = sched.steps() / plan.delta_t;
    // A block whose chain B is guided exactly like chain A changes nothing.
    let codes = if plan.mask.any() {
        (0..blocks)
            .map(|k| chain_b_code(&plan.mode, za, zb, k))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let mixes: Vec<bool> = codes.iter().map(|c| c.as_ref() != Some(za)).collect();
    let run_b = mixes.iter().any(|&m| m);
    let chain_a = Chain::new(denoiser, Some(za), CHAIN_A);
    let mut a = initial_noise(seed, dims)?;
    let mut b = a.clone();
    let mut t = sched.steps();
    let mut block = 0;
    while t > 0 {
        let s = t - plan.delta_t;
        let zb_block = if run_b { codes[block].clone() } else { None };
        let chain_b = Chain::new(denoiser, zb_block.as_ref(), CHAIN_B);
        for step in (s + 1..=t).rev() {
            a = chain_a.advance(&a, step, step - 1, false, sched, Some(chain_a.step_stream(seed, step)))?;
            if run_b {
                b = chain_b.advance(&b, step, step - 1, false, sched, Some(chain_b.step_stream(seed, step)))?;
            }
        }
        if run_b && mixes[block] {
            a = masked_combine(&a, &b, &plan.mask)?;
            if s + 1 < sched.steps() && plan.harmonize_repeats > 0 {
                a = harmonize(
                    &a,
                    s + 1,
                    &plan.mask,
                    plan.harmonize_repeats,
                    &chain_a,
                    &chain_b,
                    sched,
                    NoiseMode::Seeded(seed),
                )?;
            }
        }
        t = s;
        block += 1;
    }
    require_finite(&a, "manipulation")?;
    Ok(a)
}

/// Direct masked replacement of final coarse volumes, for comparison.
pub fn naive_mix_baseline(c0_a: &Volume3, c0_b: &Volume3, mask: &RegionMask3) -> Result<Volume3> {
    masked_combine(c0_a, c0_b, mask)
}
