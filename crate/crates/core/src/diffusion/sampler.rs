use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::conditioning::LatentCode;
use crate::error::{Error, Result};
use crate::grid::{Dims, Volume3};

use super::denoiser::Denoiser;
use super::rng::{normal_volume, StreamId, StreamTag, CHAIN_A};
use super::schedule::NoiseSchedule;

/// Forward corruption `sqrt(abar_t) c0 + sqrt(1 - abar_t) eps`.
pub fn q_sample(c0: &Volume3, t: usize, eps: &Volume3, sched: &NoiseSchedule) -> Result<Volume3> {
    sched.check_step(t)?;
    let ab = sched.alpha_bar(t);
    let (s, r) = (ab.sqrt(), (1.0 - ab).sqrt());
    c0.zip_map(eps, |c, e| s * c + r * e)
}

/// Inverse of [`q_sample`] for a known noise volume.
pub fn predict_x0(c_t: &Volume3, t: usize, eps: &Volume3, sched: &NoiseSchedule) -> Result<Volume3> {
    let ab = sched.alpha_bar(t);
    let (s, r) = (ab.sqrt(), (1.0 - ab).sqrt());
    c_t.zip_map(eps, |c, e| (c - r * e) / s)
}

/// Ancestral step from `t` to `t - 1`.
///
/// The mean is `(c_t - beta_t / sqrt(1 - abar_t) eps_hat) / sqrt(alpha_t)`;
/// the schedule's `sigma(t)` is the step variance, so `noise` is scaled by
/// its square root. `noise` is ignored at `t = 1`.
pub fn p_step(c_t: &Volume3, t: usize, eps_hat: &Volume3, noise: &Volume3, sched: &NoiseSchedule) -> Result<Volume3> {
    sched.check_step(t)?;
    c_t.require_same_dims(eps_hat)?;
    let coef = sched.beta(t) / (1.0 - sched.alpha_bar(t)).sqrt();
    let inv = 1.0 / sched.alpha(t).sqrt();
    let mean = c_t.zip_map(eps_hat, |c, e| inv * (c - coef * e))?;
    if t == 1 {
        return Ok(mean);
    }
    let std = sched.sigma(t).sqrt();
    mean.zip_map(noise, |m, n| m + std * n)
}

/// Deterministic implicit step from `t` to an earlier step `s` (`s = 0` is
/// the clean estimate).
pub fn ddim_step(c_t: &Volume3, t: usize, s: usize, eps_hat: &Volume3, sched: &NoiseSchedule) -> Result<Volume3> {
    sched.check_step(t)?;
    if s >= t {
        return Err(Error::InvalidArgument(format!(
            "implicit step must go backwards, got {t} -> {s}"
        )));
    }
    let x0 = predict_x0(c_t, t, eps_hat, sched)?;
    let ab = sched.alpha_bar(s);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    x0.zip_map(eps_hat, |x, e| a * x + b * e)
}

/// Evenly spaced descending subset of `count` steps ending at 1.
///
/// For `T = 1000, count = 100` this is `991, 981, ..., 11, 1`.
pub fn default_subset(steps: usize, count: usize) -> Result<Vec<usize>> {
    if count == 0 || count > steps {
        return Err(Error::InvalidArgument(format!(
            "subset size {count} outside 1..={steps}"
        )));
    }
    let stride = steps / count;
    Ok((0..count).rev().map(|k| 1 + k * stride).collect())
}

/// Ordered reverse steps plus the update rule between them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepPlan {
    steps: Vec<usize>,
    implicit: bool,
}

impl StepPlan {
    /// All `T` ancestral steps.
    pub fn ancestral(sched: &NoiseSchedule) -> Self {
        Self {
            steps: (1..=sched.steps()).rev().collect(),
            implicit: false,
        }
    }

    /// Implicit (`eta = 0`) steps over a strictly decreasing subset of
    /// `T..=1` that contains 1.
    pub fn implicit(subset: &[usize], sched: &NoiseSchedule) -> Result<Self> {
        if subset.is_empty() {
            return Err(Error::InvalidArgument("empty step subset".into()));
        }
        if subset.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidArgument("step subset must be strictly decreasing".into()));
        }
        if subset[0] > sched.steps() {
            return Err(Error::InvalidArgument(format!(
                "step {} exceeds T = {}",
                subset[0],
                sched.steps()
            )));
        }
        if *subset.last().unwrap() != 1 {
            return Err(Error::InvalidArgument("step subset must end at 1".into()));
        }
        Ok(Self {
            steps: subset.to_vec(),
            implicit: true,
        })
    }

    pub fn from_subset(subset: Option<&[usize]>, sched: &NoiseSchedule) -> Result<Self> {
        match subset {
            None => Ok(Self::ancestral(sched)),
            Some(s) => Self::implicit(s, sched),
        }
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn is_implicit(&self) -> bool {
        self.implicit
    }

    /// `(t, next)` pairs; the last pair ends at 0.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.steps
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, self.steps.get(i + 1).copied().unwrap_or(0)))
    }
}

/// One denoising chain: a denoiser, its condition and its noise stream id.
#[derive(Clone, Copy)]
pub struct Chain<'a> {
    pub denoiser: &'a dyn Denoiser,
    pub z: Option<&'a LatentCode>,
    pub id: u64,
}

impl<'a> Chain<'a> {
    pub fn new(denoiser: &'a dyn Denoiser, z: Option<&'a LatentCode>, id: u64) -> Self {
        Self { denoiser, z, id }
    }

    /// Advances `c_t` from `t` to `next` under the given rule. Ancestral
    /// noise is drawn from `noise`; `None` injects zero noise.
    pub fn advance(
        &self,
        c_t: &Volume3,
        t: usize,
        next: usize,
        implicit: bool,
        sched: &NoiseSchedule,
        noise: Option<StreamId>,
    ) -> Result<Volume3> {
        let eps = self.denoiser.predict_eps(c_t, t, self.z, sched)?;
        if eps.dims() != c_t.dims() {
            return Err(Error::ShapeMismatch("denoiser changed volume dims".into()));
        }
        if implicit {
            return ddim_step(c_t, t, next, &eps, sched);
        }
        if next + 1 != t {
            return Err(Error::InvalidArgument(format!(
                "ancestral step must go {t} -> {}",
                t - 1
            )));
        }
        let noise = match noise {
            Some(id) if t > 1 => normal_volume(id, c_t.dims())?,
            _ => c_t.map(|_| 0.0),
        };
        p_step(c_t, t, &eps, &noise, sched)
    }

    /// The chain's own step-noise stream for step `t`.
    pub fn step_stream(&self, seed: u64, t: usize) -> StreamId {
        StreamId::new(seed, self.id, t as u64, StreamTag::StepNoise)
    }
}

/// Initial noise `C_T`, shared by every chain of a run.
pub fn initial_noise(seed: u64, dims: Dims) -> Result<Volume3> {
    normal_volume(StreamId::new(seed, CHAIN_A, 0, StreamTag::InitialNoise), dims)
}

pub(crate) fn require_finite(v: &Volume3, what: &str) -> Result<()> {
    if v.values().iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("{what} produced non-finite values")))
    }
}

/// Runs a full reverse chain from Gaussian noise.
///
/// Without a subset all `T` ancestral steps run; with one, implicit updates
/// run between consecutive subset steps.
pub fn sample(
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
    dims: Dims,
    seed: u64,
    z: Option<&LatentCode>,
    step_subset: Option<&[usize]>,
) -> Result<Volume3> {
    let plan = StepPlan::from_subset(step_subset, sched)?;
    sample_with_plan(denoiser, sched, dims, seed, z, &plan)
}

pub fn sample_with_plan(
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
    dims: Dims,
    seed: u64,
    z: Option<&LatentCode>,
    plan: &StepPlan,
) -> Result<Volume3> {
    let chain = Chain::new(denoiser, z, CHAIN_A);
    let mut c = initial_noise(seed, dims)?;
    for (t, next) in plan.transitions() {
        c = chain.advance(&c, t, next, plan.is_implicit(), sched, Some(chain.step_stream(seed, t)))?;
    }
    require_finite(&c, "sampling")?;
    Ok(c)
}

/// Voxel-mean `|eps - eps_theta(q_sample(c0, t, eps), t, z)|^2` at a fixed
/// `(t, eps)`.
pub fn training_loss_at(
    denoiser: &dyn Denoiser,
    c0: &Volume3,
    sched: &NoiseSchedule,
    t: usize,
    eps: &Volume3,
    z: Option<&LatentCode>,
) -> Result<f64> {
    let ct = q_sample(c0, t, eps, sched)?;
    let pred = denoiser.predict_eps(&ct, t, z, sched)?;
    Ok(pred.sub(eps)?.sum_sq() / c0.len() as f64)
}

/// Training objective with `t ~ U{1..T}` and `eps ~ N(0, I)` drawn from `rng`.
pub fn training_loss<R: Rng + ?Sized>(
    denoiser: &dyn Denoiser,
    c0: &Volume3,
    sched: &NoiseSchedule,
    rng: &mut R,
    z: Option<&LatentCode>,
) -> Result<f64> {
    let (t, eps) = draw_training_pair(c0, sched, rng)?;
    training_loss_at(denoiser, c0, sched, t, &eps, z)
}

pub fn draw_training_pair<R: Rng + ?Sized>(
    c0: &Volume3,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<(usize, Volume3)> {
    let t = rng.gen_range(1..=sched.steps());
    let eps: Vec<f64> = (0..c0.len()).map(|_| StandardNormal.sample(rng)).collect();
    Ok((t, c0.with_values(eps)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::denoiser::ZeroDenoiser;
    use crate::diffusion::oracle::GaussianMixtureOracle;

    fn vol(seed: u64, dims: Dims) -> Volume3 {
        normal_volume(StreamId::new(seed, 5, 0, StreamTag::Misc), dims).unwrap()
    }

    struct EchoDenoiser(Volume3);

    impl Denoiser for EchoDenoiser {
        fn predict_eps(&self, _: &Volume3, _: usize, _: Option<&LatentCode>, _: &NoiseSchedule) -> Result<Volume3> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn q_sample_edges() {
        let s = NoiseSchedule::default();
        let c0 = vol(1, [4, 4, 4]);
        let zero = Volume3::zeros([4, 4, 4]).unwrap();
        let out = q_sample(&c0, 10, &zero, &s).unwrap();
        assert_eq!(out, c0.scale(s.alpha_bar(10).sqrt()));
        let eps = vol(2, [4, 4, 4]);
        let out = q_sample(&c0, 1000, &eps, &s).unwrap();
        let bound = s.alpha_bar(1000).sqrt() * c0.max_abs() + (1.0 - (1.0 - s.alpha_bar(1000)).sqrt()) * eps.max_abs();
        assert!(out.max_abs_diff(&eps).unwrap() <= bound + 1e-15);
        assert!(q_sample(&c0, 0, &eps, &s).is_err());
        assert!(q_sample(&c0, 1001, &eps, &s).is_err());
        assert!(q_sample(&c0, 5, &Volume3::zeros([4, 4, 5]).unwrap(), &s).is_err());
    }

    #[test]
    fn q_sample_variance() {
        let s = NoiseSchedule::default();
        let c0 = Volume3::filled([2, 2, 2], 0.3).unwrap();
        let n = 10_000;
        let mut sums = [0.0f64; 8];
        let mut sq = [0.0f64; 8];
        for i in 0..n {
            let eps = vol(100 + i, [2, 2, 2]);
            let x = q_sample(&c0, 500, &eps, &s).unwrap();
            for (v, x) in x.values().iter().enumerate() {
                sums[v] += x;
                sq[v] += x * x;
            }
        }
        let want = 1.0 - s.alpha_bar(500);
        for v in 0..8 {
            let mean = sums[v] / n as f64;
            let var = sq[v] / n as f64 - mean * mean;
            assert!((var - want).abs() < 0.05 * want, "{var} vs {want}");
        }
    }

    #[test]
    fn inversion_identity() {
        let s = NoiseSchedule::default();
        let c0 = vol(3, [5, 5, 5]);
        let eps = vol(4, [5, 5, 5]);
        for t in [1, 2, 50, 500, 999, 1000] {
            let ct = q_sample(&c0, t, &eps, &s).unwrap();
            let back = predict_x0(&ct, t, &eps, &s).unwrap();
            assert!(
                back.max_abs_diff(&c0).unwrap() < 1e-10 * (1.0 / s.alpha_bar(t).sqrt()).max(1.0),
                "t={t}"
            );
        }
    }

    #[test]
    fn p_step_edges() {
        let s = NoiseSchedule::default();
        let dims = [3, 3, 3];
        let z = Volume3::zeros(dims).unwrap();
        let noise = vol(5, dims);
        assert_eq!(p_step(&z, 400, &z, &z, &s).unwrap().max_abs(), 0.0);
        let ct = vol(6, dims);
        let eh = vol(7, dims);
        let a = p_step(&ct, 1, &eh, &noise, &s).unwrap();
        let b = p_step(&ct, 1, &eh, &z, &s).unwrap();
        assert_eq!(a, b);
        // Posterior mean from the forward pair.
        let c0 = vol(8, dims);
        let t = 300;
        let ct = q_sample(&c0, t, &eh, &s).unwrap();
        let mean = p_step(&ct, t, &eh, &z, &s).unwrap();
        let (ab, abp) = (s.alpha_bar(t), s.alpha_bar(t - 1));
        let c1 = abp.sqrt() * s.beta(t) / (1.0 - ab);
        let c2 = s.alpha(t).sqrt() * (1.0 - abp) / (1.0 - ab);
        let want = c0.zip_map(&ct, |x0, xt| c1 * x0 + c2 * xt).unwrap();
        assert!(mean.max_abs_diff(&want).unwrap() < 1e-12);
    }

    #[test]
    fn noiseless_chain_with_exact_eps_returns_clean_volume() {
        let s = NoiseSchedule::default();
        let dims = [4, 3, 5];
        let c0 = vol(9, dims);
        let o = GaussianMixtureOracle::uniform(vec![c0.clone()]).unwrap();
        let eps = vol(10, dims);
        let zero = Volume3::zeros(dims).unwrap();
        let start = 800;
        let mut c = q_sample(&c0, start, &eps, &s).unwrap();
        for t in (1..=start).rev() {
            let eh = o.predict_eps(&c, t, None, &s).unwrap();
            c = p_step(&c, t, &eh, &zero, &s).unwrap();
        }
        assert!(c.max_abs_diff(&c0).unwrap() < 1e-6);
    }

    #[test]
    fn subsets() {
        let s = NoiseSchedule::default();
        let d = default_subset(1000, 100).unwrap();
        assert_eq!(d.len(), 100);
        assert_eq!((d[0], d[1], d[99]), (991, 981, 1));
        assert!(StepPlan::implicit(&d, &s).is_ok());
        assert!(StepPlan::implicit(&[10, 5], &s).is_err());
        assert!(StepPlan::implicit(&[10, 10, 1], &s).is_err());
        assert!(StepPlan::implicit(&[1001, 1], &s).is_err());
        assert!(StepPlan::implicit(&[], &s).is_err());
        assert!(default_subset(1000, 0).is_err());
        let p = StepPlan::implicit(&[7, 3, 1], &s).unwrap();
        assert_eq!(p.transitions().collect::<Vec<_>>(), vec![(7, 3), (3, 1), (1, 0)]);
    }

    #[test]
    fn sampling_is_reproducible() {
        let s = NoiseSchedule::linear(50, 1e-3, 0.2).unwrap();
        let comps = vec![vol(11, [4, 4, 4]), vol(12, [4, 4, 4])];
        let o = GaussianMixtureOracle::uniform(comps).unwrap();
        let a = sample(&o, &s, [4, 4, 4], 77, None, None).unwrap();
        let b = sample(&o, &s, [4, 4, 4], 77, None, None).unwrap();
        assert_eq!(a.values(), b.values());
        let c = sample(&o, &s, [4, 4, 4], 78, None, None).unwrap();
        assert_ne!(a.values(), c.values());
        let sub = [41, 21, 1];
        let d = sample(&o, &s, [4, 4, 4], 77, None, Some(&sub)).unwrap();
        assert_eq!(
            d.values(),
            sample(&o, &s, [4, 4, 4], 77, None, Some(&sub)).unwrap().values()
        );
    }

    #[test]
    fn single_mode_ddpm_and_ddim_agree() {
        let s = NoiseSchedule::default();
        let dims = [6, 6, 6];
        let x = vol(13, dims).scale(0.1);
        let o = GaussianMixtureOracle::uniform(vec![x.clone()]).unwrap();
        let a = sample(&o, &s, dims, 1, None, None).unwrap();
        let sub = default_subset(1000, 100).unwrap();
        let b = sample(&o, &s, dims, 1, None, Some(&sub)).unwrap();
        assert!(a.max_abs_diff(&x).unwrap() < 1e-3);
        assert!(a.max_abs_diff(&b).unwrap() < 1e-3);
    }

    #[test]
    fn training_loss_cases() {
        let s = NoiseSchedule::default();
        let dims = [6, 6, 6];
        let c0 = vol(14, dims);
        let eps = vol(15, dims);
        let echo = EchoDenoiser(eps.clone());
        assert_eq!(training_loss_at(&echo, &c0, &s, 123, &eps, None).unwrap(), 0.0);
        let zero_loss = training_loss_at(&ZeroDenoiser, &c0, &s, 123, &eps, None).unwrap();
        assert!((zero_loss - eps.sum_sq() / eps.len() as f64).abs() < 1e-15);

        let mut rng = StreamId::new(3, 0, 0, StreamTag::Training).rng();
        let mut acc = 0.0;
        for _ in 0..50 {
            acc += training_loss(&ZeroDenoiser, &c0, &s, &mut rng, None).unwrap();
        }
        assert!((acc / 50.0 - 1.0).abs() < 0.03);

        let own = GaussianMixtureOracle::uniform(vec![c0.clone()]).unwrap();
        let other = GaussianMixtureOracle::uniform(vec![c0.map(|v| v + 0.5)]).unwrap();
        for t in [10, 500, 990] {
            let a = training_loss_at(&own, &c0, &s, t, &eps, None).unwrap();
            let b = training_loss_at(&other, &c0, &s, t, &eps, None).unwrap();
            assert!(a < b, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn ancestral_rejects_skips() {
        let s = NoiseSchedule::default();
        let c = vol(16, [2, 2, 2]);
        let chain = Chain::new(&ZeroDenoiser, None, 0);
        assert!(chain.advance(&c, 10, 8, false, &s, None).is_err());
        assert!(chain.advance(&c, 10, 10, true, &s, None).is_err());
    }
}
