use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditioning::LatentCode;
use crate::error::{Error, Result};
use crate::grid::{Dims, Volume3};
use crate::io::{read_volume, write_volume};

use super::denoiser::Denoiser;
use super::schedule::NoiseSchedule;

/// Closed-form Bayes noise predictor for a finite set of clean volumes.
///
/// With clean data drawn from `sum_k pi_k delta(X_k)`, the posterior over
/// components given `C_t` is a softmax of
/// `log pi_k - |C_t - sqrt(abar_t) X_k|^2 / (2 (1 - abar_t))`, optionally
/// sharpened by `-|z - a_k|^2 / (2 tau^2)` when latent anchors are attached.
#[derive(Debug, Clone)]
pub struct GaussianMixtureOracle {
    weights: Vec<f64>,
    components: Vec<Volume3>,
    anchors: Option<Vec<LatentCode>>,
    tau: f64,
}

impl GaussianMixtureOracle {
    /// Positive weights are normalized to sum to one.
    pub fn new(weights: Vec<f64>, components: Vec<Volume3>) -> Result<Self> {
        if components.is_empty() || weights.len() != components.len() {
            return Err(Error::InvalidArgument(format!(
                "need one weight per component, got {} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument("mixture weights must be positive".into()));
        }
        let dims = components[0].dims();
        for c in &components[1..] {
            if c.dims() != dims {
                return Err(Error::ShapeMismatch(format!(
                    "component dims {:?} != {dims:?}",
                    c.dims()
                )));
            }
        }
        let total: f64 = weights.iter().sum();
        Ok(Self {
            weights: weights.iter().map(|w| w / total).collect(),
            components,
            anchors: None,
            tau: 1.0,
        })
    }

    pub fn uniform(components: Vec<Volume3>) -> Result<Self> {
        let n = components.len();
        Self::new(vec![1.0; n], components)
    }

    pub fn with_anchors(mut self, anchors: Vec<LatentCode>, tau: f64) -> Result<Self> {
        if anchors.len() != self.components.len() {
            return Err(Error::InvalidArgument(format!(
                "{} anchors for {} components",
                anchors.len(),
                self.components.len()
            )));
        }
        let len = anchors[0].len();
        for a in &anchors {
            a.require_len(len)?;
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
        }
        self.anchors = Some(anchors);
        self.tau = tau;
        Ok(self)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Volume3] {
        &self.components
    }

    pub fn anchors(&self) -> Option<&[LatentCode]> {
        self.anchors.as_deref()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dims(&self) -> Dims {
        self.components[0].dims()
    }

    fn check_input(&self, c_t: &Volume3) -> Result<()> {
        if c_t.dims() != self.dims() {
            return Err(Error::ShapeMismatch(format!(
                "input dims {:?} != oracle dims {:?}",
                c_t.dims(),
                self.dims()
            )));
        }
        Ok(())
    }

    fn latent_terms(&self, z: Option<&LatentCode>) -> Result<Vec<f64>> {
        let k = self.components.len();
        match (z, &self.anchors) {
            (None, _) => Ok(vec![0.0; k]),
            (Some(_), None) => Err(Error::InvalidArgument("oracle has no latent anchors".into())),
            (Some(z), Some(anchors)) => anchors
                .iter()
                .map(|a| Ok(-z.distance_sq(a)? / (2.0 * self.tau * self.tau)))
                .collect(),
        }
    }

    /// Posterior component probabilities given `c_t` (and `z`).
    pub fn posterior_weights(
        &self,
        c_t: &Volume3,
        t: usize,
        z: Option<&LatentCode>,
        sched: &NoiseSchedule,
    ) -> Result<Vec<f64>> {
        self.check_input(c_t)?;
        let ab = sched.alpha_bar(t);
        let latent = self.latent_terms(z)?;
        let k = self.components.len();
        if t == 0 || ab >= 1.0 {
            // No noise: fall back to prior times latent term.
            return Ok(softmax(
                &(0..k).map(|i| self.weights[i].ln() + latent[i]).collect::<Vec<_>>(),
            ));
        }
        let s = ab.sqrt();
        let var = 1.0 - ab;
        let logits: Vec<f64> = self
            .components
            .par_iter()
            .zip(self.weights.par_iter())
            .zip(latent.par_iter())
            .map(|((x, w), l)| {
                let d2: f64 = c_t
                    .values()
                    .iter()
                    .zip(x.values())
                    .map(|(c, x)| (c - s * x) * (c - s * x))
                    .sum();
                w.ln() - d2 / (2.0 * var) + l
            })
            .collect();
        Ok(softmax(&logits))
    }

    /// Posterior mean of the clean volume.
    pub fn posterior_mean(&self, weights: &[f64]) -> Vec<f64> {
        let n = self.components[0].len();
        let mut m = vec![0.0; n];
        for (w, x) in weights.iter().zip(&self.components) {
            if *w == 0.0 {
                continue;
            }
            m.par_iter_mut()
                .zip(x.values().par_iter())
                .for_each(|(m, x)| *m += w * x);
        }
        m
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|v| v / total).collect()
}

/// Noise prediction of the oracle; zero when `t = 0` or `abar_t = 1`.
pub fn oracle_predict_eps(
    o: &GaussianMixtureOracle,
    c_t: &Volume3,
    t: usize,
    z: Option<&LatentCode>,
    sched: &NoiseSchedule,
) -> Result<Volume3> {
    o.check_input(c_t)?;
    let ab = sched.alpha_bar(t);
    if t == 0 || ab >= 1.0 {
        return Ok(c_t.map(|_| 0.0));
    }
    let w = o.posterior_weights(c_t, t, z, sched)?;
    let m = o.posterior_mean(&w);
    let (s, r) = (ab.sqrt(), (1.0 - ab).sqrt());
    let eps = c_t.values().iter().zip(&m).map(|(c, m)| (c - s * m) / r).collect();
    c_t.with_values(eps)
}

impl Denoiser for GaussianMixtureOracle {
    fn predict_eps(&self, c_t: &Volume3, t: usize, z: Option<&LatentCode>, sched: &NoiseSchedule) -> Result<Volume3> {
        oracle_predict_eps(self, c_t, t, z, sched)
    }

    fn latent_len(&self) -> Option<usize> {
        self.anchors.as_ref().map(|a| a[0].len())
    }

    fn predict_eps_grad_z(
        &self,
        c_t: &Volume3,
        t: usize,
        z: &LatentCode,
        eps: &Volume3,
        sched: &NoiseSchedule,
    ) -> Option<Result<Vec<f64>>> {
        let anchors = self.anchors.as_ref()?;
        Some((|| {
            c_t.require_same_dims(eps)?;
            z.require_len(anchors[0].len())?;
            let ab = sched.alpha_bar(t);
            if t == 0 || ab >= 1.0 {
                return Ok(vec![0.0; z.len()]);
            }
            let w = self.posterior_weights(c_t, t, Some(z), sched)?;
            let eps_hat = oracle_predict_eps(self, c_t, t, Some(z), sched)?;
            let resid: Vec<f64> = eps_hat.values().iter().zip(eps.values()).map(|(a, b)| a - b).collect();
            // s_k = <r, X_k>
            let s: Vec<f64> = self
                .components
                .par_iter()
                .map(|x| resid.iter().zip(x.values()).map(|(r, x)| r * x).sum())
                .collect();
            let tau2 = self.tau * self.tau;
            let g = |k: usize, i: usize| -(z.values()[i] - anchors[k].values()[i]) / tau2;
            let coef = 2.0 / c_t.len() as f64 * (-ab.sqrt() / (1.0 - ab).sqrt());
            let grad = (0..z.len())
                .map(|i| {
                    let gbar: f64 = (0..w.len()).map(|k| w[k] * g(k, i)).sum();
                    coef * (0..w.len()).map(|k| s[k] * w[k] * (g(k, i) - gbar)).sum::<f64>()
                })
                .collect();
            Ok(grad)
        })())
    }
}

/// On-disk corpus: `manifest.json` plus one WSV1 volume per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub components: Vec<String>,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub anchors: Option<Vec<LatentCode>>,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_tau() -> f64 {
    1.0
}

pub const CORPUS_MANIFEST: &str = "manifest.json";

impl GaussianMixtureOracle {
    pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(CORPUS_MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: CorpusManifest = serde_json::from_str(&text)?;
        let comps = m
            .components
            .iter()
            .map(|c| read_volume(dir.join(c)))
            .collect::<Result<Vec<_>>>()?;
        let o = Self::new(m.weights, comps)?;
        match m.anchors {
            Some(a) => o.with_anchors(a, m.tau),
            None => Ok(o),
        }
    }

    /// Writes `c000.wsv`, `c001.wsv`, ... and the manifest.
    pub fn save_corpus(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut names = Vec::new();
        for (i, c) in self.components.iter().enumerate() {
            let name = format!("c{i:03}.wsv");
            write_volume(dir.join(&name), c)?;
            names.push(name);
        }
        let m = CorpusManifest {
            components: names,
            weights: self.weights.clone(),
            anchors: self.anchors.clone(),
            tau: self.tau,
        };
        let path = dir.join(CORPUS_MANIFEST);
        std::fs::write(&path, serde_json::to_string_pretty(&m)? + "\n").map_err(|e| Error::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::q_sample;
    use crate::diffusion::rng::{normal_volume, StreamId, StreamTag};

    fn vol(seed: u64, dims: Dims) -> Volume3 {
        normal_volume(StreamId::new(seed, 9, 0, StreamTag::Misc), dims).unwrap()
    }

    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    /// Squared distance with compensated accumulation.
    fn dd_dist2(c: &[f64], x: &[f64], s: f64) -> f64 {
        let (mut hi, mut lo) = (0.0, 0.0);
        for (c, x) in c.iter().zip(x) {
            let d = c - s * x;
            let p = d * d;
            let pe = d.mul_add(d, -p);
            let (h, e) = two_sum(hi, p);
            hi = h;
            lo += e + pe;
        }
        hi + lo
    }

    #[test]
    fn single_component_recovers_true_noise() {
        let sched = NoiseSchedule::default();
        let x = vol(1, [6, 5, 4]);
        let o = GaussianMixtureOracle::uniform(vec![x.clone()]).unwrap();
        let eps = vol(2, [6, 5, 4]);
        for t in [1, 10, 500, 1000] {
            let ct = q_sample(&x, t, &eps, &sched).unwrap();
            let got = o.predict_eps(&ct, t, None, &sched).unwrap();
            assert!(
                got.max_abs_diff(&eps).unwrap() < 1e-9 / (1.0 - sched.alpha_bar(t)).sqrt(),
                "t={t}"
            );
        }
    }

    #[test]
    fn symmetric_point_gives_midpoint_mean() {
        let sched = NoiseSchedule::default();
        let dims = [4, 4, 4];
        let x1 = vol(3, dims);
        let x2 = x1.scale(-1.0);
        let o = GaussianMixtureOracle::uniform(vec![x1.clone(), x2.clone()]).unwrap();
        // Zero is equidistant from +sX and -sX.
        let ct = Volume3::zeros(dims).unwrap();
        let w = o.posterior_weights(&ct, 300, None, &sched).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
        let m = o.posterior_mean(&w);
        assert!(m.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn weights_match_compensated_bayes() {
        let sched = NoiseSchedule::default();
        let dims = [8, 8, 8];
        let comps: Vec<Volume3> = (0..3).map(|i| vol(10 + i, dims).scale(0.1)).collect();
        let anchors: Vec<LatentCode> = (0..3)
            .map(|i| LatentCode::new(vec![i as f64 * 0.3, 1.0 - i as f64 * 0.2]).unwrap())
            .collect();
        let prior = vec![0.2, 0.5, 0.3];
        let o = GaussianMixtureOracle::new(prior.clone(), comps.clone())
            .unwrap()
            .with_anchors(anchors.clone(), 0.7)
            .unwrap();
        let z = LatentCode::new(vec![0.25, 0.8]).unwrap();
        for t in [5, 60, 400, 990] {
            let ct = q_sample(&comps[1], t, &vol(20 + t as u64, dims), &sched).unwrap();
            let got = o.posterior_weights(&ct, t, Some(&z), &sched).unwrap();
            let ab = sched.alpha_bar(t);
            let logits: Vec<f64> = (0..3)
                .map(|k| {
                    prior[k].ln()
                        - dd_dist2(ct.values(), comps[k].values(), ab.sqrt()) / (2.0 * (1.0 - ab))
                        - z.distance_sq(&anchors[k]).unwrap() / (2.0 * 0.49)
                })
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            for k in 0..3 {
                let want = (logits[k] - lse).exp();
                assert!((got[k] - want).abs() < 1e-10, "t={t} k={k}: {} vs {want}", got[k]);
            }
        }
    }

    #[test]
    fn large_volumes_do_not_underflow() {
        let sched = NoiseSchedule::default();
        let dims = [64, 64, 64];
        let a = Volume3::filled(dims, 0.1).unwrap();
        let b = Volume3::filled(dims, -0.1).unwrap();
        let o = GaussianMixtureOracle::uniform(vec![a.clone(), b]).unwrap();
        let w = o.posterior_weights(&a, 1, None, &sched).unwrap();
        assert_eq!(w[0], 1.0);
        assert!(w.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_noise_edge() {
        let sched = NoiseSchedule::default();
        let x = vol(4, [3, 3, 3]);
        let o = GaussianMixtureOracle::uniform(vec![x.clone()]).unwrap();
        assert_eq!(oracle_predict_eps(&o, &x, 0, None, &sched).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn small_tau_selects_anchor() {
        let sched = NoiseSchedule::default();
        let dims = [8, 8, 8];
        let comps: Vec<Volume3> = (0..2)
            .map(|i| Volume3::filled(dims, 0.1 - 0.2 * i as f64).unwrap())
            .collect();
        let anchors = vec![
            LatentCode::new(vec![1.0, 0.0]).unwrap(),
            LatentCode::new(vec![0.0, 1.0]).unwrap(),
        ];
        let o = GaussianMixtureOracle::uniform(comps.clone())
            .unwrap()
            .with_anchors(anchors.clone(), 1e-3)
            .unwrap();
        for t in (1..=500).step_by(37) {
            // Noisy version of component 0, conditioned on anchor 1.
            let ct = q_sample(&comps[0], t, &vol(t as u64, dims), &sched).unwrap();
            let w = o.posterior_weights(&ct, t, Some(&anchors[1]), &sched).unwrap();
            assert!(w[1] > w[0], "t={t}");
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let sched = NoiseSchedule::default();
        let dims = [5, 4, 3];
        let comps: Vec<Volume3> = (0..3).map(|i| vol(40 + i, dims).scale(0.3)).collect();
        let anchors: Vec<LatentCode> = (0..3)
            .map(|i| LatentCode::new(vec![(i as f64).sin(), (i as f64).cos(), 0.1 * i as f64]).unwrap())
            .collect();
        let o = GaussianMixtureOracle::uniform(comps.clone())
            .unwrap()
            .with_anchors(anchors, 0.8)
            .unwrap();
        let eps = vol(50, dims);
        let t = 700;
        let ct = q_sample(&comps[2], t, &eps, &sched).unwrap();
        let z = LatentCode::new(vec![0.3, 0.2, -0.1]).unwrap();
        let loss = |z: &LatentCode| {
            let e = o.predict_eps(&ct, t, Some(z), &sched).unwrap();
            e.sub(&eps).unwrap().sum_sq() / e.len() as f64
        };
        let g = o.predict_eps_grad_z(&ct, t, &z, &eps, &sched).unwrap().unwrap();
        for i in 0..3 {
            let h = 1e-5;
            let mut up = z.values().to_vec();
            let mut dn = z.values().to_vec();
            up[i] += h;
            dn[i] -= h;
            let fd = (loss(&LatentCode::new(up).unwrap()) - loss(&LatentCode::new(dn).unwrap())) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn validation() {
        let a = Volume3::zeros([2, 2, 2]).unwrap();
        let b = Volume3::zeros([2, 2, 3]).unwrap();
        assert!(GaussianMixtureOracle::uniform(vec![a.clone(), b.clone()]).is_err());
        assert!(GaussianMixtureOracle::new(vec![1.0, 0.0], vec![a.clone(), a.clone()]).is_err());
        assert!(GaussianMixtureOracle::uniform(vec![]).is_err());
        let o = GaussianMixtureOracle::new(vec![2.0, 6.0], vec![a.clone(), a.clone()]).unwrap();
        assert_eq!(o.weights(), &[0.25, 0.75]);
        let sched = NoiseSchedule::default();
        assert!(o.predict_eps(&b, 3, None, &sched).is_err());
        let z = LatentCode::new(vec![0.0]).unwrap();
        assert!(o.predict_eps(&a, 3, Some(&z), &sched).is_err());
        assert!(o.clone().with_anchors(vec![z.clone()], 1.0).is_err());
        assert!(o.with_anchors(vec![z.clone(), z], 0.0).is_err());
    }

    #[test]
    fn corpus_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let comps: Vec<Volume3> = (0..2).map(|i| vol(60 + i, [4, 4, 4])).collect();
        let anchors = vec![
            LatentCode::new(vec![1.0, 2.0]).unwrap(),
            LatentCode::new(vec![3.0, 4.0]).unwrap(),
        ];
        let o = GaussianMixtureOracle::new(vec![0.3, 0.7], comps)
            .unwrap()
            .with_anchors(anchors, 0.5)
            .unwrap();
        o.save_corpus(dir.path()).unwrap();
        let back = GaussianMixtureOracle::load_corpus(dir.path()).unwrap();
        assert_eq!(back.weights(), o.weights());
        assert_eq!(back.anchors(), o.anchors());
        assert_eq!(back.tau(), 0.5);
        for (a, b) in back.components().iter().zip(o.components()) {
            // Stored as f32.
            assert!(a.max_abs_diff(b).unwrap() < 1e-6 * (1.0 + b.max_abs()));
        }
    }
}
