use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::emd::emd_approx;
use super::pointset::{chamfer, chamfer_indexed, nn_index, PointSet};

/// Pairwise distance used inside the set metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseMetric {
    Chamfer,
    Emd,
}

impl BaseMetric {
    pub fn eval(self, p: &PointSet, q: &PointSet) -> Result<f64> {
        match self {
            BaseMetric::Chamfer => Ok(chamfer(p, q)),
            BaseMetric::Emd => emd_approx(p, q),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetMetrics {
    /// Fraction of reference shapes that are the nearest reference of some
    /// generated shape.
    pub cov: f64,
    /// Mean over reference shapes of the distance to the closest generated one.
    pub mmd: f64,
    /// Leave-one-out 1-nearest-neighbor accuracy on the labeled union.
    pub nna: f64,
}

/// Row-major `a.len() x b.len()` distance matrix, evaluated in parallel.
pub fn distance_matrix(a: &[PointSet], b: &[PointSet], metric: BaseMetric) -> Result<Vec<f64>> {
    let nb = b.len();
    match metric {
        BaseMetric::Chamfer => {
            let ai: Vec<_> = a.par_iter().map(nn_index).collect();
            let bi: Vec<_> = b.par_iter().map(nn_index).collect();
            Ok((0..a.len() * nb)
                .into_par_iter()
                .map(|idx| chamfer_indexed(&a[idx / nb], &ai[idx / nb], &b[idx % nb], &bi[idx % nb]))
                .collect())
        }
        BaseMetric::Emd => (0..a.len() * nb)
            .into_par_iter()
            .map(|idx| metric.eval(&a[idx / nb], &b[idx % nb]))
            .collect(),
    }
}

/// Index of the smallest value; the lowest index wins ties.
fn argmin(values: impl Iterator<Item = f64>) -> Option<(usize, f64)> {
    values.enumerate().fold(None, |best, (i, v)| match best {
        Some((_, b)) if b <= v => best,
        _ => Some((i, v)),
    })
}

/// COV, MMD and 1-NNA of `generated` against `reference`.
///
/// In 1-NNA the union is ordered generated first, and a tie between
/// neighbors goes to the lower union index.
pub fn set_metrics(generated: &[PointSet], reference: &[PointSet], metric: BaseMetric) -> Result<SetMetrics> {
    if generated.is_empty() || reference.is_empty() {
        return Err(Error::InvalidArgument(
            "set metrics need nonempty generated and reference lists".into(),
        ));
    }
    let (ng, nr) = (generated.len(), reference.len());
    let gr = distance_matrix(generated, reference, metric)?;
    let gg = distance_matrix(generated, generated, metric)?;
    let rr = distance_matrix(reference, reference, metric)?;
    let mut covered = vec![false; nr];
    for g in 0..ng {
        let (r, _) = argmin((0..nr).map(|r| gr[g * nr + r])).unwrap();
        covered[r] = true;
    }
    let cov = covered.iter().filter(|&&c| c).count() as f64 / nr as f64;
    let mmd = (0..nr)
        .map(|r| (0..ng).map(|g| gr[g * nr + r]).fold(f64::INFINITY, f64::min))
        .sum::<f64>()
        / nr as f64;
    // Union distance with index u < ng for generated.
    let d = |u: usize, w: usize| match (u < ng, w < ng) {
        (true, true) => gg[u * ng + w],
        (true, false) => gr[u * nr + (w - ng)],
        (false, true) => gr[w * nr + (u - ng)],
        (false, false) => rr[(u - ng) * nr + (w - ng)],
    };
    let total = ng + nr;
    let mut correct = 0usize;
    for u in 0..total {
        let nearest = argmin((0..total).map(|w| if w == u { f64::INFINITY } else { d(u, w) }));
        if let Some((w, dist)) = nearest {
            if dist.is_finite() && (w < ng) == (u < ng) {
                correct += 1;
            }
        }
    }
    Ok(SetMetrics {
        cov,
        mmd,
        nna: correct as f64 / total as f64,
    })
}
