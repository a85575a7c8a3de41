use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tsdf::TriangleMesh;

use super::lfd::LightField;
use super::pointset::{chamfer_indexed, nn_index, sample_surface, PointSet};

/// Distance used for retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RetrievalMetric {
    /// Chamfer distance between surface samples drawn with the same seed.
    Chamfer {
        samples: usize,
        seed: u64,
    },
    Lfd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub index: usize,
    pub distance: f64,
}

/// Sorts ascending by distance, ties by index, and keeps the first `k`.
pub fn rank(distances: &[f64], k: usize) -> Vec<Ranked> {
    let mut out: Vec<Ranked> = distances
        .iter()
        .enumerate()
        .map(|(index, &distance)| Ranked { index, distance })
        .collect();
    out.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index)));
    out.truncate(k);
    out
}

/// Distances from every query to every corpus mesh, row per query.
pub fn distance_table(
    queries: &[TriangleMesh],
    corpus: &[TriangleMesh],
    metric: RetrievalMetric,
) -> Result<Vec<Vec<f64>>> {
    match metric {
        RetrievalMetric::Chamfer { samples, seed } => {
            let prep = |ms: &[TriangleMesh]| -> Result<Vec<(PointSet, rstar::RTree<[f64; 3]>)>> {
                ms.par_iter()
                    .map(|m| {
                        let p = sample_surface(m, samples, seed)?;
                        let idx = nn_index(&p);
                        Ok((p, idx))
                    })
                    .collect()
            };
            let (q, c) = (prep(queries)?, prep(corpus)?);
            Ok(q.par_iter()
                .map(|(p, pi)| c.iter().map(|(s, si)| chamfer_indexed(p, pi, s, si)).collect())
                .collect())
        }
        RetrievalMetric::Lfd => {
            let q: Vec<LightField> = queries.par_iter().map(LightField::of).collect::<Result<_>>()?;
            let c: Vec<LightField> = corpus.par_iter().map(LightField::of).collect::<Result<_>>()?;
            Ok(q.par_iter()
                .map(|a| c.iter().map(|b| a.distance(b)).collect())
                .collect())
        }
    }
}

/// The `k` corpus meshes closest to `query`, nearest first.
pub fn retrieve_topk(
    query: &TriangleMesh,
    corpus: &[TriangleMesh],
    k: usize,
    metric: RetrievalMetric,
) -> Result<Vec<Ranked>> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("retrieval corpus is empty".into()));
    }
    let d = distance_table(std::slice::from_ref(query), corpus, metric)?;
    Ok(rank(&d[0], k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyEntry {
    pub query: usize,
    pub top: Vec<Ranked>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyReport {
    pub metric: RetrievalMetric,
    pub k: usize,
    pub entries: Vec<NoveltyEntry>,
    /// `(percent, value)` of the nearest-training distance over all queries.
    pub nearest_percentiles: Vec<(f64, f64)>,
    pub nearest_histogram: Histogram,
}

pub const NOVELTY_PERCENTILES: [f64; 7] = [0.0, 10.0, 25.0, 50.0, 75.0, 90.0, 100.0];
pub const NOVELTY_BINS: usize = 10;

/// Linear-interpolated percentile of a sorted, nonempty slice.
pub fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Equal-width histogram over `[min, max]`; the last bin is closed.
pub fn histogram(values: &[f64], bins: usize) -> Histogram {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0; bins];
    for v in values {
        counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
    }
    Histogram { edges, counts }
}

/// Top-`k` training neighbors of each generated mesh, plus the distribution
/// of each one's nearest-training distance.
pub fn novelty_report(
    generated: &[TriangleMesh],
    train: &[TriangleMesh],
    k: usize,
    metric: RetrievalMetric,
) -> Result<NoveltyReport> {
    if generated.is_empty() || train.is_empty() {
        return Err(Error::InvalidArgument(
            "novelty analysis needs generated and training meshes".into(),
        ));
    }
    let table = distance_table(generated, train, metric)?;
    let entries: Vec<NoveltyEntry> = table
        .iter()
        .enumerate()
        .map(|(query, d)| NoveltyEntry { query, top: rank(d, k) })
        .collect();
    let mut nearest: Vec<f64> = table.iter().map(|d| rank(d, 1)[0].distance).collect();
    let nearest_histogram = histogram(&nearest, NOVELTY_BINS);
    nearest.sort_by(f64::total_cmp);
    Ok(NoveltyReport {
        metric,
        k,
        entries,
        nearest_percentiles: NOVELTY_PERCENTILES
            .iter()
            .map(|&p| (p, percentile(&nearest, p)))
            .collect(),
        nearest_histogram,
    })
}
