use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rstar::RTree;

use crate::diffusion::rng::{StreamId, StreamTag};
use crate::error::{Error, Result};
use crate::tsdf::{Point3, TriangleMesh};

pub const DEFAULT_SURFACE_SAMPLES: usize = 2048;

/// Nonempty set of finite 3D points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<Point3>,
}

impl PointSet {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("point set is empty".into()));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidData("point set has non-finite coordinate".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Area-weighted uniform samples on the mesh surface.
///
/// Draws come from the `(seed, 0, 0, Surface)` stream: a triangle index by
/// area, then a uniform barycentric point via the square-root map.
pub fn sample_surface(m: &TriangleMesh, n: usize, seed: u64) -> Result<PointSet> {
    if m.is_empty() {
        return Err(Error::InvalidArgument("cannot sample an empty mesh".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let areas: Vec<f64> = (0..m.triangles.len()).map(|t| m.triangle_area(t)).collect();
    let pick = WeightedIndex::new(&areas).map_err(|e| Error::InvalidData(format!("triangle areas: {e}")))?;
    let mut rng = StreamId::new(seed, 0, 0, StreamTag::Surface).rng();
    let points = (0..n)
        .map(|_| {
            let [a, b, c] = m.triangle(pick.sample(&mut rng));
            let r1: f64 = rng.gen::<f64>().sqrt();
            let r2: f64 = rng.gen();
            let (wa, wb, wc) = (1.0 - r1, r1 * (1.0 - r2), r1 * r2);
            [0, 1, 2].map(|i| wa * a[i] + wb * b[i] + wc * c[i])
        })
        .collect();
    PointSet::new(points)
}

fn sq_dist(a: &Point3, b: &Point3) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

pub(crate) fn nn_index(p: &PointSet) -> RTree<Point3> {
    RTree::bulk_load(p.points().to_vec())
}

/// Mean squared distance from each point of `from` to its nearest in `to`.
fn one_sided(from: &PointSet, to: &RTree<Point3>) -> f64 {
    from.points()
        .iter()
        .map(|q| sq_dist(q, to.nearest_neighbor(q).expect("point sets are nonempty")))
        .sum::<f64>()
        / from.len() as f64
}

/// [`chamfer`] with prebuilt nearest-neighbor indices.
pub(crate) fn chamfer_indexed(p: &PointSet, pi: &RTree<Point3>, q: &PointSet, qi: &RTree<Point3>) -> f64 {
    one_sided(p, qi) + one_sided(q, pi)
}

/// Chamfer distance with squared point distances:
/// `mean_p min_q |p-q|^2 + mean_q min_p |p-q|^2`.
pub fn chamfer(p: &PointSet, q: &PointSet) -> f64 {
    chamfer_indexed(p, &nn_index(p), q, &nn_index(q))
}
