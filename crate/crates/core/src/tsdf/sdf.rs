use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{trilinear_sample, Volume3};

use super::bvh::{MeshIndex, RayCount};
use super::mesh::{dot, norm, normalize_mesh, read_obj, sub, Point3, TriangleMesh};

/// TSDF truncation band half-width.
pub const TRUNCATION: f64 = 0.1;

/// Default grid resolution per axis.
pub const DEFAULT_RESOLUTION: usize = 64;

const MAX_SIGN_RETRIES: usize = 4;
const SIGN_PERTURBATION: f64 = 1e-7;

/// A triangle mesh with its acceleration index, answering signed distance
/// queries (negative inside).
#[derive(Debug, Clone)]
pub struct MeshSdf {
    mesh: Arc<TriangleMesh>,
    index: Arc<MeshIndex>,
}

/// Signed distance plus whether the sign could not be resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedDistance {
    pub value: f64,
    pub sign_uncertain: bool,
}

impl MeshSdf {
    pub fn new(mesh: TriangleMesh) -> Result<Self> {
        if mesh.is_empty() {
            return Err(Error::InvalidArgument("mesh has no triangles".into()));
        }
        let index = MeshIndex::build(&mesh);
        Ok(Self {
            mesh: Arc::new(mesh),
            index: Arc::new(index),
        })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    /// Distance to the nearest triangle, signed by majority vote of the
    /// crossing parities of rays along `+x`, `+y` and `+z`.
    ///
    /// A ray that grazes an edge or vertex is recast from an origin shifted
    /// by `1e-7` (a few bounded retries); if it stays degenerate the point is
    /// reported as sign-uncertain and treated as outside.
    pub fn signed_distance(&self, p: Point3) -> SignedDistance {
        let d = self.index.distance(p);
        if d == 0.0 {
            return SignedDistance {
                value: 0.0,
                sign_uncertain: false,
            };
        }
        let mut votes_inside = 0;
        let mut uncertain = false;
        for axis in 0..3 {
            match self.parity(p, axis) {
                Some(odd) => votes_inside += odd as usize,
                None => uncertain = true,
            }
        }
        let inside = votes_inside >= 2;
        SignedDistance {
            value: if inside { -d } else { d },
            sign_uncertain: uncertain && votes_inside < 2,
        }
    }

    fn parity(&self, p: Point3, axis: usize) -> Option<bool> {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for attempt in 0..=MAX_SIGN_RETRIES {
            let mut origin = p;
            if attempt > 0 {
                // Deterministic, non-axis-aligned offsets of growing size.
                let s = SIGN_PERTURBATION * attempt as f64;
                origin[u] += s * 0.7548776662466927;
                origin[v] += s * 0.5698402909980532;
            }
            if let RayCount::Crossings(n) = self.index.count_crossings(origin, axis) {
                return Some(n % 2 == 1);
            }
        }
        None
    }
}

/// Shape sources whose signed distance can be evaluated anywhere.
///
/// Analytic primitives return exact distances; union and intersection via
/// min/max (and subtraction via `max(a, -b)`) are exact on the outside of the
/// zero set only up to the usual CSG bound (they never overestimate the
/// distance to the combined surface).
#[derive(Debug, Clone)]
pub enum SdfSource {
    Sphere {
        center: Point3,
        radius: f64,
    },
    Box {
        center: Point3,
        half_extents: Point3,
    },
    /// Ring in the plane orthogonal to `z`.
    Torus {
        center: Point3,
        major_radius: f64,
        minor_radius: f64,
    },
    Capsule {
        a: Point3,
        b: Point3,
        radius: f64,
    },
    Union(Vec<SdfSource>),
    Intersect(Vec<SdfSource>),
    Subtract(Box<SdfSource>, Box<SdfSource>),
    Mesh(MeshSdf),
    /// A previously sampled field, evaluated by trilinear interpolation.
    Sampled(Arc<Volume3>),
}

impl SdfSource {
    pub fn distance(&self, p: Point3) -> f64 {
        match self {
            SdfSource::Sphere { center, radius } => norm(sub(p, *center)) - radius,
            SdfSource::Box { center, half_extents } => {
                let q: Vec<f64> = (0..3).map(|a| (p[a] - center[a]).abs() - half_extents[a]).collect();
                let outside = q.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt();
                let inside = q[0].max(q[1]).max(q[2]).min(0.0);
                outside + inside
            }
            SdfSource::Torus {
                center,
                major_radius,
                minor_radius,
            } => {
                let d = sub(p, *center);
                let ring = (d[0] * d[0] + d[1] * d[1]).sqrt() - major_radius;
                (ring * ring + d[2] * d[2]).sqrt() - minor_radius
            }
            SdfSource::Capsule { a, b, radius } => {
                let pa = sub(p, *a);
                let ba = sub(*b, *a);
                let len2 = dot(ba, ba);
                let h = if len2 > 0.0 {
                    (dot(pa, ba) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                norm([pa[0] - ba[0] * h, pa[1] - ba[1] * h, pa[2] - ba[2] * h]) - radius
            }
            SdfSource::Union(children) => children.iter().map(|c| c.distance(p)).fold(f64::INFINITY, f64::min),
            SdfSource::Intersect(children) => children.iter().map(|c| c.distance(p)).fold(f64::NEG_INFINITY, f64::max),
            SdfSource::Subtract(base, cut) => base.distance(p).max(-cut.distance(p)),
            SdfSource::Mesh(m) => m.signed_distance(p).value,
            SdfSource::Sampled(v) => trilinear_sample(v, p).unwrap_or(TRUNCATION),
        }
    }

    /// Loads a JSON scene description; mesh paths resolve against `base_dir`.
    pub fn from_scene(scene: &SceneNode, base_dir: &Path) -> Result<Self> {
        Ok(match scene {
            SceneNode::Sphere { center, radius } => {
                positive(*radius, "sphere radius")?;
                SdfSource::Sphere {
                    center: *center,
                    radius: *radius,
                }
            }
            SceneNode::Box { center, half_extents } => {
                for h in half_extents {
                    positive(*h, "box half extent")?;
                }
                SdfSource::Box {
                    center: *center,
                    half_extents: *half_extents,
                }
            }
            SceneNode::Torus {
                center,
                major_radius,
                minor_radius,
            } => {
                positive(*major_radius, "torus major radius")?;
                positive(*minor_radius, "torus minor radius")?;
                SdfSource::Torus {
                    center: *center,
                    major_radius: *major_radius,
                    minor_radius: *minor_radius,
                }
            }
            SceneNode::Capsule { a, b, radius } => {
                positive(*radius, "capsule radius")?;
                SdfSource::Capsule {
                    a: *a,
                    b: *b,
                    radius: *radius,
                }
            }
            SceneNode::Union { children } => SdfSource::Union(children_of(children, base_dir)?),
            SceneNode::Intersect { children } => SdfSource::Intersect(children_of(children, base_dir)?),
            SceneNode::Subtract { base, cut } => SdfSource::Subtract(
                Box::new(Self::from_scene(base, base_dir)?),
                Box::new(Self::from_scene(cut, base_dir)?),
            ),
            SceneNode::Mesh { path, normalize } => {
                let mut mesh = read_obj(base_dir.join(path))?;
                if *normalize {
                    mesh = normalize_mesh(&mesh)?;
                }
                SdfSource::Mesh(MeshSdf::new(mesh)?)
            }
        })
    }

    pub fn load_scene(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let scene: SceneNode = serde_json::from_str(&text)?;
        Self::from_scene(&scene, path.parent().unwrap_or(Path::new(".")))
    }
}

fn positive(v: f64, what: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidData(format!("{what} must be positive, got {v}")))
    }
}

fn children_of(children: &[SceneNode], base_dir: &Path) -> Result<Vec<SdfSource>> {
    if children.is_empty() {
        return Err(Error::InvalidData("CSG node without children".into()));
    }
    children.iter().map(|c| SdfSource::from_scene(c, base_dir)).collect()
}

/// Serialized scene description.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SceneNode {
    Sphere {
        center: Point3,
        radius: f64,
    },
    Box {
        center: Point3,
        half_extents: Point3,
    },
    Torus {
        center: Point3,
        major_radius: f64,
        minor_radius: f64,
    },
    Capsule {
        a: Point3,
        b: Point3,
        radius: f64,
    },
    Union {
        children: Vec<SceneNode>,
    },
    Intersect {
        children: Vec<SceneNode>,
    },
    Subtract {
        base: Box<SceneNode>,
        cut: Box<SceneNode>,
    },
    Mesh {
        path: String,
        #[serde(default = "default_true")]
        normalize: bool,
    },
}

fn default_true() -> bool {
    true
}

/// The `[-1, 1]^3` cell-centered grid at `n` voxels per axis.
pub fn unit_grid_frame(n: usize) -> ([f64; 3], [f64; 3]) {
    let h = 2.0 / n as f64;
    ([-1.0 + 0.5 * h; 3], [h; 3])
}

/// Samples `clamp(sdf, -0.1, 0.1)` at the `n^3` voxel centers covering `[-1, 1]^3`.
pub fn sample_tsdf(source: &SdfSource, n: usize) -> Result<Volume3> {
    if n < 8 {
        return Err(Error::InvalidArgument(format!("resolution {n} below minimum 8")));
    }
    let (origin, spacing) = unit_grid_frame(n);
    let h = spacing[0];
    let coord = |i: usize| origin[0] + h * i as f64;
    let slabs: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut out = Vec::with_capacity(n * n);
            for j in 0..n {
                for i in 0..n {
                    let d = source.distance([coord(i), coord(j), coord(k)]);
                    out.push(d.clamp(-TRUNCATION, TRUNCATION));
                }
            }
            out
        })
        .collect();
    Volume3::new([n; 3], origin, spacing, slabs.concat())
}

/// Signed distance from `p` to a mesh (see [`MeshSdf::signed_distance`]).
pub fn mesh_signed_distance(m: &MeshSdf, p: Point3) -> f64 {
    m.signed_distance(p).value
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere() -> SdfSource {
        SdfSource::Sphere {
            center: [0.0; 3],
            radius: 0.5,
        }
    }

    #[test]
    fn sphere_tsdf_clamps_and_signs() {
        let v = sample_tsdf(&sphere(), 64).unwrap();
        assert!(v.values().iter().all(|x| (-0.1..=0.1).contains(x)));
        // The voxel nearest the origin is deep inside.
        assert_eq!(v.at(32, 32, 32), -0.1);
        assert_eq!(v.at(0, 0, 0), 0.1);
        assert!((sphere().distance([0.55, 0.0, 0.0]) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn band_fraction_matches_brute_force() {
        let n = 64;
        let v = sample_tsdf(&sphere(), n).unwrap();
        let h = 2.0 / n as f64;
        let mut brute = 0;
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let p = [
                        -1.0 + h * (i as f64 + 0.5),
                        -1.0 + h * (j as f64 + 0.5),
                        -1.0 + h * (k as f64 + 0.5),
                    ];
                    let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                    if (r - 0.5).abs() < 0.1 {
                        brute += 1;
                    }
                }
            }
        }
        let band = v.values().iter().filter(|x| x.abs() < 0.1).count();
        assert_eq!(band, brute);
    }

    #[test]
    fn analytic_grid_is_bit_identical_to_pointwise() {
        let src = SdfSource::Union(vec![
            SdfSource::Torus {
                center: [0.0; 3],
                major_radius: 0.5,
                minor_radius: 0.15,
            },
            SdfSource::Capsule {
                a: [0.0, 0.0, -0.6],
                b: [0.0, 0.0, 0.6],
                radius: 0.1,
            },
        ]);
        let n = 16;
        let v = sample_tsdf(&src, n).unwrap();
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let p = v.world_point(i, j, k);
                    assert_eq!(v.at(i, j, k), src.distance(p).clamp(-0.1, 0.1));
                }
            }
        }
    }

    #[test]
    fn resampling_a_tsdf_is_idempotent() {
        let v = sample_tsdf(&sphere(), 24).unwrap();
        let again = sample_tsdf(&SdfSource::Sampled(Arc::new(v.clone())), 24).unwrap();
        assert!(again.max_abs_diff(&v).unwrap() < 1e-12);
    }

    #[test]
    fn primitive_distances() {
        let b = SdfSource::Box {
            center: [0.0; 3],
            half_extents: [0.5, 0.25, 0.25],
        };
        assert!((b.distance([1.0, 0.0, 0.0]) - 0.5).abs() < 1e-15);
        assert!((b.distance([0.0, 0.0, 0.0]) + 0.25).abs() < 1e-15);
        assert!((b.distance([1.0, 0.25 + 0.3, 0.0]) - (0.25f64 + 0.09).sqrt()).abs() < 1e-15);
        let t = SdfSource::Torus {
            center: [0.0; 3],
            major_radius: 0.5,
            minor_radius: 0.1,
        };
        assert!((t.distance([0.5, 0.0, 0.0]) + 0.1).abs() < 1e-15);
        assert!((t.distance([0.0, 0.0, 0.0]) - 0.4).abs() < 1e-15);
        let d = SdfSource::Subtract(Box::new(b.clone()), Box::new(sphere()));
        assert!(d.distance([0.0; 3]) > 0.0);
    }

    #[test]
    fn rejects_low_resolution() {
        assert!(sample_tsdf(&sphere(), 7).is_err());
    }

    #[test]
    fn icosphere_signed_distance() {
        let m = MeshSdf::new(TriangleMesh::icosphere([0.0; 3], 0.5, 3)).unwrap();
        let d = mesh_signed_distance(&m, [0.0; 3]);
        assert!(d < 0.0 && (d + 0.5).abs() <= 0.02 * 0.5, "{d}");
        let v0 = m.mesh().vertices[7];
        assert_eq!(mesh_signed_distance(&m, v0), 0.0);
        let far = [1.5, 0.2, -0.3];
        let dmax = m
            .mesh()
            .vertices
            .iter()
            .map(|v| norm(sub(far, *v)))
            .fold(f64::INFINITY, f64::min);
        let d = mesh_signed_distance(&m, far);
        assert!(d > 0.0 && d <= dmax);
    }

    #[test]
    fn grazing_rays_are_recast() {
        let m = MeshSdf::new(TriangleMesh::cuboid([0.0; 3], [0.5; 3])).unwrap();
        // Rays from the center hit face diagonals exactly along every axis.
        let s = m.signed_distance([0.0; 3]);
        assert!(!s.sign_uncertain);
        assert!((s.value + 0.5).abs() < 1e-12);
        let s = m.signed_distance([-0.8, 0.0, 0.0]);
        assert!((s.value - 0.3).abs() < 1e-12);
    }

    #[test]
    fn parity_sign_matches_analytic_sign_on_grid() {
        let mesh = TriangleMesh::cuboid([0.05, -0.02, 0.0], [0.4, 0.3, 0.35]);
        let analytic = SdfSource::Box {
            center: [0.05, -0.02, 0.0],
            half_extents: [0.4, 0.3, 0.35],
        };
        let src = SdfSource::Mesh(MeshSdf::new(mesh).unwrap());
        let a = sample_tsdf(&analytic, 16).unwrap();
        let b = sample_tsdf(&src, 16).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_eq!(x.signum(), y.signum());
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn scene_json_parses() {
        let text = r#"{"kind": "subtract",
            "base": {"kind": "box", "center": [0,0,0], "half_extents": [0.5,0.5,0.5]},
            "cut": {"kind": "union", "children": [
                {"kind": "sphere", "center": [0,0,0.5], "radius": 0.2},
                {"kind": "capsule", "a": [0,0,0], "b": [0,0.5,0], "radius": 0.1}]}}"#;
        let node: SceneNode = serde_json::from_str(text).unwrap();
        let src = SdfSource::from_scene(&node, Path::new(".")).unwrap();
        assert!(src.distance([0.0, 0.0, 0.45]) > 0.0);
        assert!(src.distance([0.3, -0.3, 0.0]) < 0.0);
        let bad: SceneNode = serde_json::from_str(r#"{"kind":"sphere","center":[0,0,0],"radius":-1}"#).unwrap();
        assert!(SdfSource::from_scene(&bad, Path::new(".")).is_err());
        assert!(serde_json::from_str::<SceneNode>(r#"{"kind":"cone"}"#).is_err());
    }
}
