//! Iso-surface extraction and mesh post-processing.

mod tables;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{flat_index, Volume3};
use crate::tsdf::{Point3, TriangleMesh};

use tables::{EDGE_TABLE, TRI_TABLE};

pub const DEFAULT_MIN_FRACTION: f64 = 0.05;

/// Corner offsets of a cell, in table order.
const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Corner pairs of the twelve cell edges, in table order.
const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Extracts the `iso` level set of `v` with the classic 256-case table.
///
/// Vertices sit on grid edges at the linear zero of the field, in world
/// coordinates, and are shared between neighboring cells. Triangles are
/// wound so that their normals point toward larger field values. Cells are
/// visited x fastest, so the output order is fixed. A volume without a
/// crossing yields an empty mesh.
pub fn marching_cubes(v: &Volume3, iso: f64) -> Result<TriangleMesh> {
    let d = v.dims();
    if d.iter().any(|&n| n < 2) {
        return Err(Error::InvalidArgument(format!(
            "marching cubes needs at least 2 samples per axis, got {d:?}"
        )));
    }
    if !iso.is_finite() || v.values().iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("marching cubes input is not finite".into()));
    }
    let vals = v.values();
    let mut vertices: Vec<Point3> = Vec::new();
    let mut triangles = Vec::new();
    // Keyed by (lower grid point, axis).
    let mut welded: HashMap<(usize, usize), usize> = HashMap::new();
    for k in 0..d[2] - 1 {
        for j in 0..d[1] - 1 {
            for i in 0..d[0] - 1 {
                let corner_idx = CORNERS.map(|o| flat_index(d, i + o[0], j + o[1], k + o[2]));
                let f = corner_idx.map(|c| vals[c]);
                let mut case = 0usize;
                for (b, &x) in f.iter().enumerate() {
                    if x < iso {
                        case |= 1 << b;
                    }
                }
                if EDGE_TABLE[case] == 0 {
                    continue;
                }
                let mut edge_vertex = [usize::MAX; 12];
                for (e, &(a, b)) in EDGES.iter().enumerate() {
                    if EDGE_TABLE[case] & (1 << e) == 0 {
                        continue;
                    }
                    let (lo, hi) = if corner_idx[a] < corner_idx[b] { (a, b) } else { (b, a) };
                    let axis = (0..3).find(|&ax| CORNERS[lo][ax] != CORNERS[hi][ax]).unwrap();
                    edge_vertex[e] = *welded.entry((corner_idx[lo], axis)).or_insert_with(|| {
                        let p = [i + CORNERS[lo][0], j + CORNERS[lo][1], k + CORNERS[lo][2]];
                        let q = [i + CORNERS[hi][0], j + CORNERS[hi][1], k + CORNERS[hi][2]];
                        let t = (iso - f[lo]) / (f[hi] - f[lo]);
                        let pa = v.world_point(p[0], p[1], p[2]);
                        let pb = v.world_point(q[0], q[1], q[2]);
                        let mut x = pa;
                        x[axis] = pa[axis] + t * (pb[axis] - pa[axis]);
                        vertices.push(x);
                        vertices.len() - 1
                    });
                }
                for tri in TRI_TABLE[case].chunks(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    // The table winds toward the low side; flip to face the positive field.
                    triangles.push([
                        edge_vertex[tri[0] as usize],
                        edge_vertex[tri[2] as usize],
                        edge_vertex[tri[1] as usize],
                    ]);
                }
            }
        }
    }
    TriangleMesh::new(vertices, triangles)
}

/// Component label per vertex (vertices joined by a triangle share a label),
/// numbered by first appearance.
pub fn vertex_components(m: &TriangleMesh) -> (Vec<usize>, usize) {
    let n = m.vertices.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for t in &m.triangles {
        for e in 1..3 {
            let (a, b) = (find(&mut parent, t[0]), find(&mut parent, t[e]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut root_label = HashMap::new();
    for x in 0..n {
        let r = find(&mut parent, x);
        label[x] = *root_label.entry(r).or_insert_with(|| {
            next += 1;
            next - 1
        });
    }
    (label, next)
}

/// Drops connected components with fewer than `min_fraction` times the
/// triangle count of the largest one. Unreferenced vertices are removed
/// whenever anything is dropped.
pub fn keep_largest_component(m: &TriangleMesh, min_fraction: f64) -> TriangleMesh {
    if m.triangles.is_empty() {
        return m.clone();
    }
    let (label, count) = vertex_components(m);
    let mut tris = vec![0usize; count];
    for t in &m.triangles {
        tris[label[t[0]]] += 1;
    }
    let largest = *tris.iter().max().unwrap() as f64;
    let keep: Vec<bool> = tris
        .iter()
        .map(|&c| c > 0 && c as f64 >= min_fraction * largest)
        .collect();
    if tris.iter().zip(&keep).all(|(&c, &k)| k || c == 0) {
        return m.clone();
    }
    let mut used = vec![false; m.vertices.len()];
    for t in m.triangles.iter().filter(|t| keep[label[t[0]]]) {
        t.iter().for_each(|&i| used[i] = true);
    }
    let mut remap = vec![usize::MAX; m.vertices.len()];
    let mut vertices = Vec::new();
    for (i, p) in m.vertices.iter().enumerate().filter(|(i, _)| used[*i]) {
        remap[i] = vertices.len();
        vertices.push(*p);
    }
    let triangles = m
        .triangles
        .iter()
        .filter(|t| keep[label[t[0]]])
        .map(|t| t.map(|i| remap[i]))
        .collect();
    TriangleMesh { vertices, triangles }
}

/// Summary written next to extracted meshes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshStats {
    pub vertices: usize,
    pub triangles: usize,
    /// Components containing at least one triangle.
    pub components: usize,
    pub bbox_min: Option<Point3>,
    pub bbox_max: Option<Point3>,
}

pub fn mesh_stats(m: &TriangleMesh) -> MeshStats {
    let (label, count) = vertex_components(m);
    let mut has = vec![false; count];
    for t in &m.triangles {
        has[label[t[0]]] = true;
    }
    let bb = m.bounding_box();
    MeshStats {
        vertices: m.vertices.len(),
        triangles: m.triangles.len(),
        components: has.iter().filter(|&&h| h).count(),
        bbox_min: bb.map(|b| b.0),
        bbox_max: bb.map(|b| b.1),
    }
}
