//! Bounding-volume hierarchy over mesh triangles: exact closest-point
//! distance and axis-aligned ray crossing counts.

use super::mesh::{add, dot, scale, sub, Point3, TriangleMesh};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Point3,
    hi: Point3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            lo: [f64::INFINITY; 3],
            hi: [f64::NEG_INFINITY; 3],
        }
    }

    fn grow(&mut self, p: Point3) {
        for a in 0..3 {
            self.lo[a] = self.lo[a].min(p[a]);
            self.hi[a] = self.hi[a].max(p[a]);
        }
    }

    fn merge(&mut self, o: &Aabb) {
        self.grow(o.lo);
        self.grow(o.hi);
    }

    fn dist_sq(&self, p: Point3) -> f64 {
        let mut d = 0.0;
        for a in 0..3 {
            let v = if p[a] < self.lo[a] {
                self.lo[a] - p[a]
            } else if p[a] > self.hi[a] {
                p[a] - self.hi[a]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    /// Whether the ray `origin + t * e_axis`, `t >= 0`, can touch the box.
    fn hit_by_axis_ray(&self, origin: Point3, axis: usize) -> bool {
        if self.hi[axis] < origin[axis] {
            return false;
        }
        (0..3)
            .filter(|&a| a != axis)
            .all(|a| origin[a] >= self.lo[a] && origin[a] <= self.hi[a])
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Outcome of counting crossings along a ray.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RayCount {
    Crossings(usize),
    /// The ray grazed an edge or vertex; parity is unreliable.
    Degenerate,
}

/// Immutable acceleration index; shareable across threads.
#[derive(Debug, Clone)]
pub struct MeshIndex {
    triangles: Vec<[Point3; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl MeshIndex {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let triangles: Vec<[Point3; 3]> = (0..mesh.triangles.len()).map(|t| mesh.triangle(t)).collect();
        let centroids: Vec<Point3> = triangles
            .iter()
            .map(|[a, b, c]| scale(add(add(*a, *b), *c), 1.0 / 3.0))
            .collect();
        let mut order: Vec<usize> = (0..triangles.len()).collect();
        let mut nodes = Vec::new();
        if !triangles.is_empty() {
            let n = order.len();
            build_node(&triangles, &centroids, &mut order, 0, n, &mut nodes);
        }
        Self {
            triangles,
            order,
            nodes,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Exact Euclidean distance from `p` to the nearest triangle.
    pub fn distance(&self, p: Point3) -> f64 {
        if self.nodes.is_empty() {
            return f64::INFINITY;
        }
        let mut best = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx];
            if node.bounds().dist_sq(p) >= best {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for &t in &self.order[start..end] {
                        let q = closest_point_on_triangle(p, &self.triangles[t]);
                        let d = sub(p, q);
                        best = best.min(dot(d, d));
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[left].bounds().dist_sq(p);
                    let dr = self.nodes[right].bounds().dist_sq(p);
                    // Visit the nearer child first.
                    if dl < dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best.sqrt()
    }

    /// Counts triangle crossings of the ray from `origin` along `+axis`.
    pub fn count_crossings(&self, origin: Point3, axis: usize) -> RayCount {
        if self.nodes.is_empty() {
            return RayCount::Crossings(0);
        }
        let mut count = 0;
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx];
            if !node.bounds().hit_by_axis_ray(origin, axis) {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for &t in &self.order[start..end] {
                        match axis_ray_hit(origin, axis, &self.triangles[t]) {
                            Hit::Miss => {}
                            Hit::Interior => count += 1,
                            Hit::Boundary => return RayCount::Degenerate,
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        RayCount::Crossings(count)
    }
}

fn build_node(
    tris: &[[Point3; 3]],
    centroids: &[Point3],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &t in &order[start..end] {
        for v in tris[t] {
            bounds.grow(v);
        }
        cbounds.grow(centroids[t]);
    }
    let me = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start, end });
        return me;
    }
    let axis = (0..3)
        .max_by(|&a, &b| {
            (cbounds.hi[a] - cbounds.lo[a])
                .partial_cmp(&(cbounds.hi[b] - cbounds.lo[b]))
                .unwrap()
        })
        .unwrap();
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        centroids[a][axis]
            .partial_cmp(&centroids[b][axis])
            .unwrap()
            .then(a.cmp(&b))
    });
    nodes.push(Node::Leaf { bounds, start, end });
    let left = build_node(tris, centroids, order, start, mid, nodes);
    let right = build_node(tris, centroids, order, mid, end, nodes);
    let mut merged = *nodes[left].bounds();
    merged.merge(nodes[right].bounds());
    nodes[me] = Node::Inner {
        bounds: merged,
        left,
        right,
    };
    me
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub(crate) fn closest_point_on_triangle(p: Point3, tri: &[Point3; 3]) -> Point3 {
    let [a, b, c] = *tri;
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return add(a, scale(ab, v));
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return add(a, scale(ac, w));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return add(b, scale(sub(c, b), w));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    add(a, add(scale(ab, v), scale(ac, w)))
}

enum Hit {
    Miss,
    Interior,
    Boundary,
}

/// Tests the ray `origin + t e_axis` (`t > 0`) against a triangle by 2D
/// barycentric coordinates in the plane orthogonal to the axis.
fn axis_ray_hit(origin: Point3, axis: usize, tri: &[Point3; 3]) -> Hit {
    const EPS: f64 = 1e-12;
    let (u, v) = match axis {
        0 => (1, 2),
        1 => (2, 0),
        _ => (0, 1),
    };
    let [a, b, c] = *tri;
    let ex = [origin[u] - a[u], origin[v] - a[v]];
    let e1 = [b[u] - a[u], b[v] - a[v]];
    let e2 = [c[u] - a[u], c[v] - a[v]];
    let det = e1[0] * e2[1] - e1[1] * e2[0];
    if det.abs() < EPS * (e1[0].abs() + e1[1].abs()) * (e2[0].abs() + e2[1].abs()) || det == 0.0 {
        // Triangle contains the ray direction; a grazing ray is ambiguous
        // only if it lies in the triangle's projected (degenerate) footprint.
        let on_line = |p: Point3, q: Point3| {
            let d = [q[u] - p[u], q[v] - p[v]];
            let w = [origin[u] - p[u], origin[v] - p[v]];
            let len2 = d[0] * d[0] + d[1] * d[1];
            if len2 == 0.0 {
                return w[0].abs() <= EPS && w[1].abs() <= EPS;
            }
            (d[0] * w[1] - d[1] * w[0]).abs() <= EPS * len2.sqrt() && {
                let t = d[0] * w[0] + d[1] * w[1];
                t >= 0.0 && t <= len2
            }
        };
        if on_line(a, b) || on_line(b, c) || on_line(c, a) {
            return Hit::Boundary;
        }
        return Hit::Miss;
    }
    let s = (ex[0] * e2[1] - ex[1] * e2[0]) / det;
    let t = (e1[0] * ex[1] - e1[1] * ex[0]) / det;
    let r = 1.0 - s - t;
    let tol = 1e-10;
    if s < -tol || t < -tol || r < -tol {
        return Hit::Miss;
    }
    // Hit point along the axis.
    let along = a[axis] + s * (b[axis] - a[axis]) + t * (c[axis] - a[axis]);
    let dt = along - origin[axis];
    if dt < -tol {
        return Hit::Miss;
    }
    if s <= tol || t <= tol || r <= tol || dt.abs() <= tol {
        return Hit::Boundary;
    }
    Hit::Interior
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_distance(m: &TriangleMesh, p: Point3) -> f64 {
        (0..m.triangles.len())
            .map(|t| {
                let q = closest_point_on_triangle(p, &m.triangle(t));
                let d = sub(p, q);
                dot(d, d).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn closest_point_regions() {
        let tri = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert_eq!(closest_point_on_triangle([-1.0, -1.0, 0.0], &tri), [0.0, 0.0, 0.0]);
        assert_eq!(closest_point_on_triangle([0.25, 0.25, 3.0], &tri), [0.25, 0.25, 0.0]);
        assert_eq!(closest_point_on_triangle([0.5, -2.0, 1.0], &tri), [0.5, 0.0, 0.0]);
        let q = closest_point_on_triangle([1.0, 1.0, 0.0], &tri);
        assert!((q[0] - 0.5).abs() < 1e-15 && (q[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bvh_distance_matches_brute_force() {
        let m = TriangleMesh::icosphere([0.1, 0.0, -0.2], 0.6, 3);
        let idx = MeshIndex::build(&m);
        let mut x = 0.123f64;
        for _ in 0..200 {
            // Deterministic quasi-random points in [-1.2, 1.2]^3.
            x = (x * 9301.0 + 49297.0) % 233280.0;
            let a = x / 233280.0;
            let p = [
                2.4 * a - 1.2,
                2.4 * ((a * 7.0) % 1.0) - 1.2,
                2.4 * ((a * 13.0) % 1.0) - 1.2,
            ];
            assert!((idx.distance(p) - brute_distance(&m, p)).abs() < 1e-14);
        }
    }

    #[test]
    fn ray_crossings_through_cube() {
        let m = TriangleMesh::cuboid([0.0; 3], [0.5; 3]);
        let idx = MeshIndex::build(&m);
        let inside = [0.1, 0.2, -0.13];
        let outside = [-0.8, 0.21, 0.17];
        for axis in 0..3 {
            assert_eq!(idx.count_crossings(inside, axis), RayCount::Crossings(1));
        }
        assert_eq!(idx.count_crossings(outside, 0), RayCount::Crossings(2));
        assert_eq!(idx.count_crossings(outside, 1), RayCount::Crossings(0));
        // Through the shared diagonal edge of a face: degenerate.
        assert_eq!(idx.count_crossings([-0.8, 0.0, 0.0], 0), RayCount::Degenerate);
    }
}
