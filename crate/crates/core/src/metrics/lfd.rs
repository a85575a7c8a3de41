//! Silhouette light-field descriptor.
//!
//! Each mesh is centered on its bounding-box center and scaled by its largest
//! vertex distance from that center, then rendered orthographically from the
//! 20 vertices of a regular dodecahedron into 128x128 binary images. Every
//! image yields 35 Zernike moment magnitudes (orders 1 through 10) and 10
//! centroid-distance contour Fourier magnitudes. The distance between two
//! meshes sums the L1 descriptor differences over matching viewpoints; there
//! is no search over camera rotations.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tsdf::{Point3, TriangleMesh};

pub const VIEWS: usize = 20;
pub const IMAGE_SIZE: usize = 128;
pub const ZERNIKE_ORDER: usize = 10;
pub const ZERNIKE_COUNT: usize = 35;
pub const FOURIER_COUNT: usize = 10;
pub const DESCRIPTOR_LEN: usize = ZERNIKE_COUNT + FOURIER_COUNT;
/// Samples of the resampled contour signature.
const SIGNATURE_LEN: usize = 128;

/// Row-major binary image, row 0 at the top (`y = +1`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Silhouette {
    pub size: usize,
    pub pixels: Vec<bool>,
}

impl Silhouette {
    pub fn at(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.size + x]
    }

    /// Center of pixel `(x, y)` in image coordinates on `[-1, 1]^2`.
    pub fn pixel_center(&self, x: usize, y: usize) -> [f64; 2] {
        let h = 2.0 / self.size as f64;
        [-1.0 + (x as f64 + 0.5) * h, 1.0 - (y as f64 + 0.5) * h]
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }
}

/// The dodecahedron vertices as unit view directions.
pub fn view_directions() -> [Point3; VIEWS] {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let ip = 1.0 / phi;
    let mut out = [[0.0; 3]; VIEWS];
    let mut n = 0;
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                out[n] = [sx, sy, sz];
                n += 1;
            }
        }
    }
    for a in [-1.0, 1.0] {
        for b in [-1.0, 1.0] {
            out[n] = [0.0, a * ip, b * phi];
            out[n + 1] = [a * ip, b * phi, 0.0];
            out[n + 2] = [a * phi, 0.0, b * ip];
            n += 3;
        }
    }
    out.map(|d| {
        let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        d.map(|c| c / r)
    })
}

/// Image-plane axes for a view direction.
fn view_basis(d: Point3) -> (Point3, Point3) {
    let mut helper = [0.0; 3];
    let least = (0..3).min_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs())).unwrap();
    helper[least] = 1.0;
    let cross = |a: Point3, b: Point3| {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    };
    let u = cross(helper, d);
    let nu = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    let u = u.map(|c| c / nu);
    (u, cross(d, u))
}

/// Renders the normalized mesh along each viewpoint.
pub fn render_silhouettes(m: &TriangleMesh) -> Result<Vec<Silhouette>> {
    if m.is_empty() {
        return Err(Error::InvalidArgument("light field needs a nonempty mesh".into()));
    }
    let (lo, hi) = m.bounding_box().unwrap();
    let c = [0, 1, 2].map(|a| 0.5 * (lo[a] + hi[a]));
    let local: Vec<Point3> = m
        .vertices
        .iter()
        .map(|v| [v[0] - c[0], v[1] - c[1], v[2] - c[2]])
        .collect();
    let r = local
        .iter()
        .map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
        .fold(0.0, f64::max);
    if r <= 0.0 {
        return Err(Error::InvalidData("mesh has zero extent".into()));
    }
    Ok(view_directions()
        .par_iter()
        .map(|&d| {
            let (u, w) = view_basis(d);
            let proj: Vec<[f64; 2]> = local
                .iter()
                .map(|p| {
                    [
                        (p[0] * u[0] + p[1] * u[1] + p[2] * u[2]) / r,
                        (p[0] * w[0] + p[1] * w[1] + p[2] * w[2]) / r,
                    ]
                })
                .collect();
            rasterize(&proj, &m.triangles, IMAGE_SIZE)
        })
        .collect())
}

/// Marks pixels whose centers lie inside (or on the edge of) any triangle.
pub fn rasterize(points: &[[f64; 2]], triangles: &[[usize; 3]], size: usize) -> Silhouette {
    let mut pixels = vec![false; size * size];
    let h = 2.0 / size as f64;
    let to_col = |x: f64| (x + 1.0) / h - 0.5;
    let to_row = |y: f64| (1.0 - y) / h - 0.5;
    for t in triangles {
        let [a, b, c] = t.map(|i| points[i]);
        let area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        if area == 0.0 {
            continue;
        }
        let s = area.signum();
        let edge =
            |p: [f64; 2], q: [f64; 2], x: f64, y: f64| s * ((q[0] - p[0]) * (y - p[1]) - (q[1] - p[1]) * (x - p[0]));
        let xs = [a[0], b[0], c[0]];
        let ys = [a[1], b[1], c[1]];
        let fmin = |v: [f64; 3]| v.iter().cloned().fold(f64::INFINITY, f64::min);
        let fmax = |v: [f64; 3]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let clamp = |v: f64| v.max(0.0).min((size - 1) as f64);
        let (c0, c1) = (clamp(to_col(fmin(xs)).floor()), clamp(to_col(fmax(xs)).ceil()));
        let (r0, r1) = (clamp(to_row(fmax(ys)).floor()), clamp(to_row(fmin(ys)).ceil()));
        for row in r0 as usize..=r1 as usize {
            let y = 1.0 - (row as f64 + 0.5) * h;
            for col in c0 as usize..=c1 as usize {
                let x = -1.0 + (col as f64 + 0.5) * h;
                if edge(a, b, x, y) >= 0.0 && edge(b, c, x, y) >= 0.0 && edge(c, a, x, y) >= 0.0 {
                    pixels[row * size + col] = true;
                }
            }
        }
    }
    Silhouette { size, pixels }
}

/// `(n, m)` pairs in descriptor order: n ascending, then m ascending.
pub fn zernike_orders() -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for n in 1..=ZERNIKE_ORDER {
        for m in (n % 2..=n).step_by(2) {
            out.push((n, m));
        }
    }
    out
}

/// Coefficients of `R_nm(rho) / rho^m` as a polynomial in `rho^2`, lowest
/// power first.
fn radial_coefficients(n: usize, m: usize) -> Vec<f64> {
    let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
    let half = (n - m) / 2;
    let mut c = vec![0.0; half + 1];
    for s in 0..=half {
        let v = fact(n - s) / (fact(s) * fact((n + m) / 2 - s) * fact(half - s));
        c[half - s] = if s % 2 == 0 { v } else { -v };
    }
    c
}

/// Per-pixel conjugate basis values `(re, im)` for every order, pixel-major.
fn zernike_table() -> &'static Vec<[f64; 2]> {
    static TABLE: OnceLock<Vec<[f64; 2]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let orders = zernike_orders();
        let coeffs: Vec<Vec<f64>> = orders.iter().map(|&(n, m)| radial_coefficients(n, m)).collect();
        let img = Silhouette {
            size: IMAGE_SIZE,
            pixels: Vec::new(),
        };
        let mut out = Vec::with_capacity(IMAGE_SIZE * IMAGE_SIZE * orders.len());
        for y in 0..IMAGE_SIZE {
            for x in 0..IMAGE_SIZE {
                let [px, py] = img.pixel_center(x, y);
                let r2 = px * px + py * py;
                // Powers of the conjugate (px - i py).
                let mut pow = [[1.0, 0.0]; ZERNIKE_ORDER + 1];
                for k in 1..=ZERNIKE_ORDER {
                    let [a, b] = pow[k - 1];
                    pow[k] = [a * px + b * py, b * px - a * py];
                }
                for ((_, m), c) in orders.iter().zip(&coeffs) {
                    if r2 > 1.0 {
                        out.push([0.0, 0.0]);
                        continue;
                    }
                    let radial = c.iter().rev().fold(0.0, |acc, &ci| acc * r2 + ci);
                    out.push([radial * pow[*m][0], radial * pow[*m][1]]);
                }
            }
        }
        out
    })
}

/// Zernike moment magnitudes `|A_nm|` over the unit disk inscribed in the
/// image, in [`zernike_orders`] order.
pub fn zernike_magnitudes(s: &Silhouette) -> Vec<f64> {
    assert_eq!(
        s.size, IMAGE_SIZE,
        "Zernike table is built for {IMAGE_SIZE}x{IMAGE_SIZE}"
    );
    let orders = zernike_orders();
    let table = zernike_table();
    let k = orders.len();
    let mut acc = vec![[0.0f64; 2]; k];
    for (p, _) in s.pixels.iter().enumerate().filter(|(_, &on)| on) {
        for (a, t) in acc.iter_mut().zip(&table[p * k..(p + 1) * k]) {
            a[0] += t[0];
            a[1] += t[1];
        }
    }
    let da = (2.0 / IMAGE_SIZE as f64).powi(2);
    orders
        .iter()
        .zip(&acc)
        .map(|(&(n, _), a)| (n as f64 + 1.0) / std::f64::consts::PI * da * (a[0] * a[0] + a[1] * a[1]).sqrt())
        .collect()
}

const DIRS: [(isize, isize); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

/// Outer boundary of the component holding the first foreground pixel in
/// raster order, traced clockwise by Moore-neighbor search.
pub fn trace_contour(s: &Silhouette) -> Vec<(usize, usize)> {
    let Some(first) = s.pixels.iter().position(|&p| p) else {
        return Vec::new();
    };
    let n = s.size as isize;
    let on = |x: isize, y: isize| x >= 0 && y >= 0 && x < n && y < n && s.pixels[(y * n + x) as usize];
    let start = ((first % s.size) as isize, (first / s.size) as isize);
    let dir_of = |dx: isize, dy: isize| DIRS.iter().position(|&d| d == (dx, dy)).unwrap();
    let mut cur = start;
    // Entered from the west, which is background.
    let mut back = 4usize;
    let mut out = vec![(start.0 as usize, start.1 as usize)];
    let mut second = None;
    for _ in 0..4 * s.pixels.len() + 8 {
        let mut next = None;
        for i in 1..=8 {
            let d = (back + i) % 8;
            let (x, y) = (cur.0 + DIRS[d].0, cur.1 + DIRS[d].1);
            if on(x, y) {
                let w = (back + i - 1) % 8;
                let white = (cur.0 + DIRS[w].0, cur.1 + DIRS[w].1);
                next = Some(((x, y), dir_of(white.0 - x, white.1 - y)));
                break;
            }
        }
        let Some((p, b)) = next else {
            break;
        };
        // Stop when the first move would repeat.
        if cur == start && second.is_some() && second == Some(p) {
            break;
        }
        if second.is_none() {
            second = Some(p);
        }
        out.push((p.0 as usize, p.1 as usize));
        cur = p;
        back = b;
    }
    if out.len() > 1 && out.last() == out.first() {
        out.pop();
    }
    out
}

/// Magnitudes of the first [`FOURIER_COUNT`] nonzero frequencies of the
/// centroid-distance signature, divided by the mean-term magnitude.
pub fn contour_fourier(s: &Silhouette) -> Vec<f64> {
    let contour = trace_contour(s);
    if contour.is_empty() {
        return vec![0.0; FOURIER_COUNT];
    }
    let (mut cx, mut cy, mut count) = (0.0, 0.0, 0.0);
    for y in 0..s.size {
        for x in 0..s.size {
            if s.at(x, y) {
                cx += x as f64;
                cy += y as f64;
                count += 1.0;
            }
        }
    }
    cx /= count;
    cy /= count;
    let r: Vec<f64> = contour
        .iter()
        .map(|&(x, y)| ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt())
        .collect();
    let len = r.len() as f64;
    let sig: Vec<f64> = (0..SIGNATURE_LEN)
        .map(|k| {
            let t = k as f64 * len / SIGNATURE_LEN as f64;
            let i = t.floor() as usize % r.len();
            let f = t - t.floor();
            r[i] * (1.0 - f) + r[(i + 1) % r.len()] * f
        })
        .collect();
    let coef = |j: usize| {
        let (mut re, mut im) = (0.0, 0.0);
        for (k, v) in sig.iter().enumerate() {
            let a = -2.0 * std::f64::consts::PI * (j * k) as f64 / SIGNATURE_LEN as f64;
            re += v * a.cos();
            im += v * a.sin();
        }
        (re * re + im * im).sqrt()
    };
    let f0 = coef(0);
    if f0 == 0.0 {
        return vec![0.0; FOURIER_COUNT];
    }
    (1..=FOURIER_COUNT).map(|j| coef(j) / f0).collect()
}

pub fn descriptor(s: &Silhouette) -> Vec<f64> {
    let mut d = zernike_magnitudes(s);
    d.extend(contour_fourier(s));
    d
}

/// Descriptors for every viewpoint of one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct LightField {
    pub descriptors: Vec<Vec<f64>>,
}

impl LightField {
    pub fn of(m: &TriangleMesh) -> Result<Self> {
        Ok(Self {
            descriptors: render_silhouettes(m)?.iter().map(descriptor).collect(),
        })
    }

    pub fn distance(&self, other: &LightField) -> f64 {
        self.descriptors
            .iter()
            .zip(&other.descriptors)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
            .sum()
    }
}

pub fn lfd(a: &TriangleMesh, b: &TriangleMesh) -> Result<f64> {
    Ok(LightField::of(a)?.distance(&LightField::of(b)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(radius: f64) -> Silhouette {
        let mut s = Silhouette {
            size: IMAGE_SIZE,
            pixels: vec![false; IMAGE_SIZE * IMAGE_SIZE],
        };
        for y in 0..IMAGE_SIZE {
            for x in 0..IMAGE_SIZE {
                let [px, py] = s.pixel_center(x, y);
                s.pixels[y * IMAGE_SIZE + x] = px * px + py * py <= radius * radius;
            }
        }
        s
    }

    /// Zernike magnitudes by direct summation with polar coordinates.
    fn direct_zernike(s: &Silhouette) -> Vec<f64> {
        let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
        let da = (2.0 / s.size as f64).powi(2);
        zernike_orders()
            .into_iter()
            .map(|(n, m)| {
                let (mut re, mut im) = (0.0, 0.0);
                for y in 0..s.size {
                    for x in 0..s.size {
                        if !s.at(x, y) {
                            continue;
                        }
                        let [px, py] = s.pixel_center(x, y);
                        let rho = px.hypot(py);
                        if rho > 1.0 {
                            continue;
                        }
                        let theta = py.atan2(px);
                        let mut r = 0.0;
                        for k in 0..=(n - m) / 2 {
                            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                            r += sign * fact(n - k) / (fact(k) * fact((n + m) / 2 - k) * fact((n - m) / 2 - k))
                                * rho.powi((n - 2 * k) as i32);
                        }
                        re += r * (m as f64 * theta).cos();
                        im -= r * (m as f64 * theta).sin();
                    }
                }
                (n as f64 + 1.0) / std::f64::consts::PI * da * re.hypot(im)
            })
            .collect()
    }

    #[test]
    fn descriptor_layout() {
        assert_eq!(zernike_orders().len(), ZERNIKE_COUNT);
        assert_eq!(view_directions().len(), VIEWS);
        let dirs = view_directions();
        // All distinct, unit length, and closed under negation.
        for d in dirs {
            assert!(((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) - 1.0).abs() < 1e-12);
            assert!(dirs.iter().any(|e| (0..3).all(|a| (e[a] + d[a]).abs() < 1e-12)));
        }
        assert_eq!(descriptor(&disk(0.5)).len(), DESCRIPTOR_LEN);
    }

    #[test]
    fn zernike_matches_direct_summation() {
        for s in [disk(0.6), {
            let sphere = TriangleMesh::icosphere([0.1, 0.0, 0.0], 0.4, 2);
            let boxy = TriangleMesh::cuboid([-0.3, 0.2, 0.0], [0.2, 0.4, 0.1]);
            render_silhouettes(&sphere.merged(&boxy)).unwrap().swap_remove(3)
        }] {
            let fast = zernike_magnitudes(&s);
            let slow = direct_zernike(&s);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
            }
        }
        // A centered pixel disk has the square's symmetry, so only orders
        // with m divisible by 4 survive.
        let z = zernike_magnitudes(&disk(0.6));
        for ((_, m), v) in zernike_orders().iter().zip(&z) {
            if *m % 4 != 0 {
                assert!(*v < 1e-9);
            }
        }
    }

    #[test]
    fn contour_of_rectangle() {
        let mut s = Silhouette {
            size: IMAGE_SIZE,
            pixels: vec![false; IMAGE_SIZE * IMAGE_SIZE],
        };
        for y in 10..20 {
            for x in 30..36 {
                s.pixels[y * IMAGE_SIZE + x] = true;
            }
        }
        let c = trace_contour(&s);
        assert_eq!(c.len(), 2 * (10 + 6) - 4);
        assert_eq!(c[0], (30, 10));
        assert_eq!(c[1], (31, 10));
        let mut single = Silhouette {
            size: IMAGE_SIZE,
            pixels: vec![false; IMAGE_SIZE * IMAGE_SIZE],
        };
        single.pixels[5 * IMAGE_SIZE + 7] = true;
        assert_eq!(trace_contour(&single), vec![(7, 5)]);
        // Circles have a flat signature.
        let f = contour_fourier(&disk(0.7));
        assert!(f.iter().all(|v| *v < 0.02), "{f:?}");
    }

    #[test]
    fn self_translation_and_scale() {
        let m =
            TriangleMesh::icosphere([0.0; 3], 0.5, 2).merged(&TriangleMesh::cuboid([0.5, 0.1, 0.0], [0.3, 0.1, 0.2]));
        assert_eq!(lfd(&m, &m).unwrap(), 0.0);
        assert!(lfd(&m, &m.translated([0.37, -1.25, 2.5])).unwrap() <= 1e-6);
        assert!(lfd(&m, &m.scaled(2.0)).unwrap() <= 1e-6);
        let other = TriangleMesh::cuboid([0.0; 3], [0.5, 0.2, 0.1]);
        let d = lfd(&m, &other).unwrap();
        assert!(d > 0.0);
        assert_eq!(d, lfd(&other, &m).unwrap());
        assert!(lfd(&TriangleMesh::default(), &m).is_err());
    }
}
