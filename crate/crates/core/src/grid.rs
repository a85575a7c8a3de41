//! Dense 3D scalar volumes, boolean region masks and grid/world mapping.
//!
//! Every volume uses one canonical layout: row-major with `x` varying fastest,
//! so the flat index of voxel `(i, j, k)` is `i + nx * (j + ny * k)`.

use crate::error::{Error, Result};

pub type Dims = [usize; 3];

#[inline]
pub fn voxel_count(dims: Dims) -> usize {
    dims[0] * dims[1] * dims[2]
}

#[inline]
pub fn flat_index(dims: Dims, i: usize, j: usize, k: usize) -> usize {
    i + dims[0] * (j + dims[1] * k)
}

fn check_dims(dims: Dims) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "volume dims must be positive, got {dims:?}"
        )));
    }
    Ok(())
}

/// Dense scalar grid. Values are finite; voxel `(0,0,0)` sits at `origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3 {
    dims: Dims,
    origin: [f64; 3],
    spacing: [f64; 3],
    values: Vec<f64>,
}

impl Volume3 {
    pub fn new(dims: Dims, origin: [f64; 3], spacing: [f64; 3], values: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "spacing must be positive and finite, got {spacing:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidArgument("origin must be finite".into()));
        }
        if values.len() != voxel_count(dims) {
            return Err(Error::ShapeMismatch(format!(
                "{} values for dims {dims:?}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite voxel value at index {pos}")));
        }
        Ok(Self {
            dims,
            origin,
            spacing,
            values,
        })
    }

    /// Unit-spaced volume at the origin; the usual frame for coefficient volumes.
    pub fn from_values(dims: Dims, values: Vec<f64>) -> Result<Self> {
        Self::new(dims, [0.0; 3], [1.0; 3], values)
    }

    pub fn filled(dims: Dims, value: f64) -> Result<Self> {
        check_dims(dims)?;
        Self::from_values(dims, vec![value; voxel_count(dims)])
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        Self::filled(dims, 0.0)
    }

    /// Builds a volume by evaluating `f(i, j, k)` in canonical order.
    pub fn from_fn(
        dims: Dims,
        origin: [f64; 3],
        spacing: [f64; 3],
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(dims)?;
        let mut values = Vec::with_capacity(voxel_count(dims));
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    values.push(f(i, j, k));
                }
            }
        }
        Self::new(dims, origin, spacing, values)
    }

    /// Internal constructor for results of arithmetic on already-valid volumes.
    pub(crate) fn from_parts(dims: Dims, origin: [f64; 3], spacing: [f64; 3], values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), voxel_count(dims));
        Self {
            dims,
            origin,
            spacing,
            values,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Option<f64> {
        if i < self.dims[0] && j < self.dims[1] && k < self.dims[2] {
            Some(self.values[flat_index(self.dims, i, j, k)])
        } else {
            None
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[flat_index(self.dims, i, j, k)]
    }

    pub fn world_point(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + self.spacing[0] * i as f64,
            self.origin[1] + self.spacing[1] * j as f64,
            self.origin[2] + self.spacing[2] * k as f64,
        ]
    }

    /// Same geometry, new values. Fails if the values are non-finite.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.dims, self.origin, self.spacing, values)
    }

    pub fn with_frame(mut self, origin: [f64; 3], spacing: [f64; 3]) -> Result<Self> {
        self.origin = origin;
        self.spacing = spacing;
        Self::new(self.dims, origin, spacing, self.values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(
            self.dims,
            self.origin,
            self.spacing,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Voxel-wise `f(self, other)`; geometry is taken from `self`.
    pub fn zip_map(&self, other: &Volume3, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.require_same_dims(other)?;
        Ok(Self::from_parts(
            self.dims,
            self.origin,
            self.spacing,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn require_same_dims(&self, other: &Volume3) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch(format!(
                "volume dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    pub fn sub(&self, other: &Volume3) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Volume3) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn sum_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.sum_sq().sqrt()
    }

    pub fn dot(&self, other: &Volume3) -> Result<f64> {
        self.require_same_dims(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    pub fn l2_distance(&self, other: &Volume3) -> Result<f64> {
        self.require_same_dims(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    pub fn max_abs_diff(&self, other: &Volume3) -> Result<f64> {
        self.require_same_dims(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() / self.values.len() as f64
    }

    /// World-space bounding box spanned by the voxel centers.
    pub fn world_bounds(&self) -> ([f64; 3], [f64; 3]) {
        let mut hi = [0.0; 3];
        for a in 0..3 {
            hi[a] = self.origin[a] + self.spacing[a] * (self.dims[a] - 1) as f64;
        }
        (self.origin, hi)
    }
}

/// One boolean per voxel, same layout as [`Volume3`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask3 {
    dims: Dims,
    bits: Vec<bool>,
}

impl RegionMask3 {
    pub fn new(dims: Dims, bits: Vec<bool>) -> Result<Self> {
        check_dims(dims)?;
        if bits.len() != voxel_count(dims) {
            return Err(Error::ShapeMismatch(format!(
                "{} mask bits for dims {dims:?}",
                bits.len()
            )));
        }
        Ok(Self { dims, bits })
    }

    pub fn filled(dims: Dims, value: bool) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            dims,
            bits: vec![value; voxel_count(dims)],
        })
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> bool) -> Result<Self> {
        check_dims(dims)?;
        let mut bits = Vec::with_capacity(voxel_count(dims));
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    bits.push(f(i, j, k));
                }
            }
        }
        Ok(Self { dims, bits })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> bool {
        self.bits[flat_index(self.dims, i, j, k)]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }

    pub fn all(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    pub fn complement(&self) -> Self {
        Self {
            dims: self.dims,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }
}

/// Takes `b` where the mask is set and `a` elsewhere. Geometry follows `a`.
pub fn masked_combine(a: &Volume3, b: &Volume3, mask: &RegionMask3) -> Result<Volume3> {
    a.require_same_dims(b)?;
    if mask.dims != a.dims {
        return Err(Error::ShapeMismatch(format!(
            "mask dims {:?} vs volume dims {:?}",
            mask.dims, a.dims
        )));
    }
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .zip(&mask.bits)
        .map(|((&va, &vb), &m)| if m { vb } else { va })
        .collect();
    Ok(Volume3::from_parts(a.dims, a.origin, a.spacing, values))
}

/// Trilinear interpolation of the eight voxels around world point `p`.
///
/// The domain is the box spanned by the voxel centers; along an axis with a
/// single voxel only the exact center coordinate is accepted.
pub fn trilinear_sample(v: &Volume3, p: [f64; 3]) -> Result<f64> {
    let mut base = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..3 {
        if !p[a].is_finite() {
            return Err(Error::OutOfDomain { point: p });
        }
        let u = (p[a] - v.origin[a]) / v.spacing[a];
        let last = (v.dims[a] - 1) as f64;
        // Tolerate round-off when p was itself computed from grid coordinates.
        let tol = 1e-9 * last.max(1.0);
        if u < -tol || u > last + tol {
            return Err(Error::OutOfDomain { point: p });
        }
        let u = u.clamp(0.0, last);
        if v.dims[a] == 1 {
            base[a] = 0;
            frac[a] = 0.0;
            continue;
        }
        let i0 = (u.floor() as usize).min(v.dims[a] - 2);
        base[a] = i0;
        frac[a] = u - i0 as f64;
    }
    let step = |a: usize| if v.dims[a] > 1 { 1 } else { 0 };
    let (sx, sy, sz) = (step(0), step(1), step(2));
    let [i, j, k] = base;
    let [fx, fy, fz] = frac;
    let c000 = v.at(i, j, k);
    let c100 = v.at(i + sx, j, k);
    let c010 = v.at(i, j + sy, k);
    let c110 = v.at(i + sx, j + sy, k);
    let c001 = v.at(i, j, k + sz);
    let c101 = v.at(i + sx, j, k + sz);
    let c011 = v.at(i, j + sy, k + sz);
    let c111 = v.at(i + sx, j + sy, k + sz);
    let c00 = c000 + (c100 - c000) * fx;
    let c10 = c010 + (c110 - c010) * fx;
    let c01 = c001 + (c101 - c001) * fx;
    let c11 = c011 + (c111 - c011) * fx;
    let c0 = c00 + (c10 - c00) * fy;
    let c1 = c01 + (c11 - c01) * fy;
    Ok(c0 + (c1 - c0) * fz)
}
