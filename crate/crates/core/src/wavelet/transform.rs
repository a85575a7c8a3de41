//! Separable single-level 3D discrete wavelet transform.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{voxel_count, Dims, Volume3};

use super::filters::FilterBank;

/// Half-point symmetric extension: `x[-1] = x[0]`, `x[n] = x[n-1]`, reflected
/// as many times as needed.
#[inline]
pub(crate) fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    i = i.rem_euclid(period);
    if i >= n {
        i = period - 1 - i;
    }
    i as usize
}

/// One analysis pass: `out[o] = sum_j f[j] * x[2o + 1 - j]`.
pub(crate) fn analyze_1d(x: &[f64], f: &[f64], out: &mut [f64]) {
    let n = x.len();
    let (first, last) = FilterBank::support(f);
    for (o, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in first..=last {
            let idx = 2 * o as isize + 1 - j as isize;
            let v = if idx >= 0 && (idx as usize) < n {
                x[idx as usize]
            } else {
                x[reflect(idx, n)]
            };
            acc += f[j] * v;
        }
        *slot = acc;
    }
}

/// One synthesis pass from a lowpass and an optional highpass channel,
/// written into `out` (whose length is the reconstructed signal length).
pub(crate) fn synthesize_1d(lo: &[f64], hi: Option<&[f64]>, bank: &FilterBank, out: &mut [f64]) {
    let l = bank.len();
    let m = lo.len();
    let rl = bank.rec_lo();
    let rh = bank.rec_hi();
    for (p, slot) in out.iter_mut().enumerate() {
        let n = p + l - 2;
        // Coefficients o with 0 <= n - 2o < L.
        let o_hi = (n / 2).min(m.saturating_sub(1));
        let o_lo = (n + 1).saturating_sub(l).div_ceil(2);
        let mut acc = 0.0;
        if o_lo <= o_hi && m > 0 {
            for o in o_lo..=o_hi {
                let k = n - 2 * o;
                acc += lo[o] * rl[k];
                if let Some(h) = hi {
                    acc += h[o] * rh[k];
                }
            }
        }
        *slot = acc;
    }
}

/// Applies a lane operation along `axis`, producing a volume whose extent on
/// that axis is `new_len`. Lanes are processed in parallel; each lane writes a
/// disjoint set of outputs so the result is independent of the split.
pub(crate) fn map_lanes(
    data: &[f64],
    dims: Dims,
    axis: usize,
    new_len: usize,
    op: impl Fn(&[f64], &mut [f64]) + Sync,
) -> (Vec<f64>, Dims) {
    let mut out_dims = dims;
    out_dims[axis] = new_len;
    let n_in = dims[axis];
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let lanes = dims[a] * dims[b];
    let stride = |d: Dims, ax: usize| -> usize {
        match ax {
            0 => 1,
            1 => d[0],
            _ => d[0] * d[1],
        }
    };
    let s_in = stride(dims, axis);
    let s_out = stride(out_dims, axis);
    let results: Vec<Vec<f64>> = (0..lanes)
        .into_par_iter()
        .map(|lane| {
            let (ia, ib) = (lane % dims[a], lane / dims[a]);
            let base_in = ia * stride(dims, a) + ib * stride(dims, b);
            let input: Vec<f64> = (0..n_in).map(|t| data[base_in + t * s_in]).collect();
            let mut output = vec![0.0; new_len];
            op(&input, &mut output);
            output
        })
        .collect();
    let mut out = vec![0.0; voxel_count(out_dims)];
    for (lane, vals) in results.into_iter().enumerate() {
        let (ia, ib) = (lane % dims[a], lane / dims[a]);
        let base_out = ia * stride(out_dims, a) + ib * stride(out_dims, b);
        for (t, v) in vals.into_iter().enumerate() {
            out[base_out + t * s_out] = v;
        }
    }
    (out, out_dims)
}

pub(crate) fn check_analyzable(dims: Dims, bank: &FilterBank) -> Result<()> {
    let min = bank.min_input_len();
    if dims.iter().any(|&d| d < min) {
        return Err(Error::InvalidArgument(format!(
            "volume {dims:?} is smaller than the {} filter support (min axis length {min})",
            bank.name()
        )));
    }
    Ok(())
}

/// Lowpass analysis along all three axes (the LLL band only).
pub(crate) fn lowpass_3d(data: &[f64], dims: Dims, bank: &FilterBank) -> (Vec<f64>, Dims) {
    let mut cur = data.to_vec();
    let mut d = dims;
    for axis in 0..3 {
        let m = bank.coeff_len(d[axis]);
        let (next, nd) = map_lanes(&cur, d, axis, m, |x, out| analyze_1d(x, bank.dec_lo(), out));
        cur = next;
        d = nd;
    }
    (cur, d)
}

/// Synthesis from the LLL band alone (all highpass bands zero), cropped to
/// `target` dims.
pub(crate) fn upsample_synthesize_3d(data: &[f64], dims: Dims, target: Dims, bank: &FilterBank) -> (Vec<f64>, Dims) {
    let mut cur = data.to_vec();
    let mut d = dims;
    for axis in (0..3).rev() {
        let (next, nd) = map_lanes(&cur, d, axis, target[axis], |x, out| synthesize_1d(x, None, bank, out));
        cur = next;
        d = nd;
    }
    (cur, d)
}

/// The eight subbands of one separable analysis level.
///
/// Band `b` has bit `a` set when axis `a` took the highpass branch, so band 0
/// is LLL and band 7 is HHH (letters in x, y, z order).
#[derive(Debug, Clone, PartialEq)]
pub struct Subbands {
    source_dims: Dims,
    bands: Vec<Volume3>,
}

impl Subbands {
    pub fn new(source_dims: Dims, bands: Vec<Volume3>) -> Result<Self> {
        if bands.len() != 8 {
            return Err(Error::ShapeMismatch(format!("{} subbands, expected 8", bands.len())));
        }
        let d0 = bands[0].dims();
        if bands.iter().any(|b| b.dims() != d0) {
            return Err(Error::ShapeMismatch("subbands disagree on dims".into()));
        }
        Ok(Self { source_dims, bands })
    }

    pub fn source_dims(&self) -> Dims {
        self.source_dims
    }

    pub fn bands(&self) -> &[Volume3] {
        &self.bands
    }

    pub fn band(&self, b: usize) -> &Volume3 {
        &self.bands[b]
    }

    pub fn band_name(b: usize) -> String {
        (0..3).map(|a| if b >> a & 1 == 1 { 'H' } else { 'L' }).collect()
    }
}

/// Full single-level separable analysis into eight subbands.
pub fn dwt3_full(v: &Volume3, bank: &FilterBank) -> Result<Subbands> {
    let dims = v.dims();
    check_analyzable(dims, bank)?;
    let mut layer: Vec<(Vec<f64>, Dims)> = vec![(v.values().to_vec(), dims)];
    for axis in 0..3 {
        let m = bank.coeff_len(dims[axis]);
        let mut next = Vec::with_capacity(layer.len() * 2);
        for (data, d) in &layer {
            next.push(map_lanes(data, *d, axis, m, |x, out| analyze_1d(x, bank.dec_lo(), out)));
        }
        for (data, d) in &layer {
            next.push(map_lanes(data, *d, axis, m, |x, out| analyze_1d(x, bank.dec_hi(), out)));
        }
        // Index bit `axis` now marks the highpass branch: lowpass results fill
        // the first half, highpass the second.
        layer = next;
    }
    let bands = layer
        .into_iter()
        .map(|(data, d)| Volume3::from_values(d, data))
        .collect::<Result<Vec<_>>>()?;
    Subbands::new(dims, bands)
}

/// Exact inverse of [`dwt3_full`], reconstructing `source_dims`.
pub fn idwt3_full(s: &Subbands, bank: &FilterBank) -> Result<Volume3> {
    let target = s.source_dims;
    let cdims = s.bands[0].dims();
    for a in 0..3 {
        if bank.coeff_len(target[a]) != cdims[a] {
            return Err(Error::ShapeMismatch(format!(
                "subband dims {cdims:?} do not match source dims {target:?} for {}",
                bank.name()
            )));
        }
    }
    let mut layer: Vec<(Vec<f64>, Dims)> = s.bands.iter().map(|b| (b.values().to_vec(), b.dims())).collect();
    for axis in (0..3).rev() {
        let half = layer.len() / 2;
        let mut next = Vec::with_capacity(half);
        for idx in 0..half {
            // Pair the bands that differ only in bit `axis`, among those whose
            // higher bits were already folded away.
            let lo_idx = idx;
            let hi_idx = idx | (1 << axis);
            let (lo, d) = &layer[lo_idx];
            let (hi, _) = &layer[hi_idx];
            let n_in = d[axis];
            let mut out_dims = *d;
            out_dims[axis] = target[axis];
            let stride = |dd: Dims, ax: usize| match ax {
                0 => 1,
                1 => dd[0],
                _ => dd[0] * dd[1],
            };
            let (a, b) = match axis {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let mut out = vec![0.0; voxel_count(out_dims)];
            let rows: Vec<Vec<f64>> = (0..d[a] * d[b])
                .into_par_iter()
                .map(|lane| {
                    let (ia, ib) = (lane % d[a], lane / d[a]);
                    let base = ia * stride(*d, a) + ib * stride(*d, b);
                    let l: Vec<f64> = (0..n_in).map(|t| lo[base + t * stride(*d, axis)]).collect();
                    let h: Vec<f64> = (0..n_in).map(|t| hi[base + t * stride(*d, axis)]).collect();
                    let mut r = vec![0.0; target[axis]];
                    synthesize_1d(&l, Some(&h), bank, &mut r);
                    r
                })
                .collect();
            for (lane, r) in rows.into_iter().enumerate() {
                let (ia, ib) = (lane % d[a], lane / d[a]);
                let base = ia * stride(out_dims, a) + ib * stride(out_dims, b);
                for (t, v) in r.into_iter().enumerate() {
                    out[base + t * stride(out_dims, axis)] = v;
                }
            }
            next.push((out, out_dims));
        }
        layer = next;
    }
    let (data, d) = layer.pop().expect("one volume remains");
    debug_assert_eq!(d, target);
    Volume3::from_values(d, data)
}
