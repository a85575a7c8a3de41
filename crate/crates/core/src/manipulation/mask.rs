use crate::error::{Error, Result};
use crate::grid::{flat_index, voxel_count, Dims, RegionMask3};
use crate::wavelet::{analysis_support, level_dims, synthesis_support, FilterBank, LevelTable};

/// Replaces every lane along `axis` with `f(lane)` of length `out_len`.
fn map_lanes(
    bits: &[bool],
    dims: Dims,
    axis: usize,
    out_len: usize,
    f: impl Fn(&[bool], &mut [bool]),
) -> (Vec<bool>, Dims) {
    let mut out_dims = dims;
    out_dims[axis] = out_len;
    let mut out = vec![false; voxel_count(out_dims)];
    let (u, v) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut lane = vec![false; dims[axis]];
    let mut res = vec![false; out_len];
    for b in 0..dims[v] {
        for a in 0..dims[u] {
            let mut idx = [0usize; 3];
            idx[u] = a;
            idx[v] = b;
            for (i, l) in lane.iter_mut().enumerate() {
                idx[axis] = i;
                *l = bits[flat_index(dims, idx[0], idx[1], idx[2])];
            }
            f(&lane, &mut res);
            for (i, r) in res.iter().enumerate() {
                idx[axis] = i;
                out[flat_index(out_dims, idx[0], idx[1], idx[2])] = *r;
            }
        }
    }
    (out, out_dims)
}

/// Maps a region on the TSDF grid to the coarse coefficient grid.
///
/// Each analysis pass marks an output voxel if any input voxel in its
/// lowpass filter support is marked, so the result covers every coarse
/// coefficient that reads the region.
pub fn mask_to_coefficient_domain(region: &RegionMask3, levels: usize, bank: &FilterBank) -> Result<RegionMask3> {
    let sizes = level_dims(region.dims(), levels, bank)?;
    let mut bits = region.bits().to_vec();
    let mut dims = region.dims();
    for target in &sizes[1..] {
        for axis in 0..3 {
            let n = dims[axis];
            let supports: Vec<Vec<usize>> = (0..target[axis])
                .map(|o| analysis_support(o, n, bank).collect())
                .collect();
            (bits, dims) = map_lanes(&bits, dims, axis, target[axis], |lane, out| {
                for (o, s) in supports.iter().enumerate() {
                    out[o] = s.iter().any(|&i| lane[i]);
                }
            });
        }
    }
    RegionMask3::new(dims, bits)
}

/// Fine-grid voxels whose truncated reconstruction depends on at least one
/// marked coarse coefficient.
pub fn coefficient_influence(coarse: &RegionMask3, table: &LevelTable) -> Result<RegionMask3> {
    if coarse.dims() != table.coarse_dims() {
        return Err(Error::ShapeMismatch(format!(
            "mask dims {:?} != coarse dims {:?}",
            coarse.dims(),
            table.coarse_dims()
        )));
    }
    let mut bits = coarse.bits().to_vec();
    let mut dims = coarse.dims();
    for target in table.dims[..table.levels()].iter().rev() {
        for axis in 0..3 {
            let m = dims[axis];
            let supports: Vec<Vec<usize>> = (0..target[axis])
                .map(|p| synthesis_support(p, m, &table.bank).collect())
                .collect();
            (bits, dims) = map_lanes(&bits, dims, axis, target[axis], |lane, out| {
                for (p, s) in supports.iter().enumerate() {
                    out[p] = s.iter().any(|&o| lane[o]);
                }
            });
        }
    }
    RegionMask3::new(dims, bits)
}

/// Mean absolute jump of `v` across faces between marked and unmarked voxels
/// (0 when the mask has no boundary).
pub fn boundary_discontinuity(v: &crate::grid::Volume3, mask: &RegionMask3) -> Result<f64> {
    if v.dims() != mask.dims() {
        return Err(Error::ShapeMismatch(format!(
            "volume {:?} vs mask {:?}",
            v.dims(),
            mask.dims()
        )));
    }
    let d = v.dims();
    let (mut sum, mut count) = (0.0, 0usize);
    for k in 0..d[2] {
        for j in 0..d[1] {
            for i in 0..d[0] {
                let here = mask.at(i, j, k);
                let neighbors = [(i + 1, j, k), (i, j + 1, k), (i, j, k + 1)];
                for (a, b, c) in neighbors {
                    if a < d[0] && b < d[1] && c < d[2] && mask.at(a, b, c) != here {
                        sum += (v.at(i, j, k) - v.at(a, b, c)).abs();
                        count += 1;
                    }
                }
            }
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Volume3;

    /// Single analysis level computed directly over the 3D product support.
    fn brute_level(m: &RegionMask3, target: Dims, bank: &FilterBank) -> RegionMask3 {
        let d = m.dims();
        RegionMask3::from_fn(target, |a, b, c| {
            for k in analysis_support(c, d[2], bank) {
                for j in analysis_support(b, d[1], bank) {
                    for i in analysis_support(a, d[0], bank) {
                        if m.at(i, j, k) {
                            return true;
                        }
                    }
                }
            }
            false
        })
        .unwrap()
    }

    #[test]
    fn trivial_masks() {
        let b = FilterBank::bior68();
        let all = RegionMask3::filled([64; 3], true).unwrap();
        let c = mask_to_coefficient_domain(&all, 3, &b).unwrap();
        assert_eq!(c.dims(), [22; 3]);
        assert!(c.all());
        let none = RegionMask3::filled([64; 3], false).unwrap();
        assert!(!mask_to_coefficient_domain(&none, 3, &b).unwrap().any());
        assert!(mask_to_coefficient_domain(&none, 0, &b).is_err());
    }

    #[test]
    fn matches_brute_force_support_on_sparse_region() {
        let b = FilterBank::bior68();
        let region = RegionMask3::from_fn([23, 19, 20], |i, j, k| {
            (i * 7 + j * 3 + k * 5) % 41 == 0 || (i == 3 && j < 4)
        })
        .unwrap();
        let sizes = level_dims(region.dims(), 2, &b).unwrap();
        let mut brute = region.clone();
        for t in &sizes[1..] {
            brute = brute_level(&brute, *t, &b);
        }
        assert_eq!(mask_to_coefficient_domain(&region, 2, &b).unwrap(), brute);
    }

    #[test]
    fn half_space_band_matches_brute_force() {
        let b = FilterBank::bior68();
        let region = RegionMask3::from_fn([64; 3], |i, _, _| i < 32).unwrap();
        let coarse = mask_to_coefficient_domain(&region, 3, &b).unwrap();
        let sizes = level_dims([64; 3], 3, &b).unwrap();
        let mut brute = region.clone();
        for t in &sizes[1..] {
            brute = brute_level(&brute, *t, &b);
        }
        assert_eq!(coarse, brute);
        // Depends on x only, and the marked prefix matches a 1D support walk.
        let mut lane: Vec<bool> = (0..64).map(|i| i < 32).collect();
        for t in &sizes[1..] {
            let n = lane.len();
            lane = (0..t[0]).map(|o| analysis_support(o, n, &b).any(|i| lane[i])).collect();
        }
        // The last coefficients read mirrored interior voxels, so at this
        // size the band reaches the far boundary.
        assert!(lane.iter().all(|&m| m));
        for k in 0..22 {
            for j in 0..22 {
                for i in 0..22 {
                    assert_eq!(coarse.at(i, j, k), lane[i]);
                }
            }
        }
    }

    #[test]
    fn quarter_space_keeps_a_band() {
        let b = FilterBank::bior68();
        let region = RegionMask3::from_fn([64; 3], |i, _, _| i < 16).unwrap();
        let coarse = mask_to_coefficient_domain(&region, 3, &b).unwrap();
        let sizes = level_dims([64; 3], 3, &b).unwrap();
        let mut lane: Vec<bool> = (0..64).map(|i| i < 16).collect();
        let mut plain = 16.0;
        for t in &sizes[1..] {
            let n = lane.len();
            lane = (0..t[0]).map(|o| analysis_support(o, n, &b).any(|i| lane[i])).collect();
            plain *= t[0] as f64 / n as f64;
        }
        // A marked prefix wider than plain downsampling, then an unmarked gap
        // (the far end may again be marked through boundary mirroring).
        let width = lane.iter().position(|&m| !m).unwrap();
        assert!((width as f64) > plain, "{width} vs {plain}");
        assert!((0..22).all(|i| coarse.at(i, 3, 17) == lane[i]));
    }

    #[test]
    fn influence_is_adjoint_of_synthesis() {
        let b = FilterBank::bior68();
        let table = LevelTable::for_unit_grid(32, 2, b.clone()).unwrap();
        let cd = table.coarse_dims();
        let coarse = RegionMask3::from_fn(cd, |i, j, k| i == 4 && j == 10 && k == 7).unwrap();
        let infl = coefficient_influence(&coarse, &table).unwrap();
        // Perturb that coefficient and see which fine voxels move.
        let zero_c = Volume3::zeros(cd).unwrap();
        let zero_d = Volume3::zeros(table.top_detail_dims()).unwrap();
        let bump = Volume3::from_fn(cd, [0.0; 3], [1.0; 3], |i, j, k| {
            if i == 4 && j == 10 && k == 7 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let base = crate::wavelet::reconstruct_truncated(&zero_c, &zero_d, &table).unwrap();
        let moved = crate::wavelet::reconstruct_truncated(&bump, &zero_d, &table).unwrap();
        for (idx, (a, c)) in base.values().iter().zip(moved.values()).enumerate() {
            if (a - c).abs() > 0.0 {
                assert!(infl.bits()[idx], "voxel {idx} changed but is not in the influence set");
            }
        }
        assert!(infl.count() < voxel_count([32; 3]));
    }

    #[test]
    fn discontinuity_metric() {
        let mask = RegionMask3::from_fn([4, 3, 2], |i, _, _| i >= 2).unwrap();
        let v = Volume3::from_fn([4, 3, 2], [0.0; 3], [1.0; 3], |i, _, _| if i >= 2 { 1.0 } else { -0.5 }).unwrap();
        assert_eq!(boundary_discontinuity(&v, &mask).unwrap(), 1.5);
        assert_eq!(
            boundary_discontinuity(&v, &RegionMask3::filled([4, 3, 2], true).unwrap()).unwrap(),
            0.0
        );
        assert!(boundary_discontinuity(&v, &RegionMask3::filled([4, 3, 3], true).unwrap()).is_err());
    }
}
