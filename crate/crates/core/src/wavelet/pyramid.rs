//! Laplacian-style wavelet pyramid: a coarse lowpass volume plus one detail
//! volume per level, each detail being the residual between a level and the
//! lowpass-only synthesis of the level below it.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{voxel_count, Dims, Volume3};

use super::filters::FilterBank;
use super::transform::{check_analyzable, lowpass_3d, reflect, upsample_synthesize_3d};

/// Per-level dims for a source volume: entry `j` is the shape of `C^j`
/// (entry 0 is the source itself).
pub fn level_dims(source: Dims, levels: usize, bank: &FilterBank) -> Result<Vec<Dims>> {
    if levels == 0 {
        return Err(Error::InvalidArgument("pyramid needs at least one level".into()));
    }
    let mut out = vec![source];
    let mut d = source;
    for j in 1..=levels {
        check_analyzable(d, bank).map_err(|_| {
            Error::InvalidArgument(format!(
                "volume {source:?} too small for {levels} {} levels (level {j} input {d:?})",
                bank.name()
            ))
        })?;
        d = [bank.coeff_len(d[0]), bank.coeff_len(d[1]), bank.coeff_len(d[2])];
        out.push(d);
    }
    Ok(out)
}

/// `C^J` plus details `D^J .. D^1` (stored in that order).
///
/// Coefficient volumes use a unit frame; `D^1` shares the source's dims and
/// carries the source grid frame so reconstructions land back in world space.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPyramid {
    bank: FilterBank,
    level_dims: Vec<Dims>,
    coarse: Volume3,
    details: Vec<Volume3>,
}

impl WaveletPyramid {
    pub fn from_parts(bank: FilterBank, level_dims: Vec<Dims>, coarse: Volume3, details: Vec<Volume3>) -> Result<Self> {
        let levels = details.len();
        if levels == 0 || level_dims.len() != levels + 1 {
            return Err(Error::ShapeMismatch(format!(
                "{} detail volumes with {} level dims",
                levels,
                level_dims.len()
            )));
        }
        let expect = level_dims_from(level_dims[0], levels, &bank);
        if expect != level_dims {
            return Err(Error::ShapeMismatch(format!(
                "level dims {level_dims:?} violate the {} size recurrence",
                bank.name()
            )));
        }
        if coarse.dims() != level_dims[levels] {
            return Err(Error::ShapeMismatch(format!(
                "coarse dims {:?}, expected {:?}",
                coarse.dims(),
                level_dims[levels]
            )));
        }
        for (idx, d) in details.iter().enumerate() {
            // details[0] = D^J lives at the resolution of C^{J-1}.
            let j = levels - idx;
            if d.dims() != level_dims[j - 1] {
                return Err(Error::ShapeMismatch(format!(
                    "D^{j} dims {:?}, expected {:?}",
                    d.dims(),
                    level_dims[j - 1]
                )));
            }
        }
        Ok(Self {
            bank,
            level_dims,
            coarse,
            details,
        })
    }

    pub fn levels(&self) -> usize {
        self.details.len()
    }

    pub fn bank(&self) -> &FilterBank {
        &self.bank
    }

    pub fn level_dims(&self) -> &[Dims] {
        &self.level_dims
    }

    pub fn coarse(&self) -> &Volume3 {
        &self.coarse
    }

    /// `D^J .. D^1`.
    pub fn details(&self) -> &[Volume3] {
        &self.details
    }

    /// `D^j` for `1 <= j <= J`.
    pub fn detail(&self, j: usize) -> &Volume3 {
        &self.details[self.levels() - j]
    }

    pub fn source_frame(&self) -> ([f64; 3], [f64; 3]) {
        let d1 = self.detail(1);
        (d1.origin(), d1.spacing())
    }

    /// Total number of stored coefficients across all levels.
    pub fn coefficient_count(&self) -> usize {
        self.coarse.len() + self.details.iter().map(|d| d.len()).sum::<usize>()
    }
}

fn level_dims_from(source: Dims, levels: usize, bank: &FilterBank) -> Vec<Dims> {
    let mut out = vec![source];
    let mut d = source;
    for _ in 0..levels {
        d = [bank.coeff_len(d[0]), bank.coeff_len(d[1]), bank.coeff_len(d[2])];
        out.push(d);
    }
    out
}

/// Lowpass-only synthesis of `c` up to `target` dims.
pub fn synthesize_upsample(c: &Volume3, target: Dims, bank: &FilterBank) -> Result<Volume3> {
    for a in 0..3 {
        if bank.coeff_len(target[a]) != c.dims()[a] {
            return Err(Error::ShapeMismatch(format!(
                "cannot synthesize {:?} into {target:?}",
                c.dims()
            )));
        }
    }
    let (data, d) = upsample_synthesize_3d(c.values(), c.dims(), target, bank);
    Volume3::from_values(d, data)
}

/// Builds the `J`-level pyramid of `tsdf`.
pub fn pyramid_decompose(tsdf: &Volume3, levels: usize, bank: &FilterBank) -> Result<WaveletPyramid> {
    let dims = level_dims(tsdf.dims(), levels, bank)?;
    let mut current = tsdf.values().to_vec();
    let mut details = Vec::with_capacity(levels);
    for j in 1..=levels {
        let (c, cd) = lowpass_3d(&current, dims[j - 1], bank);
        debug_assert_eq!(cd, dims[j]);
        let (up, _) = upsample_synthesize_3d(&c, cd, dims[j - 1], bank);
        let d: Vec<f64> = current.iter().zip(&up).map(|(a, b)| a - b).collect();
        details.push(Volume3::from_values(dims[j - 1], d)?);
        current = c;
    }
    let coarse = Volume3::from_values(dims[levels], current)?;
    // details currently hold D^1..D^J.
    details.reverse();
    let last = details.len() - 1;
    let d1 = details[last].clone().with_frame(tsdf.origin(), tsdf.spacing())?;
    details[last] = d1;
    WaveletPyramid::from_parts(bank.clone(), dims, coarse, details)
}

fn reconstruct_from(
    coarse: &Volume3,
    detail_at: impl Fn(usize) -> Option<Volume3>,
    dims: &[Dims],
    bank: &FilterBank,
    frame: ([f64; 3], [f64; 3]),
) -> Result<Volume3> {
    let levels = dims.len() - 1;
    let mut c = coarse.clone();
    for j in (1..=levels).rev() {
        let up = synthesize_upsample(&c, dims[j - 1], bank)?;
        c = match detail_at(j) {
            Some(d) => up.add(&d)?,
            None => up,
        };
    }
    c.with_frame(frame.0, frame.1)
}

/// Inverts the pyramid: `C^{j-1} = synthesize_upsample(C^j) + D^j` for `j = J..1`.
pub fn pyramid_reconstruct(p: &WaveletPyramid) -> Result<Volume3> {
    reconstruct_from(
        &p.coarse,
        |j| Some(p.detail(j).clone()),
        &p.level_dims,
        &p.bank,
        p.source_frame(),
    )
}

/// Per-level dims and source frame; enough to invert a truncated pyramid.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTable {
    pub bank: FilterBank,
    pub dims: Vec<Dims>,
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
}

impl LevelTable {
    pub fn new(source: Dims, levels: usize, bank: FilterBank, origin: [f64; 3], spacing: [f64; 3]) -> Result<Self> {
        let dims = level_dims(source, levels, &bank)?;
        Ok(Self {
            bank,
            dims,
            origin,
            spacing,
        })
    }

    /// Table for the `[-1, 1]^3` cell-centered sampling grid at `n` per axis.
    pub fn for_unit_grid(n: usize, levels: usize, bank: FilterBank) -> Result<Self> {
        let h = 2.0 / n as f64;
        Self::new([n; 3], levels, bank, [-1.0 + 0.5 * h; 3], [h; 3])
    }

    pub fn of(p: &WaveletPyramid) -> Self {
        let (origin, spacing) = p.source_frame();
        Self {
            bank: p.bank.clone(),
            dims: p.level_dims.clone(),
            origin,
            spacing,
        }
    }

    pub fn levels(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn coarse_dims(&self) -> Dims {
        self.dims[self.levels()]
    }

    /// Dims of `D^J` (those of `C^{J-1}`).
    pub fn top_detail_dims(&self) -> Dims {
        self.dims[self.levels() - 1]
    }
}

/// Reconstructs from `C^J` and `D^J` only, treating `D^{J-1} .. D^1` as zero.
pub fn reconstruct_truncated(cj: &Volume3, dj: &Volume3, table: &LevelTable) -> Result<Volume3> {
    let levels = table.levels();
    if cj.dims() != table.coarse_dims() || dj.dims() != table.top_detail_dims() {
        return Err(Error::ShapeMismatch(format!(
            "coarse {:?} / detail {:?} inconsistent with level table {:?}",
            cj.dims(),
            dj.dims(),
            table.dims
        )));
    }
    reconstruct_from(
        cj,
        |j| if j == levels { Some(dj.clone()) } else { None },
        &table.dims,
        &table.bank,
        (table.origin, table.spacing),
    )
}

/// Coefficient and energy accounting for a pyramid and its truncated
/// reconstruction.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CompactnessReport {
    pub bank: String,
    pub levels: usize,
    pub level_dims: Vec<Dims>,
    /// Number of coefficients in `C^J` and `D^J`.
    pub retained_coefficients: usize,
    /// Retained coefficients over source voxels.
    pub retained_fraction_of_source: f64,
    /// Retained coefficients over all pyramid coefficients.
    pub retained_fraction_of_pyramid: f64,
    /// Sum of squares of `C^J`.
    pub coarse_energy: f64,
    /// Sum of squares of `D^j`, listed for `j = J .. 1`.
    pub detail_energy: Vec<f64>,
    /// Mean |truncated - source| over mean |source|.
    pub relative_error: f64,
    pub max_abs_error: f64,
}

/// Summarizes compactness given the truncated reconstruction of `source`.
pub fn compactness_report(p: &WaveletPyramid, source: &Volume3, truncated: &Volume3) -> Result<CompactnessReport> {
    let levels = p.levels();
    let retained = p.coarse.len() + p.detail(levels).len();
    let source_count = voxel_count(p.level_dims[0]);
    let diff = truncated.sub(source)?;
    let mean_src = source.mean_abs();
    let relative_error = if mean_src > 0.0 {
        diff.mean_abs() / mean_src
    } else if diff.max_abs() == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(CompactnessReport {
        bank: p.bank.name().to_string(),
        levels,
        level_dims: p.level_dims.clone(),
        retained_coefficients: retained,
        retained_fraction_of_source: retained as f64 / source_count as f64,
        retained_fraction_of_pyramid: retained as f64 / p.coefficient_count() as f64,
        coarse_energy: p.coarse.sum_sq(),
        detail_energy: p.details.iter().map(|d| d.sum_sq()).collect(),
        relative_error,
        max_abs_error: diff.max_abs(),
    })
}

/// Input positions read by lowpass coefficient `o` of a pass over `n` samples.
pub fn analysis_support(o: usize, n: usize, bank: &FilterBank) -> impl Iterator<Item = usize> {
    let (first, last) = FilterBank::support(bank.dec_lo());
    (first..=last).map(move |j| reflect(2 * o as isize + 1 - j as isize, n))
}

/// Lowpass coefficients (out of `m`) that contribute to synthesized sample `p`.
pub fn synthesis_support(p: usize, m: usize, bank: &FilterBank) -> impl Iterator<Item = usize> {
    let (first, last) = FilterBank::support(bank.rec_lo());
    let n = p + bank.len() - 2;
    (0..m).filter(move |&o| {
        let k = n as isize - 2 * o as isize;
        k >= first as isize && k <= last as isize
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_volume(dims: Dims, seed: u64) -> Volume3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Volume3::from_values(dims, (0..voxel_count(dims)).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn level_dims_recurrence() {
        let b = FilterBank::bior68();
        assert_eq!(
            level_dims([256; 3], 3, &b).unwrap(),
            vec![[256; 3], [136; 3], [76; 3], [46; 3]]
        );
        assert_eq!(
            level_dims([64; 3], 3, &b).unwrap(),
            vec![[64; 3], [40; 3], [28; 3], [22; 3]]
        );
        assert!(level_dims([8, 64, 64], 1, &b).is_err());
        assert!(level_dims([64; 3], 0, &b).is_err());
    }

    #[test]
    fn constant_field_has_no_detail() {
        let b = FilterBank::bior68();
        let v = Volume3::filled([24, 24, 24], 0.1).unwrap();
        let p = pyramid_decompose(&v, 3, &b).unwrap();
        for d in p.details() {
            assert!(d.max_abs() <= 1e-10);
        }
        let c0 = p.coarse().values()[0];
        assert!(p.coarse().values().iter().all(|x| (x - c0).abs() < 1e-10));
        let r = compactness_report(&p, &v, &pyramid_reconstruct(&p).unwrap()).unwrap();
        assert!(r.relative_error < 1e-12);
        assert!(r.detail_energy.iter().all(|&e| e < 1e-18));
    }

    #[test]
    fn lossless_round_trip_odd_sizes() {
        for (dims, seed) in [([16, 16, 16], 1u64), ([17, 17, 17], 2), ([31, 24, 16], 3)] {
            let v = random_volume(dims, seed);
            for bank in [FilterBank::bior68(), FilterBank::haar()] {
                let p = pyramid_decompose(&v, 3, &bank).unwrap();
                let r = pyramid_reconstruct(&p).unwrap();
                assert!(r.max_abs_diff(&v).unwrap() <= 1e-9);
            }
        }
    }

    #[test]
    fn detail_identity_holds_as_stored() {
        let b = FilterBank::bior68();
        let v = random_volume([20, 18, 19], 4);
        let p = pyramid_decompose(&v, 3, &b).unwrap();
        // Rebuild C^j from the stored coarse + details and check each identity.
        let mut c = p.coarse().clone();
        for j in (1..=3).rev() {
            let up = synthesize_upsample(&c, p.level_dims()[j - 1], &b).unwrap();
            let next = up.add(p.detail(j)).unwrap();
            let residual = next.sub(&up).unwrap();
            assert!(residual.max_abs_diff(p.detail(j)).unwrap() <= 1e-15);
            c = next;
        }
    }

    #[test]
    fn decomposition_is_linear() {
        let b = FilterBank::bior68();
        let u = random_volume([17, 17, 17], 5);
        let v = random_volume([17, 17, 17], 6);
        let (a, c) = (0.7, -1.3);
        let w = u.scale(a).add(&v.scale(c)).unwrap();
        let (pu, pv, pw) = (
            pyramid_decompose(&u, 3, &b).unwrap(),
            pyramid_decompose(&v, 3, &b).unwrap(),
            pyramid_decompose(&w, 3, &b).unwrap(),
        );
        let lin = pu.coarse().scale(a).add(&pv.coarse().scale(c)).unwrap();
        assert!(lin.max_abs_diff(pw.coarse()).unwrap() < 1e-9);
        for j in 1..=3 {
            let lin = pu.detail(j).scale(a).add(&pv.detail(j).scale(c)).unwrap();
            assert!(lin.max_abs_diff(pw.detail(j)).unwrap() < 1e-9);
        }
    }

    #[test]
    fn truncated_equals_full_when_lower_details_vanish() {
        let b = FilterBank::bior68();
        let v = random_volume([18, 18, 18], 7);
        let p = pyramid_decompose(&v, 3, &b).unwrap();
        let mut details = p.details().to_vec();
        let n = details.len();
        for d in &mut details[1..n] {
            *d = d.map(|_| 0.0);
        }
        let zeroed =
            WaveletPyramid::from_parts(b.clone(), p.level_dims().to_vec(), p.coarse().clone(), details).unwrap();
        let full = pyramid_reconstruct(&zeroed).unwrap();
        let t = reconstruct_truncated(p.coarse(), p.detail(3), &LevelTable::of(&p)).unwrap();
        assert!(full.max_abs_diff(&t).unwrap() <= 1e-10);
    }

    #[test]
    fn report_matches_recomputation() {
        let b = FilterBank::bior68();
        let v = random_volume([64, 64, 64], 8);
        let p = pyramid_decompose(&v, 3, &b).unwrap();
        let t = reconstruct_truncated(p.coarse(), p.detail(3), &LevelTable::of(&p)).unwrap();
        let r = compactness_report(&p, &v, &t).unwrap();
        // Closed form from the recurrence: 64 -> 40 -> 28 -> 22.
        let retained = 22usize.pow(3) + 28usize.pow(3);
        assert_eq!(r.retained_coefficients, retained);
        assert_eq!(r.retained_fraction_of_source, retained as f64 / 64f64.powi(3));
        let total = retained + 40usize.pow(3) + 64usize.pow(3);
        assert_eq!(r.retained_fraction_of_pyramid, retained as f64 / total as f64);
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, s) in t.values().iter().zip(v.values()) {
            num += (a - s).abs();
            den += s.abs();
        }
        assert!((r.relative_error - num / den).abs() < 1e-12);
        let e3: f64 = p.detail(3).values().iter().map(|x| x * x).sum();
        assert!((r.detail_energy[0] - e3).abs() < 1e-9 * e3);
    }

    #[test]
    fn synthesis_support_is_adjoint_of_synthesis() {
        let b = FilterBank::bior68();
        let m = b.coeff_len(20);
        for o in 0..m {
            let mut c = vec![0.0; m];
            c[o] = 1.0;
            let mut out = vec![0.0; 20];
            super::super::transform::synthesize_1d(&c, None, &b, &mut out);
            for (p, v) in out.iter().enumerate() {
                let listed = synthesis_support(p, m, &b).any(|q| q == o);
                assert_eq!(*v != 0.0, listed, "o={o} p={p}");
            }
        }
    }

    #[test]
    fn rejects_inconsistent_parts() {
        let b = FilterBank::bior68();
        let p = pyramid_decompose(&random_volume([16; 3], 1), 2, &b).unwrap();
        let bad = WaveletPyramid::from_parts(
            b.clone(),
            p.level_dims().to_vec(),
            Volume3::zeros([3, 3, 3]).unwrap(),
            p.details().to_vec(),
        );
        assert!(bad.is_err());
        let t = LevelTable::of(&p);
        assert!(reconstruct_truncated(p.coarse(), &Volume3::zeros([15, 16, 16]).unwrap(), &t).is_err());
    }
}
