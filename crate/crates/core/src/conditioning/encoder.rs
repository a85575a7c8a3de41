use serde::{Deserialize, Serialize};

use crate::diffusion::rng::{normals, StreamId, StreamTag};
use crate::error::{Error, Result};
use crate::grid::{voxel_count, Dims, Volume3};

use super::latent::LatentCode;

/// Maps a coarse volume to a latent code; deterministic.
pub trait Encoder: Send + Sync {
    fn latent_len(&self) -> usize;
    fn encode(&self, c0: &Volume3) -> Result<LatentCode>;
}

/// Serializable encoder description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EncoderSpec {
    PoolProject { seed: u64, pool: Dims, latent_len: usize },
}

pub const DEFAULT_POOL: Dims = [8, 8, 8];

/// Block-average pooling onto a small grid followed by a fixed projection
/// with orthonormal rows.
///
/// Voxel `i` of an axis of length `n` falls in bin `floor(i * p / n)`, so
/// the encoder accepts any input with every axis at least as long as the
/// pooling grid. The map is linear in the input.
#[derive(Debug, Clone)]
pub struct PoolProjectEncoder {
    seed: u64,
    pool: Dims,
    latent_len: usize,
    /// Row-major `latent_len x pooled_len`.
    projection: Vec<f64>,
}

impl PoolProjectEncoder {
    pub fn new(seed: u64, pool: Dims, latent_len: usize) -> Result<Self> {
        let pooled = voxel_count(pool);
        if pool.contains(&0) || latent_len == 0 || latent_len > pooled {
            return Err(Error::InvalidArgument(format!(
                "latent length {latent_len} must be in 1..={pooled} for pooling grid {pool:?}"
            )));
        }
        let mut rows = normals(StreamId::new(seed, 0, 0, StreamTag::Misc), latent_len * pooled);
        for r in 0..latent_len {
            // Two passes of modified Gram-Schmidt.
            for _ in 0..2 {
                for q in 0..r {
                    let (done, rest) = rows.split_at_mut(r * pooled);
                    let qrow = &done[q * pooled..(q + 1) * pooled];
                    let row = &mut rest[..pooled];
                    let d: f64 = row.iter().zip(qrow).map(|(a, b)| a * b).sum();
                    row.iter_mut().zip(qrow).for_each(|(a, b)| *a -= d * b);
                }
            }
            let row = &mut rows[r * pooled..(r + 1) * pooled];
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n < 1e-8 {
                return Err(Error::Numerical("projection rows are linearly dependent".into()));
            }
            row.iter_mut().for_each(|v| *v /= n);
        }
        Ok(Self {
            seed,
            pool,
            latent_len,
            projection: rows,
        })
    }

    pub fn from_spec(spec: &EncoderSpec) -> Result<Self> {
        match *spec {
            EncoderSpec::PoolProject { seed, pool, latent_len } => Self::new(seed, pool, latent_len),
        }
    }

    pub fn spec(&self) -> EncoderSpec {
        EncoderSpec::PoolProject {
            seed: self.seed,
            pool: self.pool,
            latent_len: self.latent_len,
        }
    }

    pub fn pool_dims(&self) -> Dims {
        self.pool
    }

    pub fn bin_of(&self, axis: usize, i: usize, n: usize) -> usize {
        i * self.pool[axis] / n
    }

    /// Block means on the pooling grid, x fastest.
    pub fn pool(&self, c0: &Volume3) -> Result<Vec<f64>> {
        let d = c0.dims();
        if (0..3).any(|a| d[a] < self.pool[a]) {
            return Err(Error::ShapeMismatch(format!(
                "volume {d:?} smaller than pooling grid {:?}",
                self.pool
            )));
        }
        let p = self.pool;
        let mut sums = vec![0.0; voxel_count(p)];
        let mut counts = vec![0usize; sums.len()];
        let bx: Vec<usize> = (0..d[0]).map(|i| self.bin_of(0, i, d[0])).collect();
        let by: Vec<usize> = (0..d[1]).map(|i| self.bin_of(1, i, d[1])).collect();
        let bz: Vec<usize> = (0..d[2]).map(|i| self.bin_of(2, i, d[2])).collect();
        let mut idx = 0;
        for k in 0..d[2] {
            for j in 0..d[1] {
                let base = (bz[k] * p[1] + by[j]) * p[0];
                for &b in &bx {
                    sums[base + b] += c0.values()[idx];
                    counts[base + b] += 1;
                    idx += 1;
                }
            }
        }
        Ok(sums.iter().zip(&counts).map(|(s, c)| s / *c as f64).collect())
    }

    /// Replaces every voxel with the mean of its pooling bin.
    pub fn block_mean(&self, c0: &Volume3) -> Result<Volume3> {
        let pooled = self.pool(c0)?;
        let d = c0.dims();
        let p = self.pool;
        let mut out = Vec::with_capacity(c0.len());
        for k in 0..d[2] {
            for j in 0..d[1] {
                for i in 0..d[0] {
                    let b = (self.bin_of(2, k, d[2]) * p[1] + self.bin_of(1, j, d[1])) * p[0] + self.bin_of(0, i, d[0]);
                    out.push(pooled[b]);
                }
            }
        }
        c0.with_values(out)
    }
}

impl Encoder for PoolProjectEncoder {
    fn latent_len(&self) -> usize {
        self.latent_len
    }

    fn encode(&self, c0: &Volume3) -> Result<LatentCode> {
        let pooled = self.pool(c0)?;
        let n = pooled.len();
        LatentCode::new(
            (0..self.latent_len)
                .map(|r| {
                    self.projection[r * n..(r + 1) * n]
                        .iter()
                        .zip(&pooled)
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::rng::normal_volume;

    fn vol(seed: u64, dims: Dims) -> Volume3 {
        normal_volume(StreamId::new(seed, 3, 0, StreamTag::Misc), dims).unwrap()
    }

    #[test]
    fn rows_are_orthonormal() {
        let e = PoolProjectEncoder::new(5, [4, 4, 4], 32).unwrap();
        let n = 64;
        for a in 0..32 {
            for b in 0..32 {
                let d: f64 = (0..n).map(|i| e.projection[a * n + i] * e.projection[b * n + i]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn encode_is_linear_and_deterministic() {
        let e = PoolProjectEncoder::new(1, DEFAULT_POOL, 256).unwrap();
        let u = vol(1, [22, 22, 22]);
        let v = vol(2, [22, 22, 22]);
        let (a, b) = (0.7, -1.3);
        let lhs = e.encode(&u.scale(a).add(&v.scale(b)).unwrap()).unwrap();
        let (eu, ev) = (e.encode(&u).unwrap(), e.encode(&v).unwrap());
        for i in 0..256 {
            assert!((lhs.values()[i] - (a * eu.values()[i] + b * ev.values()[i])).abs() < 1e-9);
        }
        assert_eq!(e.encode(&u).unwrap(), eu);
        let again = PoolProjectEncoder::new(1, DEFAULT_POOL, 256).unwrap();
        assert_eq!(again.encode(&u).unwrap(), eu);
    }

    #[test]
    fn pooling_matches_direct_average() {
        let e = PoolProjectEncoder::new(0, [2, 3, 2], 4).unwrap();
        let v = vol(7, [5, 7, 4]);
        let pooled = e.pool(&v).unwrap();
        // Bin (1, 2, 0) covers x in 3..5, y in 5..7, z in 0..2.
        let mut s = 0.0;
        for k in 0..2 {
            for j in 5..7 {
                for i in 3..5 {
                    s += v.at(i, j, k);
                }
            }
        }
        assert!((pooled[2 * 2 + 1] - s / 8.0).abs() < 1e-14);
        let bm = e.block_mean(&v).unwrap();
        assert_eq!(e.pool(&bm).unwrap().len(), pooled.len());
        for (a, b) in e.pool(&bm).unwrap().iter().zip(&pooled) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(PoolProjectEncoder::new(0, [2, 2, 2], 9).is_err());
        assert!(PoolProjectEncoder::new(0, [2, 0, 2], 1).is_err());
        let e = PoolProjectEncoder::new(0, [8, 8, 8], 16).unwrap();
        assert!(e.encode(&Volume3::zeros([7, 8, 8]).unwrap()).is_err());
        let spec = e.spec();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<EncoderSpec>(&json).unwrap(), spec);
    }
}
