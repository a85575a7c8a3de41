//! Named, counter-based random streams.
//!
//! Every draw is addressed by `(seed, chain, step, tag)`; the 32-byte ChaCha
//! key is those four words little-endian, so streams never depend on how many
//! values another stream consumed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::grid::{voxel_count, Dims, Volume3};

/// Chain id used by plain sampling and by chain A of a manipulation.
pub const CHAIN_A: u64 = 0;
pub const CHAIN_B: u64 = 1;

/// Purpose tags separating streams that share a chain and step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamTag {
    InitialNoise = 1,
    StepNoise = 2,
    Harmonize = 3,
    Training = 4,
    Refinement = 5,
    Surface = 6,
    HarmonizeStep = 7,
    Misc = 8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamId {
    pub seed: u64,
    pub chain: u64,
    pub step: u64,
    pub tag: StreamTag,
}

impl StreamId {
    pub fn new(seed: u64, chain: u64, step: u64, tag: StreamTag) -> Self {
        Self { seed, chain, step, tag }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.chain.to_le_bytes());
        key[16..24].copy_from_slice(&self.step.to_le_bytes());
        key[24..32].copy_from_slice(&(self.tag as u64).to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }
}

/// Fills `n` standard normal draws from the stream.
pub fn normals(id: StreamId, n: usize) -> Vec<f64> {
    let mut rng = id.rng();
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// A unit-frame volume of standard normal draws.
pub fn normal_volume(id: StreamId, dims: Dims) -> Result<Volume3> {
    Volume3::from_values(dims, normals(id, voxel_count(dims)))
}

/// Seed for the `index`-th independent job under one user seed, drawn from
/// the `(seed, index, 0, Misc)` stream.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    StreamId::new(seed, index, 0, StreamTag::Misc).rng().next_u64()
}
