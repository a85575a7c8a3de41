use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RegionMask3;
use crate::wavelet::LevelTable;

use super::mask::mask_to_coefficient_domain;
use super::scheduler::{ManipulationMode, DEFAULT_DELTA_T, DEFAULT_REPEATS};

/// Manipulation request as stored on disk; paths are relative to the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub model: String,
    pub mode: ManipulationMode,
    /// WSV1 mask on either the TSDF grid or the coarse grid.
    pub mask: String,
    #[serde(default = "default_delta_t")]
    pub delta_t: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Latent code JSON files.
    pub z_a: String,
    #[serde(default)]
    pub z_b: Option<String>,
    pub seed: u64,
}

fn default_delta_t() -> usize {
    DEFAULT_DELTA_T
}

fn default_repeats() -> usize {
    DEFAULT_REPEATS
}

impl PlanFile {
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let plan: PlanFile = serde_json::from_str(&text)?;
        Ok((plan, path.parent().unwrap_or(Path::new(".")).to_path_buf()))
    }
}

/// Brings a mask onto the coarse grid: TSDF-grid masks are mapped through
/// the analysis supports, coarse-grid masks are used as is.
pub fn resolve_mask(mask: &RegionMask3, table: &LevelTable) -> Result<RegionMask3> {
    if mask.dims() == table.coarse_dims() {
        Ok(mask.clone())
    } else if mask.dims() == table.dims[0] {
        mask_to_coefficient_domain(mask, table.levels(), &table.bank)
    } else {
        Err(Error::ShapeMismatch(format!(
            "mask dims {:?} match neither the TSDF grid {:?} nor the coarse grid {:?}",
            mask.dims(),
            table.dims[0],
            table.coarse_dims()
        )))
    }
}
