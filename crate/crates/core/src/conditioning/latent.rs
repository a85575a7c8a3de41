use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LATENT_LEN: usize = 256;

/// Fixed-length finite condition vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LatentCode {
    values: Vec<f64>,
}

impl LatentCode {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("latent code is empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("latent entry {i} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn require_len(&self, len: usize) -> Result<()> {
        if self.len() != len {
            return Err(Error::ShapeMismatch(format!("latent length {} != {len}", self.len())));
        }
        Ok(())
    }

    pub fn distance_sq(&self, other: &LatentCode) -> Result<f64> {
        other.require_len(self.len())?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    pub fn distance(&self, other: &LatentCode) -> Result<f64> {
        Ok(self.distance_sq(other)?.sqrt())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

impl TryFrom<Vec<f64>> for LatentCode {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LatentCode> for Vec<f64> {
    fn from(z: LatentCode) -> Self {
        z.values
    }
}

/// `(1 - alpha) * za + alpha * zb` for `alpha` in `[0, 1]`.
pub fn interpolate_latent(za: &LatentCode, zb: &LatentCode, alpha: f64) -> Result<LatentCode> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
    }
    zb.require_len(za.len())?;
    if alpha == 0.0 {
        return Ok(za.clone());
    }
    if alpha == 1.0 {
        return Ok(zb.clone());
    }
    LatentCode::new(
        za.values
            .iter()
            .zip(&zb.values)
            .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
            .collect(),
    )
}
