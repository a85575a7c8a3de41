use crate::error::{Error, Result};
use crate::grid::Volume3;

/// Predicts the top-level detail volume from a coarse volume.
pub trait DetailPredictor: Send + Sync {
    fn predict(&self, c0: &Volume3) -> Result<Volume3>;
}

/// Returns the detail paired with the nearest stored coarse volume (L2;
/// ties resolved by lowest index).
#[derive(Debug, Clone)]
pub struct NearestDetailPredictor {
    pairs: Vec<(Volume3, Volume3)>,
}

impl NearestDetailPredictor {
    pub fn new(pairs: Vec<(Volume3, Volume3)>) -> Result<Self> {
        let Some((c0, d0)) = pairs.first() else {
            return Err(Error::InvalidArgument(
                "detail predictor needs at least one pair".into(),
            ));
        };
        let (cd, dd) = (c0.dims(), d0.dims());
        for (c, d) in &pairs {
            if c.dims() != cd || d.dims() != dd {
                return Err(Error::ShapeMismatch("training pairs must share dims".into()));
            }
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(Volume3, Volume3)] {
        &self.pairs
    }

    pub fn nearest(&self, c0: &Volume3) -> Result<usize> {
        let mut best = (f64::INFINITY, 0);
        for (i, (c, _)) in self.pairs.iter().enumerate() {
            let d = c0.l2_distance(c)?;
            if d < best.0 {
                best = (d, i);
            }
        }
        Ok(best.1)
    }
}

impl DetailPredictor for NearestDetailPredictor {
    fn predict(&self, c0: &Volume3) -> Result<Volume3> {
        Ok(self.pairs[self.nearest(c0)?].1.clone())
    }
}
