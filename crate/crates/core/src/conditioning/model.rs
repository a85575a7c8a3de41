use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffusion::{GaussianMixtureOracle, NoiseSchedule, ScheduleParams};
use crate::error::{Error, Result};
use crate::grid::Volume3;
use crate::io::{read_volume, write_volume};
use crate::wavelet::{pyramid_decompose, FilterBank, LevelTable};

use super::detail::NearestDetailPredictor;
use super::encoder::{Encoder, EncoderSpec, PoolProjectEncoder};

pub const MODEL_FORMAT: &str = "waveshape-model/1";
pub const MODEL_MANIFEST: &str = "model.json";

/// Model description; all paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub format: String,
    /// TSDF voxels per axis over `[-1, 1]^3`.
    pub resolution: usize,
    pub levels: usize,
    pub bank: String,
    pub encoder: EncoderSpec,
    pub latent_len: usize,
    /// Mixture corpus directory.
    pub corpus: String,
    pub tau: f64,
    pub schedule: ScheduleParams,
    /// Top-level detail volumes paired with the corpus components.
    pub details: Vec<String>,
}

/// A loaded model: mixture denoiser, encoder, detail predictor, schedule and
/// the level table needed to turn coarse volumes back into TSDFs.
#[derive(Debug, Clone)]
pub struct Model {
    pub manifest: ModelManifest,
    pub oracle: GaussianMixtureOracle,
    pub encoder: PoolProjectEncoder,
    pub details: NearestDetailPredictor,
    pub schedule: NoiseSchedule,
    pub table: LevelTable,
}

/// Settings for assembling a model from training TSDFs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBuild {
    pub levels: usize,
    pub bank: FilterBank,
    pub encoder: EncoderSpec,
    pub tau: f64,
    pub schedule: ScheduleParams,
}

impl Model {
    /// Decomposes each TSDF (cubic, unit-grid), anchors every component at
    /// its own code, and pairs it with its top detail volume.
    pub fn build(tsdfs: &[Volume3], cfg: &ModelBuild) -> Result<Self> {
        let first = tsdfs
            .first()
            .ok_or_else(|| Error::InvalidArgument("model needs at least one training shape".into()))?;
        let n = first.dims()[0];
        if first.dims() != [n; 3] {
            return Err(Error::ShapeMismatch(format!(
                "training TSDFs must be cubic, got {:?}",
                first.dims()
            )));
        }
        let encoder = PoolProjectEncoder::from_spec(&cfg.encoder)?;
        let table = LevelTable::for_unit_grid(n, cfg.levels, cfg.bank.clone())?;
        let mut coarse = Vec::new();
        let mut pairs = Vec::new();
        for v in tsdfs {
            if v.dims() != first.dims() {
                return Err(Error::ShapeMismatch("training TSDFs must share dims".into()));
            }
            let p = pyramid_decompose(v, cfg.levels, &cfg.bank)?;
            coarse.push(p.coarse().clone());
            pairs.push((p.coarse().clone(), p.detail(cfg.levels).clone()));
        }
        let anchors = coarse.iter().map(|c| encoder.encode(c)).collect::<Result<Vec<_>>>()?;
        let oracle = GaussianMixtureOracle::uniform(coarse)?.with_anchors(anchors, cfg.tau)?;
        let manifest = ModelManifest {
            format: MODEL_FORMAT.into(),
            resolution: n,
            levels: cfg.levels,
            bank: cfg.bank.name().into(),
            encoder: cfg.encoder,
            latent_len: encoder.latent_len(),
            corpus: "corpus".into(),
            tau: cfg.tau,
            schedule: cfg.schedule,
            details: (0..pairs.len()).map(|i| format!("details/d{i:03}.wsv")).collect(),
        };
        Ok(Self {
            manifest,
            oracle,
            encoder,
            details: NearestDetailPredictor::new(pairs)?,
            schedule: NoiseSchedule::from_params(cfg.schedule)?,
            table,
        })
    }

    /// Writes the manifest, corpus and detail volumes under `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        self.oracle.save_corpus(dir.join(&self.manifest.corpus))?;
        for (name, (_, d)) in self.manifest.details.iter().zip(self.details.pairs()) {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            write_volume(path, d)?;
        }
        let path = dir.join(MODEL_MANIFEST);
        std::fs::write(&path, serde_json::to_string_pretty(&self.manifest)? + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Loads `model.json` (or a directory containing it) and validates every
    /// cross-reference.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut path = path.as_ref().to_path_buf();
        if path.is_dir() {
            path = path.join(MODEL_MANIFEST);
        }
        let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: ModelManifest = serde_json::from_str(&text)?;
        if manifest.format != MODEL_FORMAT {
            return Err(Error::InvalidData(format!(
                "unknown model format {:?}",
                manifest.format
            )));
        }
        let bank = FilterBank::by_name(&manifest.bank)?;
        let table = LevelTable::for_unit_grid(manifest.resolution, manifest.levels, bank)?;
        let encoder = PoolProjectEncoder::from_spec(&manifest.encoder)?;
        if encoder.latent_len() != manifest.latent_len {
            return Err(Error::InvalidData(
                "encoder latent length disagrees with manifest".into(),
            ));
        }
        let oracle = GaussianMixtureOracle::load_corpus(dir.join(&manifest.corpus))?;
        if oracle.dims() != table.coarse_dims() {
            return Err(Error::InvalidData(format!(
                "corpus dims {:?} do not match coarse dims {:?}",
                oracle.dims(),
                table.coarse_dims()
            )));
        }
        match oracle.anchors() {
            Some(a) if a[0].len() == manifest.latent_len => {}
            _ => return Err(Error::InvalidData("corpus anchors missing or of wrong length".into())),
        }
        if oracle.tau() != manifest.tau {
            return Err(Error::InvalidData("corpus tau disagrees with model manifest".into()));
        }
        if manifest.details.len() != oracle.components().len() {
            return Err(Error::InvalidData(
                "one detail volume per corpus component required".into(),
            ));
        }
        let mut pairs = Vec::new();
        for (c, name) in oracle.components().iter().zip(&manifest.details) {
            let d = read_volume(dir.join(name))?;
            if d.dims() != table.top_detail_dims() {
                return Err(Error::InvalidData(format!("detail {name} has dims {:?}", d.dims())));
            }
            pairs.push((c.clone(), d));
        }
        Ok(Self {
            schedule: NoiseSchedule::from_params(manifest.schedule)?,
            details: NearestDetailPredictor::new(pairs)?,
            manifest,
            oracle,
            encoder,
            table,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::DetailPredictor;
    use crate::tsdf::{sample_tsdf, SdfSource};
    use crate::wavelet::reconstruct_truncated;

    fn shapes(n: usize) -> Vec<Volume3> {
        vec![
            sample_tsdf(
                &SdfSource::Sphere {
                    center: [0.0; 3],
                    radius: 0.5,
                },
                n,
            )
            .unwrap(),
            sample_tsdf(
                &SdfSource::Box {
                    center: [0.0; 3],
                    half_extents: [0.4, 0.3, 0.5],
                },
                n,
            )
            .unwrap(),
        ]
    }

    fn cfg() -> ModelBuild {
        ModelBuild {
            levels: 2,
            bank: FilterBank::bior68(),
            encoder: EncoderSpec::PoolProject {
                seed: 1,
                pool: [4, 4, 4],
                latent_len: 16,
            },
            tau: 0.5,
            schedule: ScheduleParams::default(),
        }
    }

    #[test]
    fn build_save_load() {
        let dir = tempfile::tempdir().unwrap();
        let m = Model::build(&shapes(24), &cfg()).unwrap();
        m.save(dir.path()).unwrap();
        let back = Model::load(dir.path()).unwrap();
        assert_eq!(back.manifest, m.manifest);
        assert_eq!(back.table, m.table);
        // Training coarse volumes retrieve their own details.
        for (c, d) in back.details.pairs() {
            assert_eq!(&back.details.predict(c).unwrap(), d);
        }
        // Anchors are the codes of the components as built (f64, before storage).
        for (c, a) in m.oracle.components().iter().zip(m.oracle.anchors().unwrap()) {
            assert_eq!(&m.encoder.encode(c).unwrap(), a);
        }
    }

    #[test]
    fn training_shapes_reconstruct_through_predicted_details() {
        let tsdfs = shapes(24);
        let m = Model::build(&tsdfs, &cfg()).unwrap();
        for (v, c) in tsdfs.iter().zip(m.oracle.components()) {
            let d = m.details.predict(c).unwrap();
            let direct = {
                let p = pyramid_decompose(v, 2, &FilterBank::bior68()).unwrap();
                reconstruct_truncated(p.coarse(), p.detail(2), &m.table).unwrap()
            };
            let via = reconstruct_truncated(c, &d, &m.table).unwrap();
            assert_eq!(via.values(), direct.values());
        }
    }

    #[test]
    fn load_rejects_inconsistent_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = Model::build(&shapes(24), &cfg()).unwrap();
        m.save(dir.path()).unwrap();
        let path = dir.path().join(MODEL_MANIFEST);
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replace("\"resolution\": 24", "\"resolution\": 32")).unwrap();
        assert!(Model::load(dir.path()).is_err());
        std::fs::write(&path, text.replace("waveshape-model/1", "other")).unwrap();
        assert!(Model::load(dir.path()).is_err());
        std::fs::write(&path, text).unwrap();
        assert!(Model::load(dir.path()).is_ok());
        assert!(Model::build(&[], &cfg()).is_err());
    }
}
