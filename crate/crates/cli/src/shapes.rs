use std::path::{Path, PathBuf};

use waveshape::conditioning::{DetailPredictor, Model};
use waveshape::io::{read_volume, write_volume};
use waveshape::surface::{keep_largest_component, marching_cubes, mesh_stats, DEFAULT_MIN_FRACTION};
use waveshape::tsdf::{normalize_mesh, read_obj, sample_tsdf, write_obj, MeshSdf, SdfSource, TriangleMesh};
use waveshape::Volume3;

use crate::run::{list_files, write_json, CliError, CliResult};

/// Builds a distance source from an OBJ (normalized into the unit cube) or
/// a JSON scene.
pub fn load_source(path: &Path) -> CliResult<SdfSource> {
    match extension(path).as_str() {
        "obj" => Ok(SdfSource::Mesh(MeshSdf::new(normalize_mesh(&read_obj(path)?)?)?)),
        "json" => Ok(SdfSource::load_scene(path)?),
        other => Err(CliError::validation(format!(
            "{}: unsupported shape extension {other:?}",
            path.display()
        ))),
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .map(|e| e.to_string_lossy().to_lowercase())
        .unwrap_or_default()
}

/// A cubic TSDF at resolution `res`, sampled from a shape or read from WSV1.
pub fn load_tsdf(path: &Path, res: usize) -> CliResult<Volume3> {
    if extension(path) == "wsv" {
        let v = read_volume(path)?;
        if v.dims() != [res; 3] {
            return Err(CliError::validation(format!(
                "{}: dims {:?}, expected {res}^3",
                path.display(),
                v.dims()
            )));
        }
        return Ok(v);
    }
    Ok(sample_tsdf(&load_source(path)?, res)?)
}

/// Coarse volume to TSDF (predicted details, truncated inverse) and mesh
/// (marching cubes at 0, small components dropped).
pub fn coarse_to_shape(model: &Model, coarse: &Volume3) -> CliResult<(Volume3, TriangleMesh)> {
    let detail = model.details.predict(coarse)?;
    let tsdf = waveshape::wavelet::reconstruct_truncated(coarse, &detail, &model.table)?;
    let mesh = keep_largest_component(&marching_cubes(&tsdf, 0.0)?, DEFAULT_MIN_FRACTION);
    Ok((tsdf, mesh))
}

/// Writes `<stem>.obj`, `<stem>.coarse.wsv` and `<stem>.stats.json`.
pub fn write_shape(dir: &Path, stem: &str, coarse: &Volume3, mesh: &TriangleMesh) -> CliResult<()> {
    write_obj(dir.join(format!("{stem}.obj")), mesh)?;
    write_volume(dir.join(format!("{stem}.coarse.wsv")), coarse)?;
    write_json(&dir.join(format!("{stem}.stats.json")), &mesh_stats(mesh))
}

/// OBJ files directly inside `dir`, sorted by name.
pub fn obj_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(CliError::validation(format!("{} is not a directory", dir.display())));
    }
    let files: Vec<PathBuf> = list_files(dir)?
        .into_iter()
        .filter(|p| p.components().count() == 1 && extension(p) == "obj")
        .map(|p| dir.join(p))
        .collect();
    if files.is_empty() {
        return Err(CliError::validation(format!("no .obj files in {}", dir.display())));
    }
    Ok(files)
}
