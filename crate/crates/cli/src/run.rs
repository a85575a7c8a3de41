use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<waveshape::Error> for CliError {
    fn from(e: waveshape::Error) -> Self {
        Self {
            code: if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_VALIDATION
            },
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::validation(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::validation(format!("json: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// Files under `dir`, relative and sorted.
pub fn list_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out).map_err(|e| CliError::validation(format!("{}: {e}", dir.display())))?;
    out.sort();
    Ok(out)
}

/// Digest over every file of a model directory (relative path, length and
/// contents, in sorted path order).
pub fn model_digest(model: &Path) -> CliResult<String> {
    if !model.exists() {
        return Err(CliError::validation(format!("{}: model not found", model.display())));
    }
    let dir = match model.parent() {
        _ if model.is_dir() => model.to_path_buf(),
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut h = Sha256::new();
    for rel in list_files(&dir)? {
        if rel.file_name().is_some_and(|n| n == RUN_MANIFEST) {
            continue;
        }
        let bytes = fs::read(dir.join(&rel))?;
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Checks a model against an expected digest, if one was given.
pub fn verify_model(model: &Path, expected: Option<&str>) -> CliResult<String> {
    let digest = model_digest(model)?;
    if let Some(want) = expected {
        if !want.eq_ignore_ascii_case(&digest) {
            return Err(CliError::validation(format!(
                "model digest {digest} does not match expected {want}"
            )));
        }
    }
    Ok(digest)
}

pub const RUN_MANIFEST: &str = "run.json";

#[derive(Debug, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to repeat a run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub args: Vec<String>,
    pub seeds: Vec<u64>,
    pub model_digest: Option<String>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
}

impl RunManifest {
    pub fn new(subcommand: &str, args: &[String]) -> Self {
        Self {
            tool: "waveshape",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.into(),
            args: args.to_vec(),
            seeds: Vec::new(),
            model_digest: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.push(FileRecord {
            path: path.display().to_string(),
            sha256: file_digest(path)?,
        });
        Ok(())
    }

    /// Records every file already written to `out` and writes `run.json`.
    pub fn finish(mut self, out: &Path) -> CliResult<()> {
        for rel in list_files(out)? {
            if rel.as_os_str() == RUN_MANIFEST {
                continue;
            }
            self.outputs.push(FileRecord {
                path: rel.display().to_string(),
                sha256: file_digest(&out.join(&rel))?,
            });
        }
        write_json(&out.join(RUN_MANIFEST), &self)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::validation(format!("{}: {e}", dir.display())))
}
