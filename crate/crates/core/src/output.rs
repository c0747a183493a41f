//! Output directory handling. Every file is written to a temporary file in
//! the target directory and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunSpec;
use crate::error::{Error, Result};

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_error(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_error(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_error(path, e))?;
    tmp.persist(path).map_err(|e| io_error(path, e.error))?;
    Ok(())
}

/// A run's output directory.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    /// Creates the directory if needed and checks that it is writable.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| io_error(&root, e))?;
        tempfile::NamedTempFile::new_in(&root).map_err(|e| io_error(&root, e))?;
        Ok(Self { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(name);
        write_atomic(&path, text.as_bytes())?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io {
            path: self.path(name).display().to_string(),
            source: std::io::Error::other(e),
        })?;
        text.push('\n');
        self.write_text(name, &text)
    }
}

/// JSON summary of one command: the software version, the effective spec and
/// the command's results.
#[derive(Debug, Serialize)]
pub struct Summary<'a, T: Serialize> {
    pub command: &'a str,
    pub software_version: &'a str,
    pub spec: &'a RunSpec,
    pub warnings: &'a [String],
    pub results: T,
}

impl<'a, T: Serialize> Summary<'a, T> {
    pub fn new(command: &'a str, spec: &'a RunSpec, warnings: &'a [String], results: T) -> Self {
        Self {
            command,
            software_version: env!("CARGO_PKG_VERSION"),
            spec,
            warnings,
            results,
        }
    }
}
