//! Staged report writing.
//!
//! Reports are written into a hidden sibling of the output directory and
//! moved into place only after every file has been written and read back,
//! so a failed run leaves no partial or mixed-version reports.

use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

pub struct Staging {
    dir: tempfile::TempDir,
    target: PathBuf,
    files: Vec<String>,
}

impl Staging {
    pub fn new(target: &Path) -> CliResult<Self> {
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
        let dir = tempfile::Builder::new()
            .prefix(".impression-audit-staging-")
            .tempdir_in(&parent)
            .map_err(|e| CliError::io(&parent, e))?;
        Ok(Staging {
            dir,
            target: target.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Path inside the staging area for `rel`, creating parent directories.
    pub fn path(&mut self, rel: &str) -> CliResult<PathBuf> {
        let p = self.dir.path().join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        if !self.files.iter().any(|f| f == rel) {
            self.files.push(rel.to_owned());
        }
        Ok(p)
    }

    pub fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> CliResult<()> {
        let p = self.path(rel)?;
        std::fs::write(&p, contents).map_err(|e| CliError::io(&p, e))
    }

    pub fn write_json<T: serde::Serialize>(&mut self, rel: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text)
    }

    pub fn staged(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    /// Moves every staged file into the target directory. Files moved before
    /// a failure are removed again.
    pub fn commit(self) -> CliResult<Vec<PathBuf>> {
        let mut moved: Vec<PathBuf> = Vec::new();
        let result = (|| {
            for rel in &self.files {
                let to = self.target.join(rel);
                if let Some(parent) = to.parent() {
                    std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
                }
                std::fs::rename(self.dir.path().join(rel), &to)
                    .map_err(|e| CliError::io(&to, e))?;
                moved.push(to);
            }
            Ok(())
        })();
        match result {
            Ok(()) => Ok(moved),
            Err(e) => {
                for p in &moved {
                    let _ = std::fs::remove_file(p);
                }
                Err(e)
            }
        }
    }
}

/// Writes rows through the csv crate so fields are quoted when needed.
pub fn csv_string<R, I, S>(header: &[&str], rows: R) -> CliResult<String>
where
    R: IntoIterator<Item = I>,
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let internal = |e: csv::Error| CliError::Internal(format!("CSV writer: {e}"));
    w.write_record(header).map_err(internal)?;
    for r in rows {
        w.write_record(r).map_err(internal)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Internal(format!("CSV writer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::Internal(e.to_string()))
}
