use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// The one directory a command may write into.
pub struct OutputDir {
    dir: PathBuf,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    /// Write `name` inside the directory via a temp file and a rename, so
    /// readers never observe a partial file.
    pub fn write(&self, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
        assert!(
            !name.contains(['/', '\\']) && name != ".." && !name.is_empty(),
            "output names are plain file names"
        );
        let path = self.dir.join(name);
        let io_err = |source| CliError::Io {
            path: path.clone(),
            source,
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io_err)?;
        tmp.write_all(contents).map_err(io_err)?;
        tmp.as_file().sync_all().map_err(io_err)?;
        tmp.persist(&path).map_err(|e| io_err(e.error))?;
        Ok(path)
    }
}
