//! Run directories. Each run gets a fresh directory that is never reused,
//! and every file lands by write-then-rename so readers never see a partial
//! artifact.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Environment variable naming the directory under which runs are created.
pub const OUTPUT_ROOT_ENV: &str = "ADAPTIVE_REACH_OUTPUT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

/// `$ADAPTIVE_REACH_OUTPUT`, else `./runs`.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .filter(|v| !v.is_empty())
        .map_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT), PathBuf::from)
}

#[derive(Debug, Clone)]
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    /// Create `root/name`, or `root/name-1`, `root/name-2`, ... if taken.
    pub fn create_unique(root: &Path, name: &str) -> Result<Self> {
        fs::create_dir_all(root)?;
        for k in 0u32.. {
            let candidate = if k == 0 { root.join(name) } else { root.join(format!("{name}-{k}")) };
            match fs::create_dir(&candidate) {
                Ok(()) => return Ok(Self { path: candidate }),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e.into()),
            }
        }
        unreachable!("u32 suffixes exhausted")
    }

    /// Use `path` itself, which must not exist yet or be an empty directory.
    pub fn create_exact(path: &Path) -> Result<Self> {
        if path.exists() {
            if !path.is_dir() || fs::read_dir(path)?.next().is_some() {
                return Err(Error::OutputExists(path.to_path_buf()));
            }
        } else {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::create_dir(path)?;
        }
        Ok(Self { path: path.to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Atomically create `name` with the bytes produced by `fill`. An
    /// existing file is never replaced.
    pub fn write_with<F>(&self, name: &str, fill: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut dyn Write) -> Result<()>,
    {
        let target = self.path.join(name);
        if target.exists() {
            return Err(Error::OutputExists(target));
        }
        let tmp = self.path.join(format!(".{name}.tmp"));
        let result = (|| {
            let file = fs::File::create(&tmp)?;
            let mut w = BufWriter::new(file);
            fill(&mut w)?;
            let file = w.into_inner().map_err(|e| e.into_error())?;
            file.sync_all()?;
            Ok(())
        })();
        if let Err(e) = result {
            let _ = fs::remove_file(&tmp);
            return Err(e);
        }
        fs::rename(&tmp, &target)?;
        Ok(target)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        self.write_with(name, |w| Ok(w.write_all(bytes)?))
    }
}

/// Read a whole input file; a missing file maps to [`Error::MissingInput`].
pub fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unique_directories_never_collide() {
        let tmp = tempfile::tempdir().unwrap();
        let a = RunDir::create_unique(tmp.path(), "train").unwrap();
        let b = RunDir::create_unique(tmp.path(), "train").unwrap();
        assert_ne!(a.path(), b.path());
        assert!(b.path().ends_with("train-1"));
    }

    #[test]
    fn files_are_never_overwritten() {
        let tmp = tempfile::tempdir().unwrap();
        let d = RunDir::create_unique(tmp.path(), "x").unwrap();
        d.write("a.txt", b"one").unwrap();
        assert!(matches!(d.write("a.txt", b"two"), Err(Error::OutputExists(_))));
        assert_eq!(fs::read(d.path().join("a.txt")).unwrap(), b"one");
        let leftovers: Vec<_> = fs::read_dir(d.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn failed_fill_leaves_nothing_behind() {
        let tmp = tempfile::tempdir().unwrap();
        let d = RunDir::create_unique(tmp.path(), "x").unwrap();
        let r = d.write_with("b.txt", |w| {
            w.write_all(b"partial")?;
            Err(Error::EmptyCorpus)
        });
        assert!(r.is_err());
        assert_eq!(fs::read_dir(d.path()).unwrap().count(), 0);
    }

    #[test]
    fn exact_directory_must_be_fresh() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("run");
        let d = RunDir::create_exact(&p).unwrap();
        d.write("f", b"1").unwrap();
        assert!(matches!(RunDir::create_exact(&p), Err(Error::OutputExists(_))));
    }

    #[test]
    fn missing_input_is_classified() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(read_input(&tmp.path().join("nope")), Err(Error::MissingInput(_))));
    }
}
