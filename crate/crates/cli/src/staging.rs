//! Output directories appear complete or not at all: files are written into a
//! hidden sibling directory that is renamed into place on commit.

use std::fs;
use std::path::{Path, PathBuf};

use sprint_core::{Error, Result};
use tempfile::TempDir;

pub struct Staging {
    dir: TempDir,
    target: PathBuf,
}

impl Staging {
    pub fn new(target: &Path, force: bool) -> Result<Self> {
        if target.exists() && !force {
            return Err(Error::Domain(format!(
                "{} already exists; pass --force to replace it",
                target.display()
            )));
        }
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| Error::Io {
            path: parent.clone(),
            source: e,
        })?;
        let dir = tempfile::Builder::new()
            .prefix(".sprint-staging-")
            .tempdir_in(&parent)
            .map_err(|e| Error::Io {
                path: parent.clone(),
                source: e,
            })?;
        Ok(Staging {
            dir,
            target: target.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.path().join(name);
        fs::write(&path, bytes).map_err(|e| Error::Io { path, source: e })
    }

    pub fn commit(self) -> Result<PathBuf> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |e| Error::Io { path, source: e }
        };
        if self.target.exists() {
            if self.target.is_dir() {
                fs::remove_dir_all(&self.target).map_err(io(&self.target))?;
            } else {
                fs::remove_file(&self.target).map_err(io(&self.target))?;
            }
        }
        let staged = self.dir.keep();
        fs::rename(&staged, &self.target).map_err(io(&self.target))?;
        Ok(self.target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_is_all_or_nothing() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("out");
        let s = Staging::new(&target, false).unwrap();
        s.write("a.txt", b"1").unwrap();
        assert!(!target.exists());
        s.commit().unwrap();
        assert_eq!(fs::read(target.join("a.txt")).unwrap(), b"1");

        assert!(Staging::new(&target, false).is_err());
        let s = Staging::new(&target, true).unwrap();
        s.write("b.txt", b"2").unwrap();
        s.commit().unwrap();
        assert!(!target.join("a.txt").exists());
        assert!(target.join("b.txt").exists());

        // dropped without commit: nothing left behind
        let other = root.path().join("never");
        drop(Staging::new(&other, false).unwrap());
        assert!(!other.exists());
        assert_eq!(fs::read_dir(root.path()).unwrap().count(), 1);
    }
}
