//! Verified task packages, shared read-only by sessions.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use stepwise_core::fsm::{FsmError, TaskPackage, PACKAGE_FILE};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("package {path}: {source}")]
    Load { path: PathBuf, source: FsmError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Default)]
pub struct PackageStore {
    dir: Option<PathBuf>,
    packages: RwLock<BTreeMap<String, Arc<TaskPackage>>>,
}

impl PackageStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads every `<dir>/<task>/package.json` (and `<dir>/package.json`
    /// itself, if present). Any checksum failure refuses the whole load.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        let store = Self {
            dir: Some(dir.to_path_buf()),
            packages: RwLock::default(),
        };
        store.reload()?;
        Ok(store)
    }

    pub fn reload(&self) -> Result<usize, StoreError> {
        let Some(dir) = &self.dir else {
            return Ok(self.len());
        };
        let mut found = BTreeMap::new();
        let mut candidates = vec![dir.clone()];
        if dir.is_dir() {
            let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_dir())
                .collect();
            subdirs.sort();
            candidates.extend(subdirs);
        }
        for d in candidates {
            if !d.join(PACKAGE_FILE).is_file() {
                continue;
            }
            let pkg = TaskPackage::read_dir(&d).map_err(|source| StoreError::Load {
                path: d.join(PACKAGE_FILE),
                source,
            })?;
            found.insert(pkg.name.clone(), Arc::new(pkg));
        }
        let n = found.len();
        *self.packages.write().expect("store lock") = found;
        Ok(n)
    }

    pub fn get(&self, task: &str) -> Option<Arc<TaskPackage>> {
        self.packages.read().expect("store lock").get(task).cloned()
    }

    pub fn names(&self) -> Vec<String> {
        self.packages.read().expect("store lock").keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.packages.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers a package, persisting it under the store directory if there is one.
    pub fn insert(&self, package: TaskPackage) -> Result<Arc<TaskPackage>, StoreError> {
        if let Some(dir) = &self.dir {
            package
                .write_dir(&dir.join(&package.name))
                .map_err(|source| StoreError::Load {
                    path: dir.join(&package.name),
                    source,
                })?;
        }
        let pkg = Arc::new(package);
        self.packages
            .write()
            .expect("store lock")
            .insert(pkg.name.clone(), pkg.clone());
        Ok(pkg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use stepwise_core::fixtures::sandwich_fsm;
    use stepwise_core::fsm::compile;

    #[test]
    fn persists_and_verifies() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().to_path_buf();
        let store = PackageStore::open(&dir).unwrap();
        assert!(store.is_empty());
        store.insert(compile(&sandwich_fsm()).unwrap()).unwrap();
        let again = PackageStore::open(&dir).unwrap();
        assert_eq!(again.names(), vec!["sandwich"]);

        let path = dir.join("sandwich").join(PACKAGE_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("Your sandwich", "The sandwich");
        fs::write(&path, text).unwrap();
        assert!(matches!(PackageStore::open(&dir), Err(StoreError::Load { .. })));
    }
}
