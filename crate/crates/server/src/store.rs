//! Snapshot-per-file persistence.

use std::path::{Path, PathBuf};

use graphdsl_core::ids::ElementId;
use graphdsl_core::model::GraphModelInstance;
use graphdsl_core::service::{PersistError, Persistence};

/// Stores each model as `<id>.json` in one directory. Writes go through a
/// temporary file and a rename, so a crash never leaves a torn snapshot.
#[derive(Debug, Clone)]
pub struct DirectoryStore {
    dir: PathBuf,
}

impl DirectoryStore {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(DirectoryStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: ElementId) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }
}

fn err(e: impl std::fmt::Display) -> PersistError {
    PersistError(e.to_string())
}

impl Persistence for DirectoryStore {
    fn persist(&self, model: &GraphModelInstance) -> Result<(), PersistError> {
        let text = serde_json::to_string_pretty(model).map_err(err)?;
        let tmp = self.dir.join(format!(".{}.tmp", model.id));
        std::fs::write(&tmp, text).map_err(err)?;
        std::fs::rename(&tmp, self.path(model.id)).map_err(err)
    }

    fn load(&self, id: ElementId) -> Result<Option<GraphModelInstance>, PersistError> {
        match std::fs::read_to_string(self.path(id)) {
            Ok(text) => serde_json::from_str(&text).map(Some).map_err(err),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(err(e)),
        }
    }

    fn model_ids(&self) -> Vec<ElementId> {
        let Ok(entries) = std::fs::read_dir(&self.dir) else { return Vec::new() };
        let mut ids: Vec<ElementId> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str()?.strip_suffix(".json")?.parse().ok())
            .collect();
        ids.sort();
        ids
    }
}
