//! On-disk cache of parsed entries and their cohesive groups, keyed by the
//! SHA-256 of the source file. Files are written to a temporary name and
//! renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{content_hash, parse_pabulib, DataError, DatasetEntry};
use crate::cohesion::{mine_cohesive_groups, read_group_csv, write_group_csv, GroupIndex};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: String,
    pub hash: String,
    pub split: String,
    pub n: usize,
    pub m: usize,
    /// minor units
    pub budget: u64,
}

#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

fn write_atomic(target: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let dir = target.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(target).map_err(|e| DataError::Io(e.error))?;
    Ok(())
}

impl Cache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, DataError> {
        let root = root.into();
        fs::create_dir_all(root.join("entries"))?;
        fs::create_dir_all(root.join("groups"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry_path(&self, hash: &str) -> PathBuf {
        self.root.join("entries").join(format!("{hash}.json"))
    }

    fn groups_path(&self, hash: &str) -> PathBuf {
        self.root.join("groups").join(format!("{hash}.csv"))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.csv")
    }

    /// Parses `path`, or returns the cached entry for identical content.
    pub fn load(&self, path: &Path) -> Result<(String, DatasetEntry), DataError> {
        let bytes = fs::read(path)?;
        let hash = content_hash(&bytes);
        let cached = self.entry_path(&hash);
        if let Ok(json) = fs::read(&cached) {
            match serde_json::from_slice::<DatasetEntry>(&json) {
                Ok(entry) => return Ok((hash, entry)),
                Err(e) => log::warn!("discarding unreadable cache entry {}: {e}", cached.display()),
            }
        }
        let text = String::from_utf8_lossy(&bytes);
        let entry = parse_pabulib(&text)?;
        let json = serde_json::to_vec(&entry).map_err(|e| DataError::Cache(e.to_string()))?;
        write_atomic(&cached, &json)?;
        Ok((hash, entry))
    }

    /// Whether groups for this hash are already on disk.
    pub fn has_groups(&self, hash: &str) -> bool {
        self.groups_path(hash).exists()
    }

    /// Cohesive groups of a cached entry, mined on first request.
    pub fn groups(&self, hash: &str, entry: &DatasetEntry) -> Result<GroupIndex, DataError> {
        let path = self.groups_path(hash);
        if let Ok(file) = fs::File::open(&path) {
            match read_group_csv(file, &entry.instance, &entry.profile) {
                Ok(index) => return Ok(index),
                Err(e) => log::warn!("re-mining groups for {hash}: {e}"),
            }
        }
        let index = mine_cohesive_groups(&entry.instance, &entry.profile);
        let mut buf = Vec::new();
        write_group_csv(&index, &mut buf).map_err(|e| DataError::Cache(e.to_string()))?;
        write_atomic(&path, &buf)?;
        Ok(index)
    }

    pub fn write_manifest(&self, rows: &[ManifestRow]) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| DataError::Cache(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| DataError::Cache(e.to_string()))?;
        write_atomic(&self.manifest_path(), &bytes)
    }

    pub fn read_manifest(&self) -> Result<Vec<ManifestRow>, DataError> {
        let mut r = csv::Reader::from_path(self.manifest_path()).map_err(|e| DataError::Cache(e.to_string()))?;
        r.deserialize()
            .collect::<Result<Vec<ManifestRow>, _>>()
            .map_err(|e| DataError::Cache(e.to_string()))
    }
}
