//! Finding, loading, filtering and splitting instance files.

use std::path::{Path, PathBuf};

use fairpb_core::data::{assign_split, default_splits, rejection, Cache, DataError, DatasetEntry, Rejection, SplitRole};
use walkdir::WalkDir;

use crate::error::CliError;

pub fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

/// `.pb` files under each path (or the path itself), sorted, no repeats.
pub fn collect_files(root: &Path, paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for p in paths {
        let full = resolve(root, p);
        if full.is_file() {
            files.push(full);
        } else if full.is_dir() {
            for entry in WalkDir::new(&full) {
                let entry = entry.map_err(|e| CliError::input(e.to_string()))?;
                if entry.file_type().is_file() && entry.path().extension().is_some_and(|x| x == "pb") {
                    files.push(entry.into_path());
                }
            }
        } else {
            return Err(CliError::input(format!("{}: no such file or directory", full.display())));
        }
    }
    files.sort();
    files.dedup();
    Ok(files)
}

#[derive(Debug, Clone)]
pub struct Loaded {
    /// path relative to the data root where possible
    pub name: String,
    pub hash: String,
    pub entry: DatasetEntry,
    pub rejection: Option<Rejection>,
    pub split: SplitRole,
}

pub fn display_name(root: &Path, path: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).display().to_string()
}

pub fn load_one(cache: &Cache, root: &Path, path: &Path) -> Result<Loaded, DataError> {
    let (hash, entry) = cache.load(path)?;
    let rejection = rejection(&entry);
    let split = assign_split(&entry, &default_splits());
    Ok(Loaded { name: display_name(root, path), hash, entry, rejection, split })
}

/// Loads every file; parse failures come back separately, with the file.
pub fn load_all(cache: &Cache, root: &Path, files: &[PathBuf]) -> (Vec<Loaded>, Vec<(String, DataError)>) {
    use rayon::prelude::*;
    let results: Vec<_> = files.par_iter().map(|f| (f, load_one(cache, root, f))).collect();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (f, r) in results {
        match r {
            Ok(l) => ok.push(l),
            Err(e) => failed.push((display_name(root, f), e)),
        }
    }
    (ok, failed)
}

/// Loads and keeps the instances that pass the filters, optionally only
/// those in `split`. Any parse failure is an input error.
pub fn load_filtered(cache: &Cache, root: &Path, paths: &[PathBuf], split: Option<SplitRole>) -> Result<Vec<Loaded>, CliError> {
    let files = collect_files(root, paths)?;
    let (loaded, failed) = load_all(cache, root, &files);
    if let Some((name, e)) = failed.into_iter().next() {
        return Err(CliError::input(format!("{name}: {e}")));
    }
    Ok(loaded
        .into_iter()
        .filter(|l| l.rejection.is_none())
        .filter(|l| split.is_none_or(|s| l.split == s))
        .collect())
}
