//! Dataset manifest: CSV mapping stack ids to container files, splits, and
//! observed labeling times.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{load_stack, Split, Stack};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub stack_id: String,
    pub path: PathBuf,
    pub split: Split,
    pub gt_label_time: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.stack_id.as_str()) {
                return Err(Error::DuplicateStackId(e.stack_id.clone()));
            }
        }
        Ok(DatasetManifest { entries })
    }

    /// Load the CSV and check ids are unique and every referenced file exists.
    /// Relative paths are resolved against the manifest's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let display = path.display().to_string();
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::Csv {
                path: display.clone(),
                source: e,
            })?;
        let mut entries = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Csv {
                path: display.clone(),
                source: e,
            })?;
            if record.len() < 3 {
                return Err(Error::Config(format!(
                    "manifest row has {} fields, expected 4",
                    record.len()
                )));
            }
            let stack_id = record[0].to_string();
            let raw_path = PathBuf::from(&record[1]);
            let file = if raw_path.is_absolute() {
                raw_path
            } else {
                base.join(raw_path)
            };
            let split: Split = record[2].parse()?;
            let gt_label_time = match record.get(3).unwrap_or("") {
                "" => None,
                s => Some(s.parse::<f64>().map_err(|_| {
                    Error::Config(format!("bad gt_label_time {s:?} for {stack_id}"))
                })?),
            };
            if !file.exists() {
                return Err(Error::MissingFile {
                    path: file.display().to_string(),
                    stack_id,
                });
            }
            entries.push(ManifestEntry {
                stack_id,
                path: file,
                split,
                gt_label_time,
            });
        }
        DatasetManifest::new(entries)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let display = path.display().to_string();
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Csv {
            path: display.clone(),
            source: e,
        })?;
        let map_err = |e| Error::Csv {
            path: display.clone(),
            source: e,
        };
        writer
            .write_record(["stack_id", "path", "split", "gt_label_time"])
            .map_err(map_err)?;
        for e in &self.entries {
            let time = e.gt_label_time.map(|t| t.to_string()).unwrap_or_default();
            writer
                .write_record([
                    e.stack_id.as_str(),
                    &e.path.display().to_string(),
                    e.split.as_str(),
                    &time,
                ])
                .map_err(map_err)?;
        }
        writer.flush().map_err(|e| Error::io(display, e))
    }

    pub fn by_split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

/// Load every stack in the manifest, applying split and labeling time from
/// the manifest rows (the container itself carries neither).
pub fn load_dataset(manifest: &DatasetManifest) -> Result<Vec<Stack>> {
    let loaded = crate::util::par_map(&manifest.entries, |e| -> Result<Stack> {
        let mut stack = load_stack(&e.path)?;
        stack.id = e.stack_id.clone();
        stack.split = e.split;
        stack.gt_label_time = e.gt_label_time;
        stack.validate()?;
        Ok(stack)
    });
    loaded.into_iter().collect()
}
