//! Run configuration: defaults, merged with a config file (flat
//! `key = value` lines with dotted paths, or JSON), then flag overrides.
//! The fully resolved config is written into the output directory so any
//! run is reproducible from that file alone.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use csal_core::sim::ExperimentConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    #[serde(flatten)]
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            experiment: ExperimentConfig::default(),
        }
    }
}

/// Deep-merge `over` into `base`: objects merge by key, anything else
/// replaces.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parse `a.b.c = value` lines into a nested JSON object. Values are JSON
/// literals where they parse as such, bare strings otherwise. Blank lines
/// and `#` comments are skipped.
fn parse_kv(text: &str) -> Result<Value> {
    let mut root = Value::Object(Default::default());
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("line {}: expected `key = value`", lineno + 1))?;
        let key = key.trim();
        if key.is_empty() {
            bail!("line {}: empty key", lineno + 1);
        }
        let value = value.trim();
        let parsed: Value = serde_json::from_str(value)
            .unwrap_or_else(|_| Value::String(value.to_string()));
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .with_context(|| format!("line {}: key path {key:?} crosses a scalar", lineno + 1))?
                .entry(part.to_string())
                .or_insert(Value::Object(Default::default()));
        }
        *slot = parsed;
    }
    Ok(root)
}

/// Resolve: defaults <- config file <- flag overrides.
pub fn resolve(config_path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut value = serde_json::to_value(RunConfig::default())?;
    if let Some(path) = config_path {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let overlay = if text.trim_start().starts_with('{') {
            serde_json::from_str(&text)
                .with_context(|| format!("parsing JSON config {}", path.display()))?
        } else {
            parse_kv(&text).with_context(|| format!("parsing config {}", path.display()))?
        };
        merge(&mut value, overlay);
    }
    if let Some(seed) = seed {
        merge(
            &mut value,
            serde_json::json!({ "seed": seed, "data": { "master_seed": seed } }),
        );
    }
    let cfg: RunConfig = serde_json::from_value(value).context("invalid configuration")?;
    Ok(cfg)
}

/// Write the resolved config under the output directory.
pub fn write_resolved(cfg: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let path = out.join("config.resolved.json");
    let json = serde_json::to_string_pretty(cfg)?;
    std::fs::write(&path, json + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let kv = dir.path().join("c.txt");
        std::fs::write(&kv, "data.n_trainval = 12\npipeline.patch_size = 16\nseed = 9\n").unwrap();
        let js = dir.path().join("c.json");
        std::fs::write(
            &js,
            r#"{"data":{"n_trainval":12},"pipeline":{"patch_size":16},"seed":9}"#,
        )
        .unwrap();
        let a = resolve(Some(&kv), None).unwrap();
        let b = resolve(Some(&js), None).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.experiment.data.n_trainval, 12);
        assert_eq!(a.seed, 9);
    }

    #[test]
    fn flag_seed_beats_file() {
        let dir = tempfile::tempdir().unwrap();
        let kv = dir.path().join("c.txt");
        std::fs::write(&kv, "seed = 9\n").unwrap();
        let cfg = resolve(Some(&kv), Some(4)).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.experiment.data.master_seed, 4);
    }
}
