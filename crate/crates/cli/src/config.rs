//! Flat key-value run configuration. Every CLI flag has a config-file key of
//! the same name (dashes become underscores); flags always win.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

#[derive(Debug, Default, Clone)]
pub struct ConfigMap {
    map: serde_json::Map<String, serde_json::Value>,
}

impl ConfigMap {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        match value {
            // a run.json manifest doubles as a config file: use its config block
            serde_json::Value::Object(map)
                if map.contains_key("artifact") && map.get("config").is_some_and(|c| c.is_object()) =>
            {
                let serde_json::Value::Object(inner) = map["config"].clone() else {
                    unreachable!()
                };
                Ok(Self { map: inner })
            }
            serde_json::Value::Object(map) => Ok(Self { map }),
            _ => bail!("config {} must be a flat JSON object", path.display()),
        }
    }

    fn get(&self, key: &str) -> Option<&serde_json::Value> {
        self.map.get(key)
    }

    pub fn str_or(&self, flag: Option<String>, key: &str) -> Option<String> {
        flag.or_else(|| self.get(key).and_then(|v| v.as_str().map(String::from)))
    }

    pub fn path_or(&self, flag: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.or_else(|| self.get(key).and_then(|v| v.as_str().map(PathBuf::from)))
    }

    pub fn u64_or(&self, flag: Option<u64>, key: &str) -> Option<u64> {
        flag.or_else(|| self.get(key).and_then(|v| v.as_u64()))
    }

    pub fn usize_or(&self, flag: Option<usize>, key: &str, default: usize) -> usize {
        flag.or_else(|| self.get(key).and_then(|v| v.as_u64()).map(|v| v as usize))
            .unwrap_or(default)
    }

    pub fn i64_or(&self, flag: Option<i64>, key: &str, default: i64) -> i64 {
        flag.or_else(|| self.get(key).and_then(|v| v.as_i64()))
            .unwrap_or(default)
    }

    pub fn f64_or(&self, flag: Option<f64>, key: &str, default: f64) -> f64 {
        flag.or_else(|| self.get(key).and_then(|v| v.as_f64()))
            .unwrap_or(default)
    }
}
