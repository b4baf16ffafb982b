//! Run manifests: every command writes `run.json` with enough information
//! (config, seeds, input digests) to reproduce its outputs bit-exactly.

use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;
use sha2::{Digest, Sha256};

pub const SEED_SCHEME: &str = "stage_seed = fnv1a64(le_bytes(master_seed) || tag)";

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path)
        .with_context(|| format!("digesting input {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(7 + 64);
    out.push_str("sha256:");
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    Ok(out)
}

pub struct Manifest {
    command: &'static str,
    config: serde_json::Value,
    inputs: Vec<(String, String)>,
    outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &'static str, config: serde_json::Value) -> Self {
        Self {
            command,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .push((path.display().to_string(), sha256_file(path)?));
        Ok(())
    }

    pub fn input_opt(&mut self, path: Option<&PathBuf>) -> Result<()> {
        if let Some(p) = path {
            self.input(p)?;
        }
        Ok(())
    }

    pub fn output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let mut inputs = serde_json::Map::new();
        for (k, v) in &self.inputs {
            inputs.insert(k.clone(), json!(v));
        }
        let doc = json!({
            "artifact": {
                "name": "phraseq",
                "version": env!("CARGO_PKG_VERSION"),
            },
            "lexicon_version": crate::lexicon_version(),
            "command": self.command,
            "seed_scheme": SEED_SCHEME,
            "config": self.config,
            "inputs": inputs,
            "outputs": self.outputs,
        });
        let path = dir.join("run.json");
        std::fs::write(&path, serde_json::to_string_pretty(&doc)?)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
