//! Output tracking: files registered here are deleted if the command fails,
//! so a failed run never leaves partial outputs behind.

use std::path::{Path, PathBuf};

pub struct OutputGuard {
    created: Vec<PathBuf>,
    committed: bool,
}

impl OutputGuard {
    pub fn new() -> Self {
        Self {
            created: Vec::new(),
            committed: false,
        }
    }

    /// Register a path that is about to be written.
    pub fn track(&mut self, path: &Path) -> PathBuf {
        self.created.push(path.to_path_buf());
        path.to_path_buf()
    }

    /// Keep all outputs.
    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for path in &self.created {
            if path.exists() {
                if let Err(e) = std::fs::remove_file(path) {
                    log::warn!("could not remove partial output {}: {e}", path.display());
                } else {
                    log::info!("removed partial output {}", path.display());
                }
            }
        }
    }
}
