//! Run manifests: every command writes a key-value text file next to its
//! outputs so the run can be reproduced from the manifest alone.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::error::{KgError, Result};

pub struct RunManifest {
    command: String,
    entries: Vec<(String, String)>,
    started: Instant,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_owned(),
            entries: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn flag(&mut self, key: &str, value: impl std::fmt::Display) {
        self.entries.push((format!("flag.{}", key), value.to_string()));
    }

    /// Record an input path together with its SHA-256 checksum.
    pub fn input(&mut self, key: &str, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|source| KgError::Io {
            path: path.to_owned(),
            source,
        })?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{:02x}", b)).collect();
        self.entries
            .push((format!("input.{}", key), path.display().to_string()));
        self.entries.push((format!("sha256.{}", key), hex));
        Ok(())
    }

    pub fn output(&mut self, key: &str, path: &Path) {
        self.entries
            .push((format!("output.{}", key), path.display().to_string()));
    }

    /// Write `<base>.manifest`.
    pub fn write(self, base: &Path) -> Result<PathBuf> {
        let mut text = String::new();
        text.push_str(&format!("command\t{}\n", self.command));
        text.push_str(&format!("version\t{}\n", env!("CARGO_PKG_VERSION")));
        for (k, v) in &self.entries {
            text.push_str(&format!("{}\t{}\n", k, v));
        }
        text.push_str(&format!(
            "duration_ms\t{}\n",
            self.started.elapsed().as_millis()
        ));
        let path = base.with_extension(
            base.extension()
                .map(|e| format!("{}.manifest", e.to_string_lossy()))
                .unwrap_or_else(|| "manifest".to_owned()),
        );
        fs::write(&path, text).map_err(|source| KgError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }
}
