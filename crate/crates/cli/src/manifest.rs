//! `manifest.json`: what ran, with which settings, and what it wrote.
//!
//! Every field except `wall_time_seconds` is a pure function of the run
//! configuration and the inputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::formats;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    command: &'a str,
    config: &'a RunConfig,
    details: &'a serde_json::Value,
    warnings: &'a [String],
    /// SHA-256 of each artifact, keyed by path relative to the output directory.
    artifacts: BTreeMap<String, String>,
    wall_time_seconds: f64,
}

/// Artifacts written by one run, relative to `root`.
#[derive(Debug)]
pub struct Artifacts {
    root: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    pub fn new(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Runtime(format!("{}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Full path for `relative`, recorded for digesting.
    pub fn path(&mut self, relative: &str) -> PathBuf {
        self.files.push(relative.to_string());
        self.root.join(relative)
    }

    fn digests(&self) -> Result<BTreeMap<String, String>, CliError> {
        self.files
            .iter()
            .map(|rel| {
                let path = self.root.join(rel);
                let bytes = fs::read(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
                Ok((rel.clone(), hex::encode(Sha256::digest(&bytes))))
            })
            .collect()
    }

    pub fn finish(
        self,
        command: &str,
        config: &RunConfig,
        details: &serde_json::Value,
        warnings: &[String],
        wall_time_seconds: f64,
    ) -> Result<(), CliError> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            core_version: dualcal_core::VERSION,
            command,
            config,
            details,
            warnings,
            artifacts: self.digests()?,
            wall_time_seconds,
        };
        formats::write_json(&self.root.join(MANIFEST), &manifest)?;
        Ok(())
    }
}
