//! Provenance record written beside every command's output: the resolved
//! configuration, input hashes, seed, and timestamps needed to re-run the
//! command bit-identically.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub tool_version: String,
    pub seed: u64,
    pub dry_run: bool,
    /// Resolved configuration, after flag overrides.
    pub config: serde_json::Value,
    /// sha256 of every input file the command read.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<PathBuf>,
    pub started_at: String,
    pub finished_at: String,
}

pub struct RunManifestBuilder {
    command: String,
    argv: Vec<String>,
    seed: u64,
    dry_run: bool,
    config: serde_json::Value,
    inputs: BTreeMap<String, String>,
    outputs: Vec<PathBuf>,
    started_at: chrono::DateTime<chrono::Utc>,
}

impl RunManifestBuilder {
    pub fn new(command: &str, argv: &[String]) -> RunManifestBuilder {
        RunManifestBuilder {
            command: command.to_owned(),
            argv: argv.to_vec(),
            seed: 0,
            dry_run: false,
            config: serde_json::Value::Null,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            started_at: chrono::Utc::now(),
        }
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = seed;
        self
    }

    pub fn dry_run(&mut self, dry_run: bool) -> &mut Self {
        self.dry_run = dry_run;
        self
    }

    pub fn config(&mut self, config: serde_json::Value) -> &mut Self {
        self.config = config;
        self
    }

    /// Hashes and records an input file.
    pub fn input(&mut self, path: &Path) -> std::io::Result<&mut Self> {
        let bytes = std::fs::read(path)?;
        self.inputs.insert(
            path.display().to_string(),
            format!("{:x}", Sha256::digest(&bytes)),
        );
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    /// Finalizes and writes the manifest atomically to `target`.
    pub fn write(self, target: &Path) -> std::io::Result<()> {
        let manifest = RunManifest {
            command: self.command,
            argv: self.argv,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: self.seed,
            dry_run: self.dry_run,
            config: self.config,
            inputs: self.inputs,
            outputs: self.outputs,
            started_at: self.started_at.to_rfc3339(),
            finished_at: chrono::Utc::now().to_rfc3339(),
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        if let Some(parent) = target.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let tmp = target.with_extension("manifest.tmp");
        std::fs::write(&tmp, json.as_bytes())?;
        std::fs::rename(&tmp, target)
    }
}

/// Where the run manifest for a given output lives: a sibling
/// `<stem>.manifest.json` for file outputs, `run_manifest.json` inside
/// directory outputs.
pub fn manifest_path_for(output: &Path, output_is_dir: bool) -> PathBuf {
    if output_is_dir {
        output.join("run_manifest.json")
    } else {
        let stem = output
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "output".to_owned());
        output.with_file_name(format!("{stem}.manifest.json"))
    }
}
