//! Run manifests and the file emitter behind every command that writes
//! output. Each data file names the manifest that produced it, and the
//! manifest is written last with the full output list, so an interrupted
//! run never leaves files that claim to be complete.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Everything needed to audit or replay a command: the parsed
/// configuration, the seed actually used, and the files written.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: Value,
    pub seed: Option<u64>,
    pub version: String,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<String>,
}

/// Collects the data files of one command run, then seals them with a
/// manifest.
pub struct Emitter {
    dir: PathBuf,
    command: &'static str,
    manifest_name: String,
    outputs: Vec<String>,
    started: String,
}

impl Emitter {
    pub fn new(dir: &Path, command: &'static str) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command,
            manifest_name: format!("{command}-manifest.json"),
            outputs: Vec::new(),
            started: now(),
        })
    }

    /// JSON output with a `manifest` key pointing back at the run
    /// manifest; typed readers ignore the extra key on re-ingest.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut tree = serde_json::to_value(value)?;
        if let Some(map) = tree.as_object_mut() {
            map.insert(
                "manifest".into(),
                Value::String(self.manifest_name.clone()),
            );
        }
        let text = format!("{}\n", serde_json::to_string_pretty(&tree)?);
        self.write(name, &text)
    }

    /// CSV output with a leading `# manifest:` comment line.
    pub fn csv(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let text = format!("# manifest: {}\n{body}", self.manifest_name);
        self.write(name, &text)
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        fs::write(self.dir.join(name), text)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    /// Writes the manifest itself and reports every emitted file.
    pub fn finish(self, config: Value, seed: Option<u64>) -> Result<(), CliError> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            argv: std::env::args().collect(),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started: self.started,
            finished: now(),
            outputs: self.outputs.clone(),
        };
        let text = format!("{}\n", serde_json::to_string_pretty(&manifest)?);
        fs::write(self.dir.join(&self.manifest_name), text)?;
        for name in self.outputs.iter().chain([&self.manifest_name]) {
            println!("wrote {}", self.dir.join(name).display());
        }
        Ok(())
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}
