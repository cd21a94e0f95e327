//! Run directories: a manifest written before anything else, then reports
//! and plot tables that point back to it.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use levitrap::Result;
use serde::Serialize;
use serde_json::{Map, Value};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub config_path: Option<String>,
    pub master_seed: u64,
    pub output_directory: String,
    pub tool_version: String,
    pub timestamp: String,
    pub status: String,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Map::is_empty")]
    pub details: Map<String, Value>,
}

/// An output directory with its manifest.
pub struct RunDir {
    dir: PathBuf,
    manifest: RunManifest,
}

impl RunDir {
    pub fn create(dir: &Path, command: &str, config: Option<&Path>, seed: u64) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let manifest = RunManifest {
            command: command.to_string(),
            arguments: std::env::args().skip(1).collect(),
            config_path: config.map(|p| p.display().to_string()),
            master_seed: seed,
            output_directory: dir.display().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            status: "running".into(),
            outputs: Vec::new(),
            details: Map::new(),
        };
        let run = RunDir {
            dir: dir.to_path_buf(),
            manifest,
        };
        run.write_manifest()?;
        Ok(run)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write_manifest(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(self.dir.join(MANIFEST), text + "\n")?;
        Ok(())
    }

    fn register(&mut self, name: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        if !self.manifest.outputs.iter().any(|o| o == name) {
            self.manifest.outputs.push(name.to_string());
        }
        Ok(path)
    }

    /// Writes `report` as a JSON object with a `manifest` field added.
    pub fn json<T: Serialize>(&mut self, name: &str, report: &T) -> Result<()> {
        let path = self.register(name)?;
        let mut obj = Map::new();
        obj.insert("manifest".into(), Value::String(MANIFEST.into()));
        match serde_json::to_value(report)? {
            Value::Object(m) => obj.extend(m),
            other => {
                obj.insert("report".into(), other);
            }
        }
        fs::write(path, serde_json::to_string_pretty(&Value::Object(obj))? + "\n")?;
        Ok(())
    }

    /// Writes a CSV whose first line is a `# manifest:` comment.
    pub fn csv(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let path = self.register(name)?;
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "# manifest: {MANIFEST}")?;
        body(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// A binary artefact; the manifest lists it.
    pub fn binary(&mut self, name: &str, body: impl FnOnce(File) -> Result<()>) -> Result<()> {
        let path = self.register(name)?;
        body(File::create(path)?)
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.manifest.details.insert(key.into(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn finish(mut self, status: &str) -> Result<()> {
        self.manifest.status = status.to_string();
        self.write_manifest()
    }
}

/// One line of terminal output comparing a computed value with a reference.
pub fn compare(label: &str, computed: String, reference: &str) {
    println!("{label:<28} {computed:<24} reference: {reference}");
}
