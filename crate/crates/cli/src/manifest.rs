use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct OutputFile {
    pub path: PathBuf,
    pub bytes: u64,
}

/// Record of one invocation, written next to its outputs whether or not
/// the task succeeded.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub status: &'static str,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config_hash: String,
    pub config: RunConfig,
    pub threads: usize,
    pub started_unix: f64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputFile>,
    pub diagnostics: Map<String, Value>,
}

/// Output directory plus the files written so far.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
    pub diagnostics: Map<String, Value>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            diagnostics: Map::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes a file in one go through `f`.
    pub fn write<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        self.files.push(path);
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        self.write(name, |w| Ok(w.write_all(text.as_bytes())?))
    }

    pub fn diag(&mut self, key: impl Into<String>, value: impl Serialize) {
        self.diagnostics
            .insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn listing(&self) -> Vec<OutputFile> {
        self.files
            .iter()
            .map(|p| OutputFile {
                path: p.clone(),
                bytes: fs::metadata(p).map(|m| m.len()).unwrap_or(0),
            })
            .collect()
    }
}
