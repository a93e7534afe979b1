use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::{CliError, CliResult};

/// Version of every JSON document the tool writes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Versions {
    pub circpoc: &'static str,
    pub schema: u32,
}

/// Written next to every output set.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub versions: Versions,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
    #[serde(skip)]
    started: Option<Instant>,
}

impl RunManifest {
    pub fn start() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: std::env::args().collect(),
            config: serde_json::Value::Null,
            seed: None,
            versions: Versions { circpoc: env!("CARGO_PKG_VERSION"), schema: SCHEMA_VERSION },
            outputs: Vec::new(),
            wall_clock_seconds: 0.0,
            started: Some(Instant::now()),
        }
    }

    /// Records `out`'s files and writes `<stem>.manifest.json`.
    pub fn finish(&mut self, out: &mut Outputs, stem: &str) -> CliResult<()> {
        self.wall_clock_seconds = self.started.map_or(0.0, |t| t.elapsed().as_secs_f64());
        let name = format!("{stem}.manifest.json");
        self.outputs = out.written.clone();
        self.outputs.push(out.dir.join(&name));
        out.write_json(&name, self)
    }
}

/// Output directory plus the files written into it so far.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("creating {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, text: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::Internal(format!("writing {}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }
}
