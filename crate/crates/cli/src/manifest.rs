use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;

/// What was run, with every setting resolved, so the run can be replayed.
#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub git_describe: &'static str,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn new<T: Serialize>(command: &str, config: &T, seed: Option<u64>) -> Result<Self> {
        Ok(RunManifest {
            command: command.into(),
            config: serde_json::to_value(config)?,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            git_describe: env!("TABSUM_GIT_DESCRIBE"),
            started_unix: now(),
            finished_unix: None,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
    }

    pub fn finish(&mut self, path: &Path) -> Result<()> {
        self.finished_unix = Some(now());
        self.write(path)
    }
}

/// Where the manifest for an output file goes: `<out>.manifest.json`.
pub fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
