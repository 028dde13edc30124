use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::CliError;
use crate::report::{Report, REPORT_SCHEMA_VERSION};

#[derive(Debug, Clone, Serialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub dphd: &'static str,
    pub model_format: u32,
    pub report_schema: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct Seeds {
    pub run: u64,
    pub noise: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: Config,
    pub seeds: Seeds,
    pub inputs: Vec<InputHash>,
    pub outputs: Vec<PathBuf>,
    pub timings: Vec<Timing>,
    pub versions: Versions,
}

/// Collects manifest entries while a command runs.
pub struct Recorder {
    manifest: RunManifest,
    started: Instant,
    phase_start: Instant,
}

impl Recorder {
    pub fn new(command: &str, config: &Config) -> Self {
        let now = Instant::now();
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                argv: std::env::args().collect(),
                config: config.clone(),
                seeds: Seeds {
                    run: config.run.seed,
                    noise: config.privacy.noise_seed,
                },
                inputs: Vec::new(),
                outputs: Vec::new(),
                timings: Vec::new(),
                versions: Versions {
                    dphd: env!("CARGO_PKG_VERSION"),
                    model_format: dphd::classifier::MODEL_FORMAT_VERSION,
                    report_schema: REPORT_SCHEMA_VERSION,
                },
            },
            started: now,
            phase_start: now,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let digest = hash_path(path)?;
        self.manifest.inputs.push(InputHash {
            path: path.to_path_buf(),
            sha256: digest,
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.manifest.outputs.push(path.to_path_buf());
    }

    /// Ends the current phase.
    pub fn phase(&mut self, name: &str) {
        let now = Instant::now();
        self.manifest.timings.push(Timing {
            phase: name.to_string(),
            seconds: (now - self.phase_start).as_secs_f64(),
        });
        self.phase_start = now;
    }

    pub fn finish(mut self, dir: &Path) -> Result<PathBuf, CliError> {
        self.manifest.timings.push(Timing {
            phase: "total".to_string(),
            seconds: self.started.elapsed().as_secs_f64(),
        });
        let path = dir.join(format!("{}.manifest.json", self.manifest.command));
        Report::new("run_manifest", &self.manifest).write(&path)?;
        Ok(path)
    }
}

/// SHA-256 of a file, or of every file under a directory in sorted order.
fn hash_path(path: &Path) -> Result<String, CliError> {
    let mut hasher = Sha256::new();
    let mut files = Vec::new();
    collect_files(path, &mut files)?;
    for file in files {
        let bytes = std::fs::read(&file).map_err(|e| dphd::Error::Io {
            path: file.clone(),
            source: e,
        })?;
        if path.is_dir() {
            hasher.update(file.strip_prefix(path).unwrap_or(&file).to_string_lossy().as_bytes());
        }
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn collect_files(path: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| dphd::Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for e in entries {
            collect_files(&e, out)?;
        }
    } else {
        out.push(path.to_path_buf());
    }
    Ok(())
}
