use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Phase {
    pub name: String,
    pub seconds: f64,
}

/// Written next to every command's outputs as `manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub command: String,
    pub command_line: Vec<String>,
    pub config_hash: String,
    pub master_seed: u64,
    pub threads: usize,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_seconds: f64,
    pub phases: Vec<Phase>,
    #[serde(skip)]
    started: Option<Instant>,
    #[serde(skip)]
    phase_started: Option<(String, Instant)>,
}

pub fn file_digest(path: &Path) -> CliResult<String> {
    let mut file =
        File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file
            .read(&mut buf)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

impl RunManifest {
    pub fn start(command: &str, master_seed: u64) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            command_line: std::env::args().collect(),
            config_hash: String::new(),
            master_seed,
            threads: rayon::current_num_threads(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_seconds: 0.0,
            phases: Vec::new(),
            started: Some(Instant::now()),
            phase_started: None,
        }
    }

    pub fn input(&mut self, path: &Path) -> CliResult<String> {
        let sha256 = file_digest(path)?;
        self.inputs.push(FileDigest {
            path: path.to_path_buf(),
            sha256: sha256.clone(),
        });
        Ok(sha256)
    }

    pub fn output(&mut self, path: &Path) -> CliResult<()> {
        let sha256 = file_digest(path)?;
        self.outputs.push(FileDigest {
            path: path.to_path_buf(),
            sha256,
        });
        Ok(())
    }

    /// Ends the running phase, if any, and starts `name`.
    pub fn phase(&mut self, name: &str) {
        self.end_phase();
        self.phase_started = Some((name.to_string(), Instant::now()));
    }

    fn end_phase(&mut self) {
        if let Some((name, t)) = self.phase_started.take() {
            self.phases.push(Phase {
                name,
                seconds: t.elapsed().as_secs_f64(),
            });
        }
    }

    pub fn finish(mut self, out_dir: &Path) -> CliResult<()> {
        self.end_phase();
        if let Some(t) = self.started {
            self.wall_seconds = t.elapsed().as_secs_f64();
        }
        let path = out_dir.join("manifest.json");
        let file =
            File::create(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &self)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}
