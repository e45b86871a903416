//! JSON envelopes, run manifests and atomic file output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct Timing {
    pub started_unix_ms: u128,
    pub elapsed_ms: f64,
}

#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub config: Value,
    pub seed: u64,
    pub version: String,
    pub inputs: Vec<InputDigest>,
    pub timing: Timing,
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    schema: &'a str,
    version: u32,
    manifest: &'a Manifest,
    result: &'a T,
}

pub struct Run {
    command: &'static str,
    seed: u64,
    started: Instant,
    started_unix_ms: u128,
    inputs: Vec<InputDigest>,
}

impl Run {
    pub fn start(command: &'static str, seed: u64) -> Self {
        Self {
            command,
            seed,
            started: Instant::now(),
            started_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            inputs: Vec::new(),
        }
    }

    /// Reads a file and records its digest.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    pub fn manifest(self, config: Value) -> Manifest {
        Manifest {
            command: self.command.to_owned(),
            config,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION").to_owned(),
            inputs: self.inputs,
            timing: Timing {
                started_unix_ms: self.started_unix_ms,
                elapsed_ms: self.started.elapsed().as_secs_f64() * 1e3,
            },
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn envelope<T: Serialize>(schema: &str, manifest: &Manifest, result: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(&Envelope {
        schema,
        version: FORMAT_VERSION,
        manifest,
        result,
    })?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes through a sibling temporary file so a failed run never leaves a
/// partial artifact at `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = PathBuf::from(path);
    let name = path
        .file_name()
        .with_context(|| format!("{} is not a file path", path.display()))?;
    tmp.set_file_name(format!(".{}.partial", name.to_string_lossy()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        anyhow::Error::new(e).context(format!("writing {}", path.display()))
    })
}

/// Writes to `path`, or to stdout when absent.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}
