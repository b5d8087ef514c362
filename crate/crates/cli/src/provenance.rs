//! Side-car records tying every output to its inputs and configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::CliConfig;
use crate::CliError;

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Provenance<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub args: Vec<String>,
    pub config: &'a CliConfig,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn artifacts(paths: &[&Path]) -> Result<Vec<Artifact>, CliError> {
    paths
        .iter()
        .map(|p| {
            Ok(Artifact {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".provenance.json");
    output.with_file_name(name)
}

/// Writes `<output>.provenance.json` for the first output.
pub fn record(
    command: &str,
    config: &CliConfig,
    inputs: &[&Path],
    outputs: &[&Path],
) -> Result<(), CliError> {
    if !config.provenance_enabled() || outputs.is_empty() {
        return Ok(());
    }
    let rec = Provenance {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        args: std::env::args().skip(1).collect(),
        config,
        inputs: artifacts(inputs)?,
        outputs: artifacts(outputs)?,
    };
    let mut bytes =
        serde_json::to_vec_pretty(&rec).map_err(|e| CliError::Runtime(e.to_string()))?;
    bytes.push(b'\n');
    let path = sidecar_path(outputs[0]);
    tue_core::write_atomic(&path, &bytes)?;
    Ok(())
}
