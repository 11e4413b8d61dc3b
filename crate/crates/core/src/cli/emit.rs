//! Writing records as JSON lines and CSV.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{Format, RunConfig};
use super::dispatch::Artifacts;
use super::CliError;

/// SHA-256 of the resolved configuration's JSON form.
pub fn config_hash(cfg: &RunConfig) -> String {
    let text = serde_json::to_string(cfg).expect("config serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Serialize)]
struct RunManifest<'a> {
    config_hash: String,
    version: &'static str,
    config: &'a RunConfig,
    files: Vec<String>,
}

fn out_err(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

/// Writes `records.jsonl` / `records.csv`, one file per chain and
/// `run.json` into the output directory.
pub fn emit_results(cfg: &RunConfig, art: &Artifacts) -> Result<Vec<PathBuf>, CliError> {
    if art.records.is_empty() {
        return Err(CliError::Output("no records to write".into()));
    }
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(|e| out_err(dir, e))?;
    let mut written = Vec::new();
    for f in &cfg.output.formats {
        match f {
            Format::Jsonl => {
                let path = dir.join("records.jsonl");
                let mut buf = Vec::new();
                for r in &art.records {
                    serde_json::to_writer(&mut buf, r).map_err(|e| out_err(&path, e))?;
                    buf.push(b'\n');
                }
                fs::write(&path, buf).map_err(|e| out_err(&path, e))?;
                written.push(path);
            }
            Format::Csv => {
                let path = dir.join("records.csv");
                let mut w = csv::Writer::from_path(&path).map_err(|e| out_err(&path, e))?;
                for r in &art.records {
                    w.serialize(r).map_err(|e| out_err(&path, e))?;
                }
                w.flush().map_err(|e| out_err(&path, e))?;
                written.push(path);
            }
        }
    }
    for (name, chain) in &art.chains {
        let path = dir.join(name);
        let mut file = fs::File::create(&path).map_err(|e| out_err(&path, e))?;
        serde_json::to_writer(&mut file, chain).map_err(|e| out_err(&path, e))?;
        file.write_all(b"\n").map_err(|e| out_err(&path, e))?;
        written.push(path);
    }
    let path = dir.join("run.json");
    let manifest = RunManifest {
        config_hash: config_hash(cfg),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        files: written.iter().filter_map(|p| p.file_name()).map(|s| s.to_string_lossy().into_owned()).collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| out_err(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| out_err(&path, e))?;
    written.push(path);
    Ok(written)
}
