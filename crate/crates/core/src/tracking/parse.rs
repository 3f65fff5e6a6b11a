use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use super::manifest::RunManifest;
use super::run::{MetricEvent, RunStatus, TrajectoryRecord};
use super::{keys, MANIFEST_FILE, METRICS_FILE, STATUS_FILE, TIMING_FILE, TRAJECTORY_FILE};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub metrics: Vec<MetricEvent>,
    pub timing: Vec<MetricEvent>,
    /// `None` when the run never closed.
    pub status: Option<RunStatus>,
}

impl ParsedRun {
    /// `(step, value)` pairs of `key` in file order.
    pub fn series(&self, key: &str) -> Vec<(f64, f64)> {
        self.metrics
            .iter()
            .chain(&self.timing)
            .filter(|e| e.key == key)
            .map(|e| (e.step as f64, e.value))
            .collect()
    }
}

/// Parses a JSONL file. A final line that fails to parse and lacks its
/// trailing newline is a torn write and is skipped with a warning; any other
/// bad line is corruption.
fn parse_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let ends_clean = text.is_empty() || text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(e) if i + 1 == lines.len() && !ends_clean => {
                log::warn!("{}: skipping torn final line ({e})", path.display());
            }
            Err(e) => {
                return Err(Error::Corrupted {
                    path: path.to_path_buf(),
                    reason: format!("line {}: {e}", i + 1),
                })
            }
        }
    }
    Ok(out)
}

pub fn parse_metrics_file(path: &Path) -> Result<Vec<MetricEvent>> {
    let events: Vec<MetricEvent> = parse_jsonl(path)?;
    for e in &events {
        if !keys::is_known(&e.key) {
            log::warn!("{}: unknown metric key `{}`", path.display(), e.key);
        }
    }
    Ok(events)
}

/// Reads a run directory back. A missing or malformed manifest is a hard
/// error.
pub fn parse_run(dir: &Path) -> Result<ParsedRun> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let raw = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: RunManifest = serde_json::from_slice(&raw).map_err(|e| Error::Corrupted {
        path: manifest_path.clone(),
        reason: e.to_string(),
    })?;
    let status_path = dir.join(STATUS_FILE);
    let status = match fs::read(&status_path) {
        Ok(raw) => Some(serde_json::from_slice(&raw).map_err(|e| Error::Corrupted {
            path: status_path.clone(),
            reason: e.to_string(),
        })?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(Error::io(&status_path, e)),
    };
    Ok(ParsedRun {
        dir: dir.to_path_buf(),
        manifest,
        metrics: parse_metrics_file(&dir.join(METRICS_FILE))?,
        timing: parse_metrics_file(&dir.join(TIMING_FILE))?,
        status,
    })
}

pub fn parse_trajectories(dir: &Path) -> Result<Vec<TrajectoryRecord>> {
    parse_jsonl(&dir.join(TRAJECTORY_FILE))
}
