use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::manifest::RunManifest;
use super::{keys, LOCK_FILE, MANIFEST_FILE, METRICS_FILE, STATUS_FILE, TIMING_FILE, TRAJECTORY_FILE};
use crate::{Error, Result};

const FLUSH_EVERY: u64 = 100;

/// One line of `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEvent {
    pub step: u64,
    pub key: String,
    pub value: f64,
    pub wall_time_s: f64,
}

/// Contents of `status.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStatus {
    pub completed: bool,
    pub total_events: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One environment transition, as logged to `trajectories.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: u64,
    pub env: usize,
    pub action: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<bool>>,
}

struct JsonlWriter {
    path: PathBuf,
    out: BufWriter<File>,
    pending: u64,
}

impl JsonlWriter {
    fn create(path: PathBuf) -> Result<Self> {
        let file = OpenOptions::new()
            .create_new(true)
            .write(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            out: BufWriter::new(file),
            pending: 0,
        })
    }

    fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n").map_err(|e| Error::io(&self.path, e))?;
        self.pending += 1;
        if self.pending >= FLUSH_EVERY {
            self.flush()?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.pending = 0;
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Exclusive writer for one run directory.
pub struct RunHandle {
    dir: PathBuf,
    manifest: RunManifest,
    metrics: JsonlWriter,
    timing: JsonlWriter,
    trajectories: Option<JsonlWriter>,
    last_step: HashMap<String, u64>,
    total_events: u64,
    started: Instant,
    closed: bool,
}

impl std::fmt::Debug for RunHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunHandle")
            .field("dir", &self.dir)
            .field("total_events", &self.total_events)
            .finish()
    }
}

fn write_new(path: &Path, contents: &[u8]) -> Result<()> {
    let mut file = OpenOptions::new()
        .create_new(true)
        .write(true)
        .open(path)
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::AlreadyExists => Error::AlreadyExists {
                path: path.to_path_buf(),
            },
            _ => Error::io(path, e),
        })?;
    file.write_all(contents).map_err(|e| Error::io(path, e))?;
    file.sync_all().map_err(|e| Error::io(path, e))
}

/// Creates `<runs_dir>/<exp_name>/<run_id>/`, takes the lock and writes the
/// manifest.
pub fn open_run(runs_dir: &Path, manifest: RunManifest) -> Result<RunHandle> {
    if manifest.exp_name.is_empty() || manifest.exp_name.contains(['/', '\\']) {
        return Err(Error::InvalidArgument(format!("bad exp_name `{}`", manifest.exp_name)));
    }
    let dir = runs_dir.join(&manifest.exp_name).join(&manifest.run_id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_new(&dir.join(LOCK_FILE), std::process::id().to_string().as_bytes())?;
    write_new(&dir.join(MANIFEST_FILE), &serde_json::to_vec_pretty(&manifest)?)?;
    let metrics = JsonlWriter::create(dir.join(METRICS_FILE))?;
    let timing = JsonlWriter::create(dir.join(TIMING_FILE))?;
    Ok(RunHandle {
        dir,
        manifest,
        metrics,
        timing,
        trajectories: None,
        last_step: HashMap::new(),
        total_events: 0,
        started: Instant::now(),
        closed: false,
    })
}

impl RunHandle {
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn total_events(&self) -> u64 {
        self.total_events
    }

    /// Seconds since the run was opened.
    pub fn elapsed(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    /// Appends one event. Rejects non-finite values, keys outside the
    /// namespace, and steps that go backwards for a key.
    pub fn log_metric(&mut self, step: u64, key: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("metric `{key}` at step {step}")));
        }
        if !keys::is_known(key) {
            return Err(Error::InvalidArgument(format!(
                "metric key `{key}` is not in the namespace"
            )));
        }
        if let Some(&last) = self.last_step.get(key) {
            if step < last {
                return Err(Error::InvalidArgument(format!(
                    "metric `{key}` step went backwards: {step} < {last}"
                )));
            }
        }
        self.last_step.insert(key.to_string(), step);
        let event = MetricEvent {
            step,
            key: key.to_string(),
            value,
            wall_time_s: self.elapsed(),
        };
        if keys::is_wall_clock(key) {
            self.timing.write(&event)?;
        } else {
            self.metrics.write(&event)?;
        }
        self.total_events += 1;
        Ok(())
    }

    pub fn log_trajectory(&mut self, record: &TrajectoryRecord) -> Result<()> {
        if self.trajectories.is_none() {
            self.trajectories = Some(JsonlWriter::create(self.dir.join(TRAJECTORY_FILE))?);
        }
        self.trajectories.as_mut().unwrap().write(record)
    }

    pub fn flush(&mut self) -> Result<()> {
        self.metrics.flush()?;
        self.timing.flush()?;
        if let Some(t) = &mut self.trajectories {
            t.flush()?;
        }
        Ok(())
    }

    fn finish(&mut self, error: Option<String>) -> Result<()> {
        self.flush()?;
        let status = RunStatus {
            completed: error.is_none(),
            total_events: self.total_events,
            error,
        };
        let path = self.dir.join(STATUS_FILE);
        fs::write(&path, serde_json::to_vec_pretty(&status)?).map_err(|e| Error::io(&path, e))?;
        let lock = self.dir.join(LOCK_FILE);
        fs::remove_file(&lock).map_err(|e| Error::io(&lock, e))?;
        self.closed = true;
        Ok(())
    }

    /// Flushes everything, writes `status.json` and releases the lock.
    pub fn close(mut self) -> Result<()> {
        self.finish(None)
    }

    /// Like [`RunHandle::close`] but records the run as failed.
    pub fn fail(mut self, reason: &str) -> Result<()> {
        self.finish(Some(reason.to_string()))
    }
}

impl Drop for RunHandle {
    fn drop(&mut self) {
        if !self.closed {
            // leave the lock in place: an unclosed run is a crashed run
            let _ = self.flush();
        }
    }
}
