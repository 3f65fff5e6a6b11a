//! Vendor-neutral experiment tracking.
//!
//! A run lives in `runs/<exp_name>/<run_id>/`:
//!
//! ```text
//! manifest.json      written once, before any metric
//! metrics.jsonl      one MetricEvent per line, append-only
//! timing.jsonl       wall-clock derived metrics (charts/SPS)
//! trajectories.jsonl optional per-step action log
//! status.json        written by close_run
//! model/arch.json    checkpoint layout
//! model/params.f32   checkpoint parameters, little-endian f32
//! ```

mod checkpoint;
mod curves;
pub mod keys;
mod manifest;
mod parse;
mod report;
mod run;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use curves::{aggregate_runs, aggregate_series, ema_smooth, AggregateCurve, Series};
pub use manifest::{code_version, new_run_id, RunManifest, SweepMembership};
pub use parse::{parse_metrics_file, parse_run, parse_trajectories, ParsedRun};
pub use report::{render_report, render_svg, PlotFrame, ReportChart};
pub use run::{open_run, MetricEvent, RunHandle, RunStatus, TrajectoryRecord};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const TIMING_FILE: &str = "timing.jsonl";
pub const TRAJECTORY_FILE: &str = "trajectories.jsonl";
pub const STATUS_FILE: &str = "status.json";
pub const LOCK_FILE: &str = ".lock";
pub const MODEL_DIR: &str = "model";
pub const ARCH_FILE: &str = "arch.json";
pub const PARAMS_FILE: &str = "params.f32";
