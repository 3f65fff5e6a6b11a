//! Local process pool for sweeps.
//!
//! Every job runs as a separate `monorl train` child process with its own run
//! directory, so a crashing job cannot touch a sibling's state. At most
//! `max_parallel` children are alive at once; the supervisor itself is a
//! single thread polling for exits.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::thread::JoinHandle;
use std::time::Duration;

use monorl_core::algorithms::FinalReport;

use crate::sweep::{Job, SweepSpec};

/// Hidden `train` flag asking the child to print its report as JSON.
pub const REPORT_JSON_FLAG: &str = "--report-json";

#[derive(Debug, Clone, PartialEq)]
pub enum JobStatus {
    Succeeded,
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct JobOutcome {
    pub job: Job,
    pub status: JobStatus,
    pub report: Option<FinalReport>,
}

impl JobOutcome {
    pub fn succeeded(&self) -> bool {
        self.status == JobStatus::Succeeded
    }
}

/// Command-line arguments that run `job` through `train`.
pub fn job_args(spec: &SweepSpec, job: &Job, runs_dir: &Path) -> Vec<String> {
    let mut args = vec![
        "train".to_string(),
        job.algo.to_string(),
        "--env".into(),
        job.env.clone(),
        "--seed".into(),
        job.seed.to_string(),
    ];
    if let Some(t) = job.total_timesteps {
        args.push("--total-timesteps".into());
        args.push(t.to_string());
    }
    for (k, v) in &job.overrides {
        args.push("--set".into());
        args.push(format!("{k}={v}"));
    }
    args.extend([
        "--runs-dir".into(),
        runs_dir.display().to_string(),
        "--exp-name".into(),
        spec.exp_name.clone(),
        "--sweep-index".into(),
        job.index.to_string(),
        "--sweep-total".into(),
        spec.total_jobs().to_string(),
        REPORT_JSON_FLAG.into(),
    ]);
    args
}

struct Running {
    job: Job,
    child: Child,
    stdout: JoinHandle<String>,
    stderr: JoinHandle<String>,
}

fn drain<R: Read + Send + 'static>(mut r: R) -> JoinHandle<String> {
    std::thread::spawn(move || {
        let mut s = String::new();
        let _ = r.read_to_string(&mut s);
        s
    })
}

#[allow(clippy::result_large_err)]
fn spawn(exe: &Path, spec: &SweepSpec, job: Job, runs_dir: &Path) -> Result<Running, JobOutcome> {
    let spawned = Command::new(exe)
        .args(job_args(spec, &job, runs_dir))
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn();
    match spawned {
        Ok(mut child) => {
            let stdout = drain(child.stdout.take().expect("piped"));
            let stderr = drain(child.stderr.take().expect("piped"));
            Ok(Running {
                job,
                child,
                stdout,
                stderr,
            })
        }
        Err(e) => Err(JobOutcome {
            job,
            status: JobStatus::Failed(format!("could not start worker: {e}")),
            report: None,
        }),
    }
}

fn finish(run: Running, code: Option<i32>) -> JobOutcome {
    let stdout = run.stdout.join().unwrap_or_default();
    let stderr = run.stderr.join().unwrap_or_default();
    let report = stdout
        .lines()
        .rev()
        .find_map(|l| serde_json::from_str::<FinalReport>(l).ok());
    let status = match (code, &report) {
        (Some(0), Some(_)) => JobStatus::Succeeded,
        _ => {
            let reason = stderr
                .lines()
                .rev()
                .find(|l| !l.trim().is_empty())
                .map(str::to_string)
                .unwrap_or_else(|| match code {
                    Some(c) => format!("exit code {c}"),
                    None => "killed by signal".into(),
                });
            JobStatus::Failed(reason)
        }
    };
    JobOutcome {
        job: run.job,
        status,
        report,
    }
}

/// Runs every job of `spec` with `exe` as the worker binary. Outcomes are
/// returned in job order regardless of completion order.
pub fn run_sweep(spec: &SweepSpec, runs_dir: &Path, exe: &Path) -> Vec<JobOutcome> {
    let mut pending = spec.jobs().into_iter();
    let mut running: Vec<Running> = Vec::new();
    let mut outcomes: Vec<JobOutcome> = Vec::new();
    loop {
        while running.len() < spec.max_parallel {
            let Some(job) = pending.next() else { break };
            log::info!("starting job {} ({} seed {})", job.index, job.algo, job.seed);
            match spawn(exe, spec, job, runs_dir) {
                Ok(r) => running.push(r),
                Err(outcome) => outcomes.push(outcome),
            }
        }
        if running.is_empty() {
            break;
        }
        let mut i = 0;
        let mut reaped = false;
        while i < running.len() {
            match running[i].child.try_wait() {
                Ok(Some(status)) => {
                    let r = running.swap_remove(i);
                    outcomes.push(finish(r, status.code()));
                    reaped = true;
                }
                Ok(None) => i += 1,
                Err(e) => {
                    let mut r = running.swap_remove(i);
                    let _ = r.child.kill();
                    let _ = r.child.wait();
                    let mut outcome = finish(r, None);
                    outcome.status = JobStatus::Failed(format!("lost track of worker: {e}"));
                    outcomes.push(outcome);
                    reaped = true;
                }
            }
        }
        if !reaped {
            std::thread::sleep(Duration::from_millis(25));
        }
    }
    outcomes.sort_by_key(|o| o.job.index);
    outcomes
}

/// Plain-text summary: one row per job.
pub fn summary_table(outcomes: &[JobOutcome]) -> String {
    let mut out = format!(
        "{:<4} {:<15} {:<14} {:>6} {:<8} {:>12}  {}\n",
        "job", "algo", "env", "seed", "status", "final_return", "detail"
    );
    for o in outcomes {
        let (status, detail) = match &o.status {
            JobStatus::Succeeded => (
                "ok",
                o.report
                    .as_ref()
                    .map(|r| r.run_dir.display().to_string())
                    .unwrap_or_default(),
            ),
            JobStatus::Failed(reason) => ("FAILED", reason.clone()),
        };
        let ret = o
            .report
            .as_ref()
            .and_then(|r| r.mean_return(monorl_core::algorithms::RETURN_WINDOW))
            .map(|v| format!("{v:.2}"))
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{:<4} {:<15} {:<14} {:>6} {:<8} {:>12}  {}\n",
            o.job.index, o.job.algo, o.job.env, o.job.seed, status, ret, detail
        ));
    }
    out
}

/// Path of the running executable, for use as the worker binary.
pub fn current_exe() -> std::io::Result<PathBuf> {
    std::env::current_exe()
}
