//! `monorl`: train single runs, execute benchmark sweeps, render reports.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use monorl_cli::bench::{current_exe, run_sweep, summary_table, JobStatus};
use monorl_cli::report::{build_chart, discover_runs, load_completed};
use monorl_cli::sweep::SweepSpec;
use monorl_cli::{CliError, EXIT_OK, EXIT_USAGE, RUNS_DIR_ENV};
use monorl_core::algorithms::{run_experiment, AlgoConfig, AlgoId, RunOptions, RETURN_WINDOW};
use monorl_core::envs::{describe, ENV_IDS};
use monorl_core::tracking::{keys, render_report, SweepMembership};

#[derive(Debug, Parser)]
#[command(name = "monorl", version, about = "Single-file deep RL: train, benchmark, report")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one algorithm on one environment.
    Train(TrainArgs),
    /// Run a sweep described by a JSON spec file.
    Bench {
        spec: PathBuf,
        #[arg(long, env = RUNS_DIR_ENV, default_value = "runs")]
        runs_dir: PathBuf,
    },
    /// Render mean ± std learning curves of matching runs to SVG.
    Report {
        /// Glob matching run directories or their parent experiment directories.
        runs_glob: String,
        #[arg(long, default_value = keys::EPISODIC_RETURN)]
        metric: String,
        /// EMA weight in [0, 1); 0 disables smoothing.
        #[arg(long, default_value_t = 0.0)]
        smoothing: f64,
        #[arg(long, default_value = "report.svg")]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        grid_points: usize,
    },
    /// List registered algorithms.
    ListAlgos,
    /// List registered environments.
    ListEnvs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(value_parser = parse_algo)]
    algo: AlgoId,
    /// Defaults to the algorithm's reference environment.
    #[arg(long)]
    env: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Defaults to the algorithm's reference budget.
    #[arg(long)]
    total_timesteps: Option<u64>,
    /// Config override `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, env = RUNS_DIR_ENV, default_value = "runs")]
    runs_dir: PathBuf,
    /// Defaults to the algorithm id.
    #[arg(long)]
    exp_name: Option<String>,
    #[arg(long, hide = true, requires = "sweep_total")]
    sweep_index: Option<usize>,
    #[arg(long, hide = true, requires = "sweep_index")]
    sweep_total: Option<usize>,
    /// Print the final report as one JSON line instead of prose.
    #[arg(long, hide = true)]
    report_json: bool,
}

fn parse_algo(s: &str) -> Result<AlgoId, String> {
    s.parse::<AlgoId>().map_err(|_| {
        let names: Vec<&str> = AlgoId::ALL.iter().map(|a| a.as_str()).collect();
        format!("unknown algorithm `{s}` (expected one of: {})", names.join(", "))
    })
}

fn invocation() -> String {
    std::env::args()
        .map(|a| {
            if a.is_empty() || a.contains(|c: char| c.is_whitespace() || c == '"' || c == '\'') {
                format!("'{}'", a.replace('\'', r"'\''"))
            } else {
                a
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let env = args.env.unwrap_or_else(|| args.algo.default_env().to_string());
    let total = args.total_timesteps.unwrap_or_else(|| args.algo.default_timesteps());
    let mut config = AlgoConfig::new(args.algo, &env, args.seed, total);
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{kv}`")))?;
        config.set(k.trim(), v)?;
    }
    config.validate()?;
    let exp_name = args.exp_name.unwrap_or_else(|| args.algo.to_string());
    let sweep = match (args.sweep_index, args.sweep_total) {
        (Some(job_index), Some(total_jobs)) => Some(SweepMembership {
            exp_name: exp_name.clone(),
            job_index,
            total_jobs,
        }),
        _ => None,
    };
    let options = RunOptions {
        runs_dir: args.runs_dir,
        exp_name,
        invocation: invocation(),
        sweep,
    };
    let report = run_experiment(&config, &options).map_err(|e| {
        eprintln!("error: training failed: {e}");
        CliError::JobsFailed { failed: 1, total: 1 }
    })?;
    if args.report_json {
        println!("{}", serde_json::to_string(&report).map_err(monorl_core::Error::from)?);
    } else {
        println!("run directory: {}", report.run_dir.display());
        match report.mean_return(RETURN_WINDOW) {
            Some(r) => println!(
                "mean return over the last {} episode(s): {r:.3}",
                report.recent_returns.len()
            ),
            None => println!("no episode finished"),
        }
    }
    Ok(())
}

fn cmd_bench(spec_path: PathBuf, runs_dir: PathBuf) -> Result<(), CliError> {
    let spec = SweepSpec::from_file(&spec_path)?;
    let exe = current_exe().map_err(|e| CliError::Usage(format!("cannot locate own executable: {e}")))?;
    let outcomes = run_sweep(&spec, &runs_dir, &exe);
    print!("{}", summary_table(&outcomes));
    let failed = outcomes.iter().filter(|o| !o.succeeded()).count();
    for o in &outcomes {
        if let JobStatus::Failed(reason) = &o.status {
            log::warn!("job {} failed: {reason}", o.job.index);
        }
    }
    if failed > 0 {
        return Err(CliError::JobsFailed {
            failed,
            total: outcomes.len(),
        });
    }
    Ok(())
}

fn cmd_report(pattern: &str, metric: &str, smoothing: f64, out: PathBuf, grid_points: usize) -> Result<(), CliError> {
    if !keys::is_known(metric) {
        return Err(CliError::Usage(format!("unknown metric `{metric}`")));
    }
    let runs = load_completed(&discover_runs(pattern)?)?;
    if runs.is_empty() {
        return Err(CliError::Usage(format!("no completed runs match `{pattern}`")));
    }
    let chart = build_chart(&runs, metric, smoothing, grid_points)?;
    render_report(&[chart], &out)?;
    println!("wrote {} ({} run(s))", out.display(), runs.len());
    Ok(())
}

fn list_algos() {
    println!("{:<15} {:<14} {:>12}", "algo", "default_env", "timesteps");
    for a in AlgoId::ALL {
        println!(
            "{:<15} {:<14} {:>12}",
            a.as_str(),
            a.default_env(),
            a.default_timesteps()
        );
    }
}

fn list_envs() -> Result<(), CliError> {
    println!("{:<14} {:>7}  action_space", "env", "obs_dim");
    for id in ENV_IDS {
        let (obs_dim, space) = describe(id)?;
        println!(
            "{id:<14} {obs_dim:>7}  {}",
            serde_json::to_string(&space).map_err(monorl_core::Error::from)?
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE as u8)
            } else {
                ExitCode::from(EXIT_OK as u8)
            };
        }
    };
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Bench { spec, runs_dir } => cmd_bench(spec, runs_dir),
        Command::Report {
            runs_glob,
            metric,
            smoothing,
            out,
            grid_points,
        } => cmd_report(&runs_glob, &metric, smoothing, out, grid_points),
        Command::ListAlgos => {
            list_algos();
            Ok(())
        }
        Command::ListEnvs => list_envs(),
    };
    match result {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            if !matches!(e, CliError::JobsFailed { failed: 1, total: 1 }) {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
