//! Run discovery and chart assembly for `monorl report`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use monorl_core::tracking::{aggregate_series, ema_smooth, parse_run, ParsedRun, ReportChart, Series, MANIFEST_FILE};

use crate::CliError;

fn is_run_dir(p: &Path) -> bool {
    p.is_dir() && p.join(MANIFEST_FILE).is_file()
}

/// Run directories matched by `pattern`. A match that is itself a run is
/// taken as is; any other matched directory contributes its immediate
/// children that are runs. Sorted and deduplicated.
pub fn discover_runs(pattern: &str) -> Result<Vec<PathBuf>, CliError> {
    let paths = glob::glob(pattern).map_err(|e| CliError::Usage(format!("bad glob `{pattern}`: {e}")))?;
    let mut runs = Vec::new();
    for entry in paths {
        let path = match entry {
            Ok(p) => p,
            Err(e) => {
                log::warn!("skipping unreadable path: {e}");
                continue;
            }
        };
        if is_run_dir(&path) {
            runs.push(path);
        } else if path.is_dir() {
            let children = std::fs::read_dir(&path).map_err(|e| monorl_core::Error::io(&path, e))?;
            for child in children.flatten() {
                let p = child.path();
                if is_run_dir(&p) {
                    runs.push(p);
                }
            }
        }
    }
    runs.sort();
    runs.dedup();
    Ok(runs)
}

/// Parses runs, skipping any that never completed.
pub fn load_completed(dirs: &[PathBuf]) -> Result<Vec<ParsedRun>, CliError> {
    let mut out = Vec::new();
    for dir in dirs {
        let run = parse_run(dir)?;
        match &run.status {
            Some(s) if s.completed => out.push(run),
            _ => log::warn!("skipping incomplete run {}", dir.display()),
        }
    }
    Ok(out)
}

/// One chart for `metric` with a mean ± std band per (algorithm,
/// environment) group. Series are EMA-smoothed per run before aggregation.
pub fn build_chart(
    runs: &[ParsedRun],
    metric: &str,
    smoothing: f64,
    grid_points: usize,
) -> Result<ReportChart, CliError> {
    let mut groups: BTreeMap<(String, String), Vec<(String, Series)>> = BTreeMap::new();
    for run in runs {
        let series = ema_smooth(&run.series(metric), smoothing)?;
        groups
            .entry((run.manifest.algo_id.clone(), run.manifest.env_id.clone()))
            .or_default()
            .push((run.manifest.run_id.clone(), series));
    }
    let mut curves = Vec::with_capacity(groups.len());
    for ((algo, env), members) in groups {
        curves.push((format!("{algo} on {env}"), aggregate_series(&members, grid_points)?));
    }
    Ok(ReportChart {
        metric: metric.to_string(),
        curves,
    })
}
