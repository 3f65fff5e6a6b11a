use serde::{Deserialize, Serialize};

use super::parse::ParsedRun;
use crate::{Error, Result};

/// `(step, value)` points.
pub type Series = Vec<(f64, f64)>;

/// Mean ± std of several runs on a shared step grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub n_runs: usize,
}

/// Exponential moving average: `s_0 = x_0`, `s_t = w·s_{t−1} + (1 − w)·x_t`.
pub fn ema_smooth(series: &[(f64, f64)], weight: f64) -> Result<Series> {
    if !(0.0..1.0).contains(&weight) {
        return Err(Error::InvalidArgument(format!(
            "smoothing weight must lie in [0, 1), got {weight}"
        )));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut prev: Option<f64> = None;
    for &(step, x) in series {
        let s = match prev {
            None => x,
            Some(p) => weight * p + (1.0 - weight) * x,
        };
        out.push((step, s));
        prev = Some(s);
    }
    Ok(out)
}

/// Sorts by step and averages points that share a step.
fn collapse(series: &[(f64, f64)]) -> Series {
    let mut sorted = series.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Series = Vec::with_capacity(sorted.len());
    let mut count = 0usize;
    for (step, v) in sorted {
        match out.last_mut() {
            Some(last) if last.0 == step => {
                count += 1;
                last.1 += (v - last.1) / count as f64;
            }
            _ => {
                out.push((step, v));
                count = 1;
            }
        }
    }
    out
}

/// Piecewise-linear interpolation, held flat outside the data range.
fn interpolate(series: &[(f64, f64)], x: f64) -> f64 {
    let first = series[0];
    let last = series[series.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let j = series.partition_point(|p| p.0 < x);
    let (x0, y0) = series[j - 1];
    let (x1, y1) = series[j];
    if x1 == x {
        return y1;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Interpolates every run onto `grid_points` uniform steps in
/// `[0, min_r max_step(r)]` and takes the pointwise mean and population std.
///
/// Values at each grid point are summed in sorted order, so the result does
/// not depend on the order of `runs`.
pub fn aggregate_series(runs: &[(String, Series)], grid_points: usize) -> Result<AggregateCurve> {
    if runs.is_empty() {
        return Err(Error::InvalidArgument("no runs to aggregate".into()));
    }
    if grid_points < 2 {
        return Err(Error::InvalidArgument("grid_points must be >= 2".into()));
    }
    let empty: Vec<String> = runs
        .iter()
        .filter(|(_, s)| s.is_empty())
        .map(|(id, _)| id.clone())
        .collect();
    if !empty.is_empty() {
        return Err(Error::MissingMetric {
            key: String::new(),
            run_ids: empty,
        });
    }
    let collapsed: Vec<Series> = runs.iter().map(|(_, s)| collapse(s)).collect();
    let end = collapsed
        .iter()
        .map(|s| s.last().unwrap().0)
        .fold(f64::INFINITY, f64::min);
    let grid: Vec<f64> = (0..grid_points)
        .map(|i| end * i as f64 / (grid_points - 1) as f64)
        .collect();
    let n = runs.len() as f64;
    let mut mean = Vec::with_capacity(grid_points);
    let mut std = Vec::with_capacity(grid_points);
    let mut column = Vec::with_capacity(runs.len());
    for &x in &grid {
        column.clear();
        column.extend(collapsed.iter().map(|s| interpolate(s, x)));
        column.sort_by(f64::total_cmp);
        let m = column.iter().sum::<f64>() / n;
        let var = column.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        mean.push(m);
        std.push(var.max(0.0).sqrt());
    }
    Ok(AggregateCurve {
        grid,
        mean,
        std,
        n_runs: runs.len(),
    })
}

/// [`aggregate_series`] over `metric_key` of parsed runs.
pub fn aggregate_runs(runs: &[ParsedRun], metric_key: &str, grid_points: usize) -> Result<AggregateCurve> {
    let series: Vec<(String, Series)> = runs
        .iter()
        .map(|r| (r.manifest.run_id.clone(), r.series(metric_key)))
        .collect();
    aggregate_series(&series, grid_points).map_err(|e| match e {
        Error::MissingMetric { run_ids, .. } => Error::MissingMetric {
            key: metric_key.to_string(),
            run_ids,
        },
        other => other,
    })
}
