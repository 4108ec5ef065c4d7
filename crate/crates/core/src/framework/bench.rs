use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{KernelChoice, MissionConfig};
use super::metrics::{compute_metrics, BenchmarkReport};
use super::mission::{run_mission_on, ExecutionModels, Outcome};
use crate::error::{Error, Result};
use crate::terrain::{generate_terrain, TerrainStyle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub style: TerrainStyle,
    pub seed: u64,
    pub report: BenchmarkReport,
}

/// One mission per style, kernel and seed. Terrain and mission share the seed.
pub fn run_bench(
    base: &MissionConfig,
    styles: &[TerrainStyle],
    kernels: &[KernelChoice],
    seeds: &[u64],
    models: &ExecutionModels,
) -> Result<Vec<BenchRun>> {
    let mut out = Vec::new();
    for &style in styles {
        for &seed in seeds {
            let mut terrain = base.terrain.clone();
            terrain.style = style;
            let field = generate_terrain(&terrain, seed)?;
            for &kernel in kernels {
                let cfg = MissionConfig {
                    terrain: terrain.clone(),
                    terrain_seed: seed,
                    kernel,
                    seed,
                    ..base.clone()
                };
                let t0 = Instant::now();
                let log = run_mission_on(&cfg, &field, models)?;
                let mut report = compute_metrics(&log, &field);
                report.wall_time_s = t0.elapsed().as_secs_f64();
                log::info!(
                    "{style:?} seed {seed} {}: {:?} in {} steps ({:.1} s)",
                    kernel.name(),
                    report.outcome,
                    report.steps,
                    report.wall_time_s
                );
                out.push(BenchRun {
                    style,
                    seed,
                    report,
                });
            }
        }
    }
    Ok(out)
}

/// Per-kernel averages in the layout of a GP benchmarking table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSummary {
    pub kernel: KernelChoice,
    pub runs: usize,
    pub reached: usize,
    pub path_error: f64,
    pub env_error: f64,
    pub env_error_mean: f64,
    pub path_std: f64,
    pub env_std: f64,
    pub steps: f64,
    pub wall_time_s: f64,
    pub retrain_period: usize,
}

fn avg(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn summarize(runs: &[BenchRun], kernels: &[KernelChoice]) -> Vec<KernelSummary> {
    kernels
        .iter()
        .map(|&kernel| {
            let r: Vec<&BenchmarkReport> = runs
                .iter()
                .map(|b| &b.report)
                .filter(|r| r.kernel == kernel)
                .collect();
            let col = |f: &dyn Fn(&BenchmarkReport) -> Option<f64>| {
                avg(&r.iter().filter_map(|x| f(x)).collect::<Vec<_>>())
            };
            KernelSummary {
                kernel,
                runs: r.len(),
                reached: r.iter().filter(|x| x.outcome == Outcome::Reached).count(),
                path_error: col(&|x| x.path_error),
                env_error: col(&|x| Some(x.env_error)),
                env_error_mean: col(&|x| Some(x.env_error_mean)),
                path_std: col(&|x| x.path_std),
                env_std: col(&|x| Some(x.env_std)),
                steps: col(&|x| Some(x.steps as f64)),
                wall_time_s: col(&|x| Some(x.wall_time_s)),
                retrain_period: r.first().map_or(0, |x| x.retrain_period),
            }
        })
        .collect()
}

pub fn write_summary_csv(rows: &[KernelSummary], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "kernel",
        "runs",
        "reached",
        "avg_error_path",
        "avg_error_env",
        "avg_error_env_mean",
        "avg_std_path",
        "avg_std_env",
        "avg_steps",
        "avg_time_s",
        "retrain_every_steps",
    ])?;
    for r in rows {
        w.write_record([
            r.kernel.name().to_string(),
            r.runs.to_string(),
            r.reached.to_string(),
            format!("{:.4e}", r.path_error),
            format!("{:.4}", r.env_error),
            format!("{:.4e}", r.env_error_mean),
            format!("{:.4e}", r.path_std),
            format!("{:.4e}", r.env_std),
            format!("{:.1}", r.steps),
            format!("{:.2}", r.wall_time_s),
            r.retrain_period.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_runs_csv(runs: &[BenchRun], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "style",
        "seed",
        "kernel",
        "outcome",
        "steps",
        "path_error",
        "env_error",
        "env_error_mean",
        "path_std",
        "env_std",
        "max_realized_z",
        "retrains",
        "time_s",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for b in runs {
        let r = &b.report;
        w.write_record([
            format!("{:?}", b.style).to_lowercase(),
            b.seed.to_string(),
            r.kernel.name().to_string(),
            format!("{:?}", r.outcome).to_lowercase(),
            r.steps.to_string(),
            opt(r.path_error),
            r.env_error.to_string(),
            r.env_error_mean.to_string(),
            opt(r.path_std),
            r.env_std.to_string(),
            opt(r.max_realized_elevation),
            r.retrains.to_string(),
            format!("{:.3}", r.wall_time_s),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub retrain_period: usize,
    pub runs: usize,
    pub reached: usize,
    pub mean_steps: f64,
    pub mean_path_error: f64,
}

/// Success counts across seeds for each retrain period in `periods`.
pub fn sweep_retrain(
    base: &MissionConfig,
    periods: std::ops::RangeInclusive<usize>,
    seeds: &[u64],
    models: &ExecutionModels,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for period in periods {
        let cfg = MissionConfig {
            retrain_period: period,
            ..base.clone()
        };
        let runs = run_bench(&cfg, &[cfg.terrain.style], &[cfg.kernel], seeds, models)?;
        let reached: Vec<&BenchmarkReport> = runs
            .iter()
            .map(|b| &b.report)
            .filter(|r| r.outcome == Outcome::Reached)
            .collect();
        rows.push(SweepRow {
            retrain_period: period,
            runs: runs.len(),
            reached: reached.len(),
            mean_steps: avg(&reached.iter().map(|r| r.steps as f64).collect::<Vec<_>>()),
            mean_path_error: avg(&reached
                .iter()
                .filter_map(|r| r.path_error)
                .collect::<Vec<_>>()),
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "retrain_period",
        "runs",
        "reached",
        "mean_steps",
        "mean_path_error",
    ])?;
    for r in rows {
        w.serialize((
            r.retrain_period,
            r.runs,
            r.reached,
            r.mean_steps,
            r.mean_path_error,
        ))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
