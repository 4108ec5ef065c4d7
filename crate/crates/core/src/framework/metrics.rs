use serde::{Deserialize, Serialize};

use super::config::KernelChoice;
use super::mission::{MissionLog, Outcome};
use crate::belief::ElevationBelief;
use crate::terrain::TerrainField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub kernel: KernelChoice,
    pub outcome: Outcome,
    pub steps: usize,
    /// Mean absolute error of the final posterior mean at realized waypoints.
    pub path_error: Option<f64>,
    /// Sum of absolute errors over the terrain lattice.
    pub env_error: f64,
    /// Mean absolute error over the terrain lattice.
    pub env_error_mean: f64,
    pub path_std: Option<f64>,
    pub env_std: f64,
    /// Largest ground-truth elevation under a realized waypoint.
    pub max_realized_elevation: Option<f64>,
    pub retrains: usize,
    pub retrain_period: usize,
    /// Filled in by the caller that timed the run.
    pub wall_time_s: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Scores the log's final posterior against the ground truth.
pub fn compute_metrics(log: &MissionLog, field: &TerrainField) -> BenchmarkReport {
    let truth = field.values();
    let (env_error, env_std) = match &log.final_map {
        Some(map) => (
            map.mean.iter().zip(truth).map(|(m, t)| (m - t).abs()).sum(),
            map.mean_std(),
        ),
        None => (truth.iter().map(|t| t.abs()).sum(), 0.0),
    };
    let realized = log.realized_positions();
    let path_truth: Vec<f64> = realized.iter().map(|&p| field.mean(p)).collect();
    BenchmarkReport {
        kernel: log.config.kernel,
        outcome: log.outcome,
        steps: log.steps.len(),
        path_error: mean(
            log.final_path
                .iter()
                .zip(&path_truth)
                .map(|(mv, t)| (mv[0] - t).abs()),
        ),
        env_error,
        env_error_mean: env_error / truth.len() as f64,
        path_std: mean(log.final_path.iter().map(|mv| mv[1].max(0.0).sqrt())),
        env_std,
        max_realized_elevation: path_truth.iter().copied().reduce(f64::max),
        retrains: log.retrains.len(),
        retrain_period: log.config.retrain_period,
        wall_time_s: 0.0,
    }
}
