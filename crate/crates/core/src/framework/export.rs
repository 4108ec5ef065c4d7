use std::path::Path;

use super::metrics::BenchmarkReport;
use super::mission::MissionLog;
use crate::error::{Error, Result};
use crate::terrain::{write_pgm, TerrainField};

/// Writes `mission.csv`, `epochs.csv`, `retrains.csv`, `report.json`, the full
/// `log.json`, and mean, std and absolute-error heatmaps into `dir`.
pub fn export(
    log: &MissionLog,
    report: &BenchmarkReport,
    field: &TerrainField,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join("mission.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "step",
        "epoch",
        "planned_x",
        "planned_y",
        "planned_theta",
        "d",
        "dtheta",
        "dz",
        "psi",
        "deviation",
        "offset_x",
        "offset_y",
        "realized_x",
        "realized_y",
        "true_z",
        "samples",
        "snapshot",
    ])?;
    for s in &log.steps {
        w.write_record([
            s.step.to_string(),
            s.epoch.to_string(),
            s.planned.x.to_string(),
            s.planned.y.to_string(),
            s.planned.theta.to_string(),
            s.action.d.to_string(),
            s.action.dtheta.to_string(),
            s.action.dz.to_string(),
            format!("{:?}", s.action.psi).to_lowercase(),
            s.deviation.to_string(),
            s.offset[0].to_string(),
            s.offset[1].to_string(),
            s.realized.x.to_string(),
            s.realized.y.to_string(),
            crate::belief::ElevationBelief::mean(field, s.realized.position()).to_string(),
            s.samples.len().to_string(),
            s.snapshot.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("epochs.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "epoch",
        "start_step",
        "x",
        "y",
        "theta",
        "snapshot",
        "global_vertices",
        "target_x",
        "target_y",
        "target_index",
        "candidates",
        "selected",
        "executed_steps",
    ])?;
    let opt = |v: Option<usize>| v.map(|i| i.to_string()).unwrap_or_default();
    for e in &log.epochs {
        w.write_record([
            e.epoch.to_string(),
            e.start_step.to_string(),
            e.pose.x.to_string(),
            e.pose.y.to_string(),
            e.pose.theta.to_string(),
            e.snapshot.to_string(),
            opt(e.global_path.as_ref().map(Vec::len)),
            e.target[0].to_string(),
            e.target[1].to_string(),
            opt(e.target_index),
            e.candidates.len().to_string(),
            opt(e.selected),
            e.executed_steps.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("retrains.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "snapshot",
        "after_step",
        "reason",
        "points",
        "refit",
        "env_std",
    ])?;
    for r in &log.retrains {
        w.write_record([
            r.snapshot.to_string(),
            r.after_step.to_string(),
            format!("{:?}", r.reason).to_lowercase(),
            r.points.to_string(),
            r.refit.is_some().to_string(),
            r.env_std.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    write_json(&dir.join("report.json"), report)?;
    write_json(&dir.join("log.json"), log)?;

    if let Some(map) = &log.final_map {
        let (c, r) = (map.cols, map.rows);
        let (lo, hi) = (log.config.terrain.z_min, log.config.terrain.z_max);
        write_pgm(&map.mean, c, r, lo, hi, &dir.join("gp_mean.pgm"))?;
        let std: Vec<f64> = map.variance.iter().map(|v| v.max(0.0).sqrt()).collect();
        let top = std.iter().copied().fold(0.0, f64::max);
        write_pgm(&std, c, r, 0.0, top, &dir.join("gp_std.pgm"))?;
        if field.cols() == c && field.rows() == r {
            let err: Vec<f64> = map
                .mean
                .iter()
                .zip(field.values())
                .map(|(m, t)| (m - t).abs())
                .collect();
            write_pgm(&err, c, r, 0.0, hi - lo, &dir.join("abs_error.pgm"))?;
        }
    }
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
