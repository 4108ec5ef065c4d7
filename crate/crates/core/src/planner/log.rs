use std::path::Path;

use super::global::GlobalPlan;
use super::local::LocalTrajectory;
use crate::belief::ElevationBelief;
use crate::error::{Error, Result};
use crate::model_error::DeviationModel;

/// One row per waypoint: the action leading to it and its score terms.
pub fn write_trajectory_csv(
    traj: &LocalTrajectory,
    terrain: &dyn ElevationBelief,
    model: &dyn DeviationModel,
    path: &Path,
) -> Result<()> {
    let contexts = super::score::step_contexts(traj, None);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "step",
        "x",
        "y",
        "theta",
        "d",
        "dtheta",
        "dz",
        "psi",
        "error_term",
        "info_term",
    ])?;
    for (i, wp) in traj.waypoints.iter().enumerate() {
        let var = terrain.variance(wp.position()).max(super::VARIANCE_FLOOR);
        let info = 0.5 * (2.0 * std::f64::consts::PI * var).ln() + 0.5;
        let (d, dth, dz, psi, err) =
            match i.checked_sub(1).map(|k| (&traj.actions[k], &contexts[k])) {
                Some((a, c)) => (
                    a.d.to_string(),
                    a.dtheta.to_string(),
                    a.dz.to_string(),
                    format!("{:?}", a.psi).to_lowercase(),
                    model.deviation(c).abs().to_string(),
                ),
                None => Default::default(),
            };
        w.write_record([
            i.to_string(),
            wp.x.to_string(),
            wp.y.to_string(),
            wp.theta.to_string(),
            d,
            dth,
            dz,
            psi,
            err,
            info.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Path vertices in order.
pub fn write_global_csv(plan: &GlobalPlan, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "x", "y"])?;
    for (i, p) in plan.path.iter().enumerate() {
        w.write_record([i.to_string(), p.x.to_string(), p.y.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
