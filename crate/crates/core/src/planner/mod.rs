//! Locomotion-aware planners: the footstep-level local RRT*, its smoothing
//! and trajectory scoring, and the coarse global RRT* with safety barriers.

mod global;
mod local;
mod log;
mod score;
mod smooth;

use crate::belief::ElevationBelief;
use crate::geometry::Point2;

pub use global::{
    build_partition, extract_waypoints, lda_g_rrt, safety_barriers, GlobalConfig, GlobalGraph,
    GlobalPlan, RegionPartition, SafetyBarriers,
};
pub use local::{
    grow_local_tree, has_continuation, lda_l_rrt, propose_vertex, LocalConfig, LocalGraph,
    LocalTrajectory, Proposal,
};
pub use log::{write_global_csv, write_trajectory_csv};
pub use score::{
    score_error, score_info, select_trajectory, step_contexts, TrajectoryScores, VARIANCE_FLOOR,
};
pub use smooth::smooth;

/// True when the belief mean stays at or below `z_safe` at samples no more
/// than `spacing` apart along the closed segment `a`-`b`.
pub fn segment_safe(
    terrain: &dyn ElevationBelief,
    a: Point2,
    b: Point2,
    z_safe: f64,
    spacing: f64,
) -> bool {
    let len = (b - a).norm();
    let n = (len / spacing).ceil().max(1.0) as usize;
    (0..=n).all(|k| {
        let t = k as f64 / n as f64;
        terrain.mean(a + (b - a) * t) <= z_safe
    })
}
