use std::f64::consts::PI;

use super::local::LocalTrajectory;
use crate::belief::ElevationBelief;
use crate::error::{Error, Result};
use crate::locomotion::HighLevelAction;
use crate::model_error::{DeviationModel, StepContext};

/// Lower bound applied to variances before taking logs.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrajectoryScores {
    pub error: f64,
    pub info: f64,
}

/// Sum of the Gaussian differential entropies `0.5 ln(2 pi var) + 0.5` of the
/// belief at every waypoint.
pub fn score_info(traj: &LocalTrajectory, terrain: &dyn ElevationBelief) -> f64 {
    traj.waypoints
        .iter()
        .map(|w| {
            let v = terrain.variance(w.position()).max(VARIANCE_FLOOR);
            0.5 * (2.0 * PI * v).ln() + 0.5
        })
        .sum()
}

/// Step contexts of every action. The step before the first action is
/// `previous`, or a nominal straight step of the same length when absent.
pub fn step_contexts(
    traj: &LocalTrajectory,
    previous: Option<&HighLevelAction>,
) -> Vec<StepContext> {
    let mut prev = previous.copied();
    traj.actions
        .iter()
        .map(|a| {
            let (d_c, dtheta_c, dz_c) = match prev {
                Some(p) => (p.d, p.dtheta, p.dz),
                None => (a.d, 0.0, 0.0),
            };
            prev = Some(*a);
            StepContext {
                d_c,
                dtheta_c,
                dz_c,
                d_n: a.d,
                dtheta_n: a.dtheta,
                dz_n: a.dz,
                stance: a.psi,
            }
        })
        .collect()
}

/// Sum over steps of the predicted world-frame deviation magnitude.
pub fn score_error(
    traj: &LocalTrajectory,
    model: &dyn DeviationModel,
    previous: Option<&HighLevelAction>,
) -> f64 {
    // A lateral offset keeps its length under the rotation into the world frame.
    step_contexts(traj, previous)
        .iter()
        .map(|c| model.deviation(c).abs())
        .sum()
}

/// Index maximising `-alpha * error + beta * info`; the first wins ties.
pub fn select_trajectory(scores: &[TrajectoryScores], alpha: f64, beta: f64) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::Usage(
            "no candidate trajectories to select from".into(),
        ));
    }
    let value = |s: &TrajectoryScores| -alpha * s.error + beta * s.info;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if value(s) > value(&scores[best]) {
            best = i;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::ConstantBelief;
    use crate::locomotion::{Stance, Waypoint};
    use crate::model_error::PerturbationOracle;

    fn line(n: usize) -> Vec<Waypoint> {
        (0..n)
            .map(|i| Waypoint::new(0.4 * i as f64, 0.0, 0.0))
            .collect()
    }

    #[test]
    fn info_reference_values() {
        let b = ConstantBelief {
            mean: 0.0,
            variance: 1.0 / (2.0 * PI),
        };
        let t = LocalTrajectory::from_waypoints(line(4), &b, Stance::Left);
        assert!((score_info(&t, &b) - 2.0).abs() < 1e-12);
        let z = ConstantBelief {
            mean: 0.0,
            variance: 1.0 / (2.0 * PI * std::f64::consts::E),
        };
        let one = LocalTrajectory::from_waypoints(line(1), &z, Stance::Left);
        assert!(score_info(&one, &z).abs() < 1e-12);
    }

    #[test]
    fn constant_deviation_sums() {
        let b = ConstantBelief {
            mean: 0.0,
            variance: 0.1,
        };
        let t = LocalTrajectory::from_waypoints(line(6), &b, Stance::Left);
        let e = score_error(&t, &PerturbationOracle::constant(0.02, 0.0), None);
        assert!((e - 0.10).abs() < 1e-15);
        assert_eq!(score_error(&t, &PerturbationOracle::zero(), None), 0.0);
    }

    #[test]
    fn contexts_chain_actions() {
        let b = ConstantBelief {
            mean: 0.0,
            variance: 0.1,
        };
        let t = LocalTrajectory::from_waypoints(line(3), &b, Stance::Left);
        let c = step_contexts(&t, None);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].stance, Stance::Right);
        assert_eq!(c[1].stance, Stance::Left);
        assert_eq!(c[1].d_c, t.actions[0].d);
    }

    #[test]
    fn selection_rules() {
        let s = |error, info| TrajectoryScores { error, info };
        assert_eq!(select_trajectory(&[s(1.0, 1.0)], 1.0, 1.0).unwrap(), 0);
        let errs = [s(0.3, 0.0), s(0.1, 0.0), s(0.2, 0.0)];
        assert_eq!(select_trajectory(&errs, 1.0, 0.0).unwrap(), 1);
        assert_eq!(
            select_trajectory(&[s(0.0, 2.0), s(9.0, 3.0)], 0.0, 1.0).unwrap(),
            1
        );
        assert_eq!(
            select_trajectory(&[s(0.0, 1.0), s(0.0, 1.0)], 1.0, 1.0).unwrap(),
            0
        );
        assert!(matches!(
            select_trajectory(&[], 1.0, 1.0),
            Err(Error::Usage(_))
        ));
    }
}
