use super::local::LocalTrajectory;
use super::segment_safe;
use crate::belief::ElevationBelief;
use crate::geometry::{heading_of, wrap_angle};
use crate::locomotion::{SafetyLimits, Stance, Waypoint};

const TOL: f64 = 1e-9;

/// Greedy shortcutting: from each anchor, jump to the farthest waypoint whose
/// straight connection keeps the heading changes at both ends within
/// `dtheta_safe` and stays on traversable terrain (sampled every `spacing`).
/// Shortcuts are re-discretised into equal steps no longer than `d_safe`.
pub fn smooth(
    traj: &LocalTrajectory,
    terrain: &dyn ElevationBelief,
    limits: &SafetyLimits,
    spacing: f64,
) -> LocalTrajectory {
    let wps = &traj.waypoints;
    let stance = traj.start_stance().unwrap_or(Stance::Left);
    if wps.len() <= 2 {
        return traj.clone();
    }
    let last = wps.len() - 1;
    let mut out = vec![wps[0]];
    let mut a = 0;
    while a < last {
        let anchor = *out.last().expect("non-empty");
        let reach = (a + 2..=last).rev().find_map(|i| {
            let phi = heading_of(wps[i].position() - anchor.position());
            let turn_in = wrap_angle(phi - anchor.theta).abs() <= limits.dtheta_safe + TOL;
            let turn_out =
                i == last || wrap_angle(wps[i + 1].theta - phi).abs() <= limits.dtheta_safe + TOL;
            (turn_in
                && turn_out
                && segment_safe(
                    terrain,
                    anchor.position(),
                    wps[i].position(),
                    limits.z_safe,
                    spacing,
                ))
            .then_some((i, phi))
        });
        match reach {
            None => {
                out.push(wps[a + 1]);
                a += 1;
            }
            Some((i, phi)) => {
                let len = anchor.distance(&wps[i]);
                if (len - (i - a) as f64 * limits.d_safe).abs() <= TOL {
                    // Already a straight run of full steps.
                    out.extend_from_slice(&wps[a + 1..=i]);
                } else {
                    let n = (len / limits.d_safe - TOL).ceil().max(1.0) as usize;
                    let delta = wps[i].position() - anchor.position();
                    for k in 1..n {
                        let p = anchor.position() + delta * (k as f64 / n as f64);
                        out.push(Waypoint::new(p.x, p.y, phi));
                    }
                    out.push(Waypoint::new(wps[i].x, wps[i].y, phi));
                }
                a = i;
            }
        }
    }
    LocalTrajectory::from_waypoints(out, terrain, stance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::ConstantBelief;

    fn flat() -> ConstantBelief {
        ConstantBelief {
            mean: 0.0,
            variance: 0.01,
        }
    }

    fn walk(headings: &[f64]) -> Vec<Waypoint> {
        let mut w = vec![Waypoint::new(0.0, 0.0, 0.0)];
        for &h in headings {
            let p = w.last().unwrap();
            w.push(Waypoint::new(p.x + 0.4 * h.cos(), p.y + 0.4 * h.sin(), h));
        }
        w
    }

    #[test]
    fn straight_is_unchanged() {
        let t = LocalTrajectory::from_waypoints(walk(&[0.0; 6]), &flat(), Stance::Left);
        let s = smooth(&t, &flat(), &SafetyLimits::default(), 0.05);
        assert_eq!(s, t);
    }

    #[test]
    fn zigzag_collapses() {
        let h: Vec<f64> = (0..9)
            .map(|i| if i % 2 == 0 { 0.15 } else { -0.15 })
            .collect();
        let t = LocalTrajectory::from_waypoints(walk(&h), &flat(), Stance::Left);
        let s = smooth(&t, &flat(), &SafetyLimits::default(), 0.05);
        assert!(s.length() < t.length());
        assert_eq!(s.waypoints[0], t.waypoints[0]);
        assert_eq!(s.end().position(), t.end().position());
        let dir = s.end().position() - s.waypoints[0].position();
        for w in &s.waypoints {
            let r = w.position() - s.waypoints[0].position();
            assert!((dir.x * r.y - dir.y * r.x).abs() < 1e-9);
        }
        assert!(s.actions.iter().all(|a| a.d <= 0.4 + 1e-9));
    }

    #[test]
    fn short_inputs_pass_through() {
        let t = LocalTrajectory::from_waypoints(walk(&[0.2]), &flat(), Stance::Right);
        assert_eq!(smooth(&t, &flat(), &SafetyLimits::default(), 0.05), t);
    }
}
