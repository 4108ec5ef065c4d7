use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::pipm::{pipm_propagate, PipmSample};
use super::{ApexState, HighLevelAction, PipmParams, SafetyLimits, Stance, Waypoint};
use crate::belief::ElevationBelief;
use crate::error::{Error, Result};
use crate::geometry::{unit, wrap_angle};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComSample {
    pub t: f64,
    pub position: [f64; 3],
    pub velocity: [f64; 2],
}

/// A planned footstep between two apexes.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPlan {
    pub action: HighLevelAction,
    pub omega: f64,
    pub p_foot: [f64; 3],
    /// Surface slope at the new foot.
    pub a: f64,
    pub b: f64,
    /// Surface slope at the stance foot the step starts from.
    pub surface_in: (f64, f64),
    /// Sagittal distance from the start apex to the stance switch.
    pub switch_distance: f64,
    pub t_switch: f64,
    pub duration: f64,
    /// Step-frame (sagittal, lateral) feet of the two stance phases.
    pub feet: [[f64; 2]; 2],
    /// Step-frame motion of the two stance phases.
    pub phases: [Vec<PipmSample>; 2],
    /// World-frame CoM samples across both phases.
    pub com_samples: Vec<ComSample>,
    pub next_apex: ApexState,
}

/// Sagittal position of the stance switch where the forward branch about the
/// current foot (at 0) meets the backward branch about the next foot (at `d`).
fn switch_point(v0: f64, v1: f64, w0: f64, w1: f64, d: f64) -> Option<f64> {
    let (a, b, c) = (
        w0 * w0 - w1 * w1,
        2.0 * w1 * w1 * d,
        v0 * v0 - v1 * v1 - w1 * w1 * d * d,
    );
    let inside = |s: f64| s > 0.0 && s < d;
    if a.abs() < 1e-12 * (w0 * w0) {
        let s = -c / b;
        return inside(s).then_some(s);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let r = disc.sqrt();
    [(-b + r) / (2.0 * a), (-b - r) / (2.0 * a)]
        .into_iter()
        .find(|&s| inside(s))
}

/// Lateral foot offset that brings the lateral velocity to zero after `t2`,
/// found by bisection on the monotone end-velocity residual.
fn lateral_foot(y1: f64, vy1: f64, omega: f64, t2: f64) -> f64 {
    let (sh, ch) = ((omega * t2).sinh(), (omega * t2).cosh());
    let residual = |yf: f64| (y1 - yf) * omega * sh + vy1 * ch;
    let span = vy1.abs() / (omega * (omega * t2).tanh()) + 1.0;
    let (mut lo, mut hi) = (y1 - span, y1 + span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Plans the step taking `apex` to the next apex under `action`: sagittal
/// switch by orbital-energy matching, lateral foot timed to the sagittal plan.
pub fn plan_step(
    apex: &ApexState,
    action: &HighLevelAction,
    params: &PipmParams,
    limits: &SafetyLimits,
    terrain: &dyn ElevationBelief,
) -> Result<StepPlan> {
    params.validate()?;
    apex.validate()?;
    action.validate(limits)?;
    if action.psi == apex.stance {
        return Err(Error::Usage("a step must switch the stance foot".into()));
    }
    let phi = apex.waypoint.theta + action.dtheta;
    let (t_hat, n_hat) = (unit(phi), unit(phi + FRAC_PI_2));
    let origin = apex.waypoint.position();
    let to_world = |s: f64, l: f64| origin + t_hat * s + n_hat * l;
    let next_wp = apex.waypoint.advance(action.d, action.dtheta);
    let z_next = apex.z_apex + action.dz;
    let ground_next = terrain.mean(next_wp.position());
    if !(z_next - ground_next > 0.0) {
        return Err(Error::Infeasible(format!(
            "next apex height {z_next:.3} is not above the terrain ({ground_next:.3})"
        )));
    }

    let omega = params.omega();
    let (v0, v1, d) = (apex.v_apex, params.v_apex, action.d);
    let s = switch_point(v0, v1, omega, omega, d).ok_or_else(|| {
        Error::Infeasible(format!(
            "no phase-space intersection for d = {d} at v = {v0}"
        ))
    })?;
    let t1 = (omega * s / v0).asinh() / omega;
    let t2 = (omega * (d - s) / v1).asinh() / omega;

    let (y0, ys) = (apex.lateral_offset, apex.foot_lateral);
    let first = pipm_propagate([0.0, y0], [v0, 0.0], [0.0, ys], omega, t1, params.sample_dt);
    let sw = *first.last().expect("at least one sample");
    let yf = lateral_foot(sw.position[1], sw.velocity[1], omega, t2);
    let second = pipm_propagate(
        sw.position,
        sw.velocity,
        [d, yf],
        omega,
        t2,
        params.sample_dt,
    );
    let end = *second.last().expect("at least one sample");

    let stance_foot = to_world(0.0, ys);
    let new_foot = to_world(d, yf);
    let surface_in = terrain.mean_gradient(stance_foot, params.slope_h);
    let (a, b) = terrain.mean_gradient(new_foot, params.slope_h);
    let start_world = to_world(0.0, y0);
    let end_world = to_world(end.position[0], end.position[1]);

    let mut com_samples = Vec::with_capacity(first.len() + second.len());
    for (k, phase) in [&first, &second].into_iter().enumerate() {
        for p in phase.iter() {
            let w = to_world(p.position[0], p.position[1]);
            let z = if k == 0 {
                apex.z_apex
                    + surface_in.0 * (w.x - start_world.x)
                    + surface_in.1 * (w.y - start_world.y)
            } else {
                z_next + a * (w.x - end_world.x) + b * (w.y - end_world.y)
            };
            let v = t_hat * p.velocity[0] + n_hat * p.velocity[1];
            com_samples.push(ComSample {
                t: if k == 0 { p.t } else { t1 + p.t },
                position: [w.x, w.y, z],
                velocity: [v.x, v.y],
            });
        }
    }

    let next_apex = ApexState {
        waypoint: next_wp,
        v_apex: end.velocity[0],
        z_apex: z_next,
        stance: action.psi,
        lateral_offset: end.position[1],
        foot_lateral: yf,
    };
    Ok(StepPlan {
        action: *action,
        omega,
        p_foot: [new_foot.x, new_foot.y, terrain.mean(new_foot)],
        a,
        b,
        surface_in,
        switch_distance: s,
        t_switch: t1,
        duration: t1 + t2,
        feet: [[0.0, ys], [d, yf]],
        phases: [first, second],
        com_samples,
        next_apex,
    })
}

/// The action that takes waypoint `w` to `w_next`, with the elevation change
/// read from the belief mean.
pub fn action_between(
    w: &Waypoint,
    w_next: &Waypoint,
    terrain: &dyn ElevationBelief,
    previous_stance: Stance,
) -> HighLevelAction {
    HighLevelAction {
        d: w.distance(w_next),
        dtheta: wrap_angle(w_next.theta - w.theta),
        dz: terrain.mean(w_next.position()) - terrain.mean(w.position()),
        psi: previous_stance.other(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::ConstantBelief;
    use std::f64::consts::PI;

    fn flat() -> ConstantBelief {
        ConstantBelief {
            mean: 0.0,
            variance: 0.0,
        }
    }

    fn start() -> ApexState {
        ApexState::nominal(
            Waypoint::new(0.0, 0.0, 0.0),
            0.0,
            Stance::Left,
            &PipmParams::default(),
        )
    }

    fn step(d: f64, dtheta: f64) -> HighLevelAction {
        HighLevelAction {
            d,
            dtheta,
            dz: 0.0,
            psi: Stance::Right,
        }
    }

    #[test]
    fn symmetric_step_switches_midway() {
        let p = plan_step(
            &start(),
            &step(0.4, 0.0),
            &PipmParams::default(),
            &SafetyLimits::default(),
            &flat(),
        )
        .unwrap();
        assert!((p.switch_distance - 0.2).abs() < 1e-12);
        assert!((p.p_foot[0] - 0.4).abs() < 1e-12);
        assert!((p.omega - (9.81f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn lateral_foot_matches_closed_form() {
        let p = plan_step(
            &start(),
            &step(0.4, 0.1),
            &PipmParams::default(),
            &SafetyLimits::default(),
            &flat(),
        )
        .unwrap();
        let sw = p.phases[0].last().unwrap();
        let t2 = p.duration - p.t_switch;
        let w = p.omega;
        let closed = sw.position[1] + sw.velocity[1] / (w * (w * t2).tanh());
        assert!((p.feet[1][1] - closed).abs() < 1e-12);
        assert!(p.phases[1].last().unwrap().velocity[1].abs() < 1e-12);
    }

    #[test]
    fn straight_walking_alternates_feet() {
        let params = PipmParams::default();
        let limits = SafetyLimits::default();
        let mut apex = start();
        let mut stance = apex.stance;
        for _ in 0..6 {
            let a = HighLevelAction {
                d: 0.4,
                dtheta: 0.0,
                dz: 0.0,
                psi: stance.other(),
            };
            let p = plan_step(&apex, &a, &params, &limits, &flat()).unwrap();
            assert_eq!(p.feet[1][1].signum(), a.psi.sign());
            assert!((p.next_apex.lateral_offset + apex.lateral_offset).abs() < 1e-9);
            apex = p.next_apex;
            stance = apex.stance;
        }
    }

    #[test]
    fn elevation_change_carries_to_apex() {
        let mut a = step(0.4, 0.0);
        let p0 = plan_step(
            &start(),
            &a,
            &PipmParams::default(),
            &SafetyLimits::default(),
            &flat(),
        )
        .unwrap();
        assert_eq!(p0.next_apex.z_apex, start().z_apex);
        a.dz = 0.05;
        let p1 = plan_step(
            &start(),
            &a,
            &PipmParams::default(),
            &SafetyLimits::default(),
            &flat(),
        )
        .unwrap();
        assert!((p1.next_apex.z_apex - start().z_apex - 0.05).abs() < 1e-15);
    }

    #[test]
    fn samples_bound_the_step() {
        let s = start();
        let p = plan_step(
            &s,
            &step(0.35, -0.25),
            &PipmParams::default(),
            &SafetyLimits::default(),
            &flat(),
        )
        .unwrap();
        let phi = s.waypoint.theta - 0.25;
        let n = unit(phi + FRAC_PI_2);
        let first = p.com_samples.first().unwrap();
        let last = p.com_samples.last().unwrap();
        let a0 = s.waypoint.position() + n * s.lateral_offset;
        let a1 = p.next_apex.waypoint.position() + n * p.next_apex.lateral_offset;
        assert!((first.position[0] - a0.x).abs() < 1e-9 && (first.position[1] - a0.y).abs() < 1e-9);
        assert!((last.position[0] - a1.x).abs() < 1e-9 && (last.position[1] - a1.y).abs() < 1e-9);
        assert!((p.next_apex.waypoint.distance(&s.waypoint) - 0.35).abs() < 1e-9);
        assert!((p.next_apex.waypoint.theta - phi).abs() < 1e-12);
    }

    #[test]
    fn velocity_jump_without_intersection_is_infeasible() {
        let mut s = start();
        s.v_apex = 3.0;
        let r = plan_step(
            &s,
            &step(0.2, 0.0),
            &PipmParams::default(),
            &SafetyLimits::default(),
            &flat(),
        );
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn same_stance_is_rejected() {
        let mut a = step(0.4, 0.0);
        a.psi = Stance::Left;
        let r = plan_step(
            &start(),
            &a,
            &PipmParams::default(),
            &SafetyLimits::default(),
            &flat(),
        );
        assert!(matches!(r, Err(Error::Usage(_))));
    }

    #[test]
    fn action_between_examples() {
        let f = flat();
        let a = action_between(
            &Waypoint::new(0.0, 0.0, 0.0),
            &Waypoint::new(0.4, 0.0, 0.0),
            &f,
            Stance::Left,
        );
        assert_eq!((a.d, a.dtheta, a.dz, a.psi), (0.4, 0.0, 0.0, Stance::Right));
        let b = action_between(
            &Waypoint::new(0.0, 0.0, 0.0),
            &Waypoint::new(0.0, 0.4, PI / 2.0),
            &f,
            Stance::Right,
        );
        assert!((b.d - 0.4).abs() < 1e-15 && (b.dtheta - PI / 2.0).abs() < 1e-15);
        let c = action_between(
            &Waypoint::new(0.0, 0.0, 0.3),
            &Waypoint::new(1.0, 0.0, 0.3 + 2.0 * PI),
            &f,
            Stance::Left,
        );
        assert!(c.dtheta.abs() < 1e-12);
    }
}
