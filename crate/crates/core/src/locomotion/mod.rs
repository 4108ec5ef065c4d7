//! Prismatic inverted pendulum step dynamics and phase-space step planning.

mod pipm;
mod plan;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Point2};

pub use pipm::{orbital_energy, pipm_propagate, PipmSample};
pub use plan::{action_between, plan_step, ComSample, StepPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stance {
    Left,
    Right,
}

impl Stance {
    pub fn other(self) -> Self {
        match self {
            Stance::Left => Stance::Right,
            Stance::Right => Stance::Left,
        }
    }

    /// +1 for left, -1 for right: the side of the lateral axis the foot is on.
    pub fn sign(self) -> f64 {
        match self {
            Stance::Left => 1.0,
            Stance::Right => -1.0,
        }
    }
}

/// Planning state: planar apex position and heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Waypoint {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    /// The waypoint reached by stepping `d` along `theta + dtheta`.
    pub fn advance(&self, d: f64, dtheta: f64) -> Self {
        let phi = self.theta + dtheta;
        Self {
            x: self.x + d * phi.cos(),
            y: self.y + d * phi.sin(),
            theta: wrap_angle(phi),
        }
    }

    pub fn distance(&self, other: &Waypoint) -> f64 {
        (self.position() - other.position()).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafetyLimits {
    pub d_safe: f64,
    pub dtheta_safe: f64,
    pub z_safe: f64,
}

impl Default for SafetyLimits {
    fn default() -> Self {
        Self {
            d_safe: 0.4,
            dtheta_safe: 0.3,
            z_safe: 0.15,
        }
    }
}

impl SafetyLimits {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_safe > 0.0 && self.dtheta_safe > 0.0 && self.z_safe > 0.0) {
            return Err(Error::Config("safety limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipmParams {
    pub gravity: f64,
    /// Apex CoM height above the stance surface.
    pub h_apex: f64,
    /// Sagittal apex speed held at every apex.
    pub v_apex: f64,
    /// Nominal lateral foot offset from the walking line.
    pub foot_width: f64,
    /// Nominal step length used to initialise the lateral gait.
    pub nominal_step: f64,
    /// Spacing of the CoM samples in a step plan.
    pub sample_dt: f64,
    /// Central-difference spacing for the surface slope.
    pub slope_h: f64,
}

impl Default for PipmParams {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            h_apex: 1.0,
            v_apex: 0.4,
            foot_width: 0.1,
            nominal_step: 0.4,
            sample_dt: 0.02,
            slope_h: 0.05,
        }
    }
}

impl PipmParams {
    pub fn omega(&self) -> f64 {
        (self.gravity / self.h_apex).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.gravity,
            self.h_apex,
            self.v_apex,
            self.foot_width,
            self.nominal_step,
            self.sample_dt,
            self.slope_h,
        ];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("PIPM parameters must be positive".into()));
        }
        Ok(())
    }
}

/// CoM state at an apex. The lateral quantities are measured in the frame
/// of the heading, relative to the walking line through the waypoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApexState {
    pub waypoint: Waypoint,
    pub v_apex: f64,
    /// Absolute CoM height.
    pub z_apex: f64,
    pub stance: Stance,
    pub lateral_offset: f64,
    pub foot_lateral: f64,
}

impl ApexState {
    /// Symmetric nominal gait state standing on `ground_z`.
    pub fn nominal(waypoint: Waypoint, ground_z: f64, stance: Stance, params: &PipmParams) -> Self {
        let w = params.omega();
        let t_switch = (w * 0.5 * params.nominal_step / params.v_apex).asinh() / w;
        let side = stance.sign() * params.foot_width;
        Self {
            waypoint,
            v_apex: params.v_apex,
            z_apex: ground_z + params.h_apex,
            stance,
            lateral_offset: side * (1.0 - 1.0 / (w * t_switch).cosh()),
            foot_lateral: side,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_apex > 0.0) || !(self.z_apex > 0.0) {
            return Err(Error::Domain(
                "apex velocity and height must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One footstep: distance, heading change, elevation change and the stance
/// foot placed by the step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighLevelAction {
    pub d: f64,
    pub dtheta: f64,
    pub dz: f64,
    pub psi: Stance,
}

impl HighLevelAction {
    pub fn validate(&self, limits: &SafetyLimits) -> Result<()> {
        if !(self.d > 0.0) || !self.d.is_finite() {
            return Err(Error::Usage(format!(
                "step distance {} must be positive",
                self.d
            )));
        }
        if self.dtheta.abs() > limits.dtheta_safe + 1e-12 {
            return Err(Error::Usage(format!(
                "heading change {} exceeds {}",
                self.dtheta, limits.dtheta_safe
            )));
        }
        if !self.dz.is_finite() {
            return Err(Error::Usage("elevation change must be finite".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omega_default() {
        assert!((PipmParams::default().omega() - 3.132_091).abs() < 1e-6);
    }

    #[test]
    fn advance_matches_recursion() {
        let w = Waypoint::new(1.0, 2.0, 0.2);
        let n = w.advance(0.4, 0.1);
        assert!((n.x - (1.0 + 0.4 * 0.3f64.cos())).abs() < 1e-15);
        assert!((n.y - (2.0 + 0.4 * 0.3f64.sin())).abs() < 1e-15);
        assert!((n.theta - 0.3).abs() < 1e-15);
    }

    #[test]
    fn nominal_gait_is_symmetric() {
        let p = PipmParams::default();
        let l = ApexState::nominal(Waypoint::new(0.0, 0.0, 0.0), 0.0, Stance::Left, &p);
        let r = ApexState::nominal(Waypoint::new(0.0, 0.0, 0.0), 0.0, Stance::Right, &p);
        assert!(l.lateral_offset > 0.0 && l.lateral_offset < l.foot_lateral);
        assert_eq!(l.lateral_offset, -r.lateral_offset);
    }
}
