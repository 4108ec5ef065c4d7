use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::TerrainField;
use crate::error::{Error, Result};
use crate::geometry::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerrainSample {
    pub location: Point2,
    pub elevation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorSpec {
    pub radius: f64,
    pub samples_per_step: usize,
    pub noise_std: f64,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self {
            radius: 3.0,
            samples_per_step: 10,
            noise_std: 0.005,
        }
    }
}

impl SensorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !(self.noise_std >= 0.0) {
            return Err(Error::Config(format!("invalid sensor spec {self:?}")));
        }
        Ok(())
    }
}

/// Samples the field uniformly in the sensing disc (clipped to the bounds)
/// with additive Gaussian noise.
pub fn sense<R: Rng + ?Sized>(
    field: &TerrainField,
    pose: Point2,
    spec: &SensorSpec,
    rng: &mut R,
) -> Result<Vec<TerrainSample>> {
    spec.validate()?;
    let bounds = field.bounds();
    if !bounds.contains_tol(pose, 1e-9) {
        return Err(Error::Domain(format!(
            "sensor pose ({:.3}, {:.3}) outside bounds",
            pose.x, pose.y
        )));
    }
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = Vec::with_capacity(spec.samples_per_step);
    while out.len() < spec.samples_per_step {
        let r = spec.radius * rng.random::<f64>().sqrt();
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        let p = Point2::new(pose.x + r * a.cos(), pose.y + r * a.sin());
        if !bounds.contains(p) {
            continue;
        }
        let truth = field.elevation_at(p)?;
        let elevation = if spec.noise_std > 0.0 {
            truth + noise.sample(rng)
        } else {
            truth
        };
        out.push(TerrainSample {
            location: p,
            elevation,
        });
    }
    Ok(out)
}
