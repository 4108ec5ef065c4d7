use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Bounds, TerrainField};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::rng;

/// Qualitative terrain regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainStyle {
    /// Many standalone radial hills; abrupt, strongly nonstationary.
    Hills,
    /// One elongated ridge across the workspace.
    Ridge,
    /// Low-frequency sinusoidal undulation.
    Undulation,
    Flat,
}

impl std::str::FromStr for TerrainStyle {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hills" => Ok(Self::Hills),
            "ridge" => Ok(Self::Ridge),
            "undulation" => Ok(Self::Undulation),
            "flat" => Ok(Self::Flat),
            other => Err(Error::Config(format!("unknown terrain style '{other}'"))),
        }
    }
}

/// Disc that is flattened to the base elevation, e.g. around start and goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClearZone {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TerrainSpec {
    pub bounds: Bounds,
    /// Grid node counts `[cols, rows]`.
    pub nodes: [usize; 2],
    pub style: TerrainStyle,
    /// Peak feature height above `z_min` (m).
    pub amplitude: f64,
    pub z_min: f64,
    pub z_max: f64,
    /// Number of hills for [`TerrainStyle::Hills`]; scaled with area when unset.
    pub features: Option<usize>,
    pub clear_zones: Vec<ClearZone>,
}

impl Default for TerrainSpec {
    fn default() -> Self {
        Self {
            bounds: Bounds::new(0.0, 0.0, 20.0, 20.0),
            nodes: [50, 50],
            style: TerrainStyle::Hills,
            amplitude: 0.5,
            z_min: 0.0,
            z_max: 0.5,
            features: None,
            clear_zones: Vec::new(),
        }
    }
}

impl TerrainSpec {
    /// Node counts for a square cell size that must tile the bounds exactly.
    pub fn nodes_for_resolution(bounds: &Bounds, resolution: f64) -> Result<[usize; 2]> {
        if !(resolution > 0.0) {
            return Err(Error::Config(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        let count = |extent: f64| {
            let cells = extent / resolution;
            if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) {
                Err(Error::Config(format!(
                    "resolution {resolution} does not tile extent {extent}"
                )))
            } else {
                Ok(cells.round() as usize + 1)
            }
        };
        Ok([count(bounds.width())?, count(bounds.height())?])
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.nodes[0] < 2 || self.nodes[1] < 2 {
            return Err(Error::Config(format!(
                "grid needs at least 2x2 nodes, got {:?}",
                self.nodes
            )));
        }
        if !(self.z_min <= self.z_max) || !self.z_min.is_finite() || !self.z_max.is_finite() {
            return Err(Error::Config("z_min must not exceed z_max".into()));
        }
        if !(self.amplitude >= 0.0) || self.amplitude > self.z_max - self.z_min + 1e-12 {
            return Err(Error::Config(format!(
                "amplitude {} must lie within [0, z_max - z_min]",
                self.amplitude
            )));
        }
        if self.clear_zones.iter().any(|z| !(z.radius > 0.0)) {
            return Err(Error::Config("clear zone radius must be positive".into()));
        }
        Ok(())
    }
}

struct Hill {
    center: Point2,
    height: f64,
    sigma: f64,
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Generates a deterministic synthetic heightfield.
pub fn generate_terrain(spec: &TerrainSpec, seed: u64) -> Result<TerrainField> {
    spec.validate()?;
    let mut rng = rng::stream(seed, "terrain");
    let b = spec.bounds;
    let (w, h) = (b.width(), b.height());
    let center = Point2::new(b.min[0] + 0.5 * w, b.min[1] + 0.5 * h);
    let amp = spec.amplitude;

    let raw: Box<dyn Fn(Point2) -> f64> = match spec.style {
        TerrainStyle::Flat => Box::new(|_| 0.0),
        TerrainStyle::Hills => {
            let count = spec
                .features
                .unwrap_or_else(|| ((14.0 * w * h / 400.0).round() as usize).max(1));
            let hills: Vec<Hill> = (0..count)
                .map(|_| Hill {
                    center: Point2::new(
                        rng.random_range(b.min[0]..=b.max[0]),
                        rng.random_range(b.min[1]..=b.max[1]),
                    ),
                    height: amp * rng.random_range(0.55..1.0),
                    sigma: rng.random_range(0.6..1.3),
                })
                .collect();
            Box::new(move |p| {
                hills
                    .iter()
                    .map(|hl| {
                        let r2 = (p - hl.center).norm_squared();
                        hl.height * (-r2 / (2.0 * hl.sigma * hl.sigma)).exp()
                    })
                    .sum()
            })
        }
        TerrainStyle::Ridge => {
            let span = w.min(h);
            let c = center
                + nalgebra::Vector2::new(
                    rng.random_range(-0.1..0.1) * w,
                    rng.random_range(-0.1..0.1) * h,
                );
            let phi = rng.random_range(0.0..PI);
            let half_len = span * rng.random_range(0.2..0.28);
            let sigma = rng.random_range(0.9..1.3);
            let peak = amp * 0.95;
            let (kx, ky) = (2.0 * PI / (0.6 * w), 2.0 * PI / (0.6 * h));
            let (px, py) = (
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.0..2.0 * PI),
            );
            let (along, across) = (
                nalgebra::Vector2::new(phi.cos(), phi.sin()),
                nalgebra::Vector2::new(-phi.sin(), phi.cos()),
            );
            Box::new(move |p| {
                let d = p - c;
                let u = d.dot(&across);
                let v = d.dot(&along).abs();
                let taper = if v <= half_len {
                    1.0
                } else {
                    (-(v - half_len).powi(2) / (2.0 * sigma * sigma)).exp()
                };
                let ridge = peak * (-u * u / (2.0 * sigma * sigma)).exp() * taper;
                let background = 0.03 * amp * (1.0 + (kx * p.x + px).sin() * (ky * p.y + py).sin());
                ridge + background
            })
        }
        TerrainStyle::Undulation => {
            let lx = rng.random_range(0.45..0.65) * w;
            let ly = rng.random_range(0.45..0.65) * h;
            let (px, py) = (
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.0..2.0 * PI),
            );
            Box::new(move |p| {
                let s = (2.0 * PI * p.x / lx + px).sin() * (2.0 * PI * p.y / ly + py).sin();
                amp * (0.5 * (1.0 + s)).powi(3)
            })
        }
    };

    let zones = spec.clear_zones.clone();
    let mask = move |p: Point2| {
        zones.iter().fold(1.0, |m, z| {
            let r = (p - Point2::new(z.center[0], z.center[1])).norm();
            m * smoothstep((r - 0.5 * z.radius) / (0.5 * z.radius))
        })
    };

    let [cols, rows] = spec.nodes;
    let dx = w / (cols - 1) as f64;
    let dy = h / (rows - 1) as f64;
    let mut values = Vec::with_capacity(cols * rows);
    for j in 0..rows {
        for i in 0..cols {
            let p = Point2::new(b.min[0] + i as f64 * dx, b.min[1] + j as f64 * dy);
            let z = spec.z_min + (raw(p) * mask(p)).min(amp);
            values.push(z.clamp(spec.z_min, spec.z_max));
        }
    }
    TerrainField::from_values(b, cols, rows, values)
}
