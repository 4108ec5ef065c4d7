//! Ground-truth terrain: synthetic heightfields, bilinear elevation lookup and
//! the simulated range sensor.

mod export;
mod generate;
mod sensor;

use serde::{Deserialize, Serialize};

use crate::belief::ElevationBelief;
use crate::error::{Error, Result};
use crate::geometry::Point2;

pub use export::{write_field_csv, write_pgm};
pub use generate::{generate_terrain, ClearZone, TerrainSpec, TerrainStyle};
pub use sensor::{sense, SensorSpec, TerrainSample};

/// Axis-aligned workspace rectangle in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min: [min_x, min_y],
            max: [max_x, max_y],
        }
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.contains_tol(p, 0.0)
    }

    pub fn contains_tol(&self, p: Point2, tol: f64) -> bool {
        p.x >= self.min[0] - tol
            && p.x <= self.max[0] + tol
            && p.y >= self.min[1] - tol
            && p.y <= self.max[1] + tol
    }

    pub fn clamp(&self, p: Point2) -> Point2 {
        Point2::new(
            p.x.clamp(self.min[0], self.max[0]),
            p.y.clamp(self.min[1], self.max[1]),
        )
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let finite = self.min.iter().chain(&self.max).all(|v| v.is_finite());
        if !finite || self.width() <= 0.0 || self.height() <= 0.0 {
            return Err(Error::Config(format!("degenerate bounds {self:?}")));
        }
        Ok(())
    }
}

/// Regular lattice of elevations covering `bounds` exactly.
///
/// Values are stored row-major with row `j` at `y = min_y + j * dy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainField {
    bounds: Bounds,
    cols: usize,
    rows: usize,
    values: Vec<f64>,
}

impl TerrainField {
    pub fn from_values(bounds: Bounds, cols: usize, rows: usize, values: Vec<f64>) -> Result<Self> {
        bounds.validate()?;
        if cols < 2 || rows < 2 {
            return Err(Error::Config(format!(
                "grid needs at least 2x2 nodes, got {cols}x{rows}"
            )));
        }
        if values.len() != cols * rows {
            return Err(Error::Config(format!(
                "expected {} grid values, got {}",
                cols * rows,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite elevation".into()));
        }
        Ok(Self {
            bounds,
            cols,
            rows,
            values,
        })
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cell size (dx, dy).
    pub fn resolution(&self) -> (f64, f64) {
        (
            self.bounds.width() / (self.cols - 1) as f64,
            self.bounds.height() / (self.rows - 1) as f64,
        )
    }

    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.cols + i]
    }

    pub fn node_position(&self, i: usize, j: usize) -> Point2 {
        let (dx, dy) = self.resolution();
        Point2::new(
            self.bounds.min[0] + i as f64 * dx,
            self.bounds.min[1] + j as f64 * dy,
        )
    }

    /// All node positions in storage order.
    pub fn node_positions(&self) -> Vec<Point2> {
        (0..self.rows)
            .flat_map(|j| (0..self.cols).map(move |i| (i, j)))
            .map(|(i, j)| self.node_position(i, j))
            .collect()
    }

    /// Bilinear elevation; errors outside the bounds.
    pub fn elevation_at(&self, p: Point2) -> Result<f64> {
        if !p.x.is_finite() || !p.y.is_finite() || !self.bounds.contains_tol(p, 1e-9) {
            return Err(Error::Domain(format!(
                "({:.4}, {:.4}) lies outside the terrain bounds",
                p.x, p.y
            )));
        }
        Ok(self.interpolate(p))
    }

    fn interpolate(&self, p: Point2) -> f64 {
        bilinear(&self.values, self.cols, self.rows, &self.bounds, p)
    }
}

/// Bilinear lookup on a node lattice; points outside are clamped to the edge.
pub(crate) fn bilinear(
    values: &[f64],
    cols: usize,
    rows: usize,
    bounds: &Bounds,
    p: Point2,
) -> f64 {
    let dx = bounds.width() / (cols - 1) as f64;
    let dy = bounds.height() / (rows - 1) as f64;
    let fx = ((p.x - bounds.min[0]) / dx).clamp(0.0, (cols - 1) as f64);
    let fy = ((p.y - bounds.min[1]) / dy).clamp(0.0, (rows - 1) as f64);
    let i = (fx.floor() as usize).min(cols - 2);
    let j = (fy.floor() as usize).min(rows - 2);
    let tx = fx - i as f64;
    let ty = fy - j as f64;
    let v00 = values[j * cols + i];
    let v10 = values[j * cols + i + 1];
    let v01 = values[(j + 1) * cols + i];
    let v11 = values[(j + 1) * cols + i + 1];
    (1.0 - tx) * (1.0 - ty) * v00 + tx * (1.0 - ty) * v10 + (1.0 - tx) * ty * v01 + tx * ty * v11
}

/// The ground truth doubles as a zero-variance belief.
impl ElevationBelief for TerrainField {
    fn mean(&self, p: Point2) -> f64 {
        self.interpolate(self.bounds.clamp(p))
    }
    fn variance(&self, _p: Point2) -> f64 {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cell(values: [f64; 4]) -> TerrainField {
        TerrainField::from_values(Bounds::new(0.0, 0.0, 1.0, 1.0), 2, 2, values.to_vec()).unwrap()
    }

    #[test]
    fn node_identity() {
        let mut values = vec![0.0; 25];
        values[2 * 5 + 3] = 0.3;
        let f = TerrainField::from_values(Bounds::new(0.0, 0.0, 4.0, 4.0), 5, 5, values).unwrap();
        assert_eq!(f.elevation_at(f.node_position(3, 2)).unwrap(), 0.3);
    }

    #[test]
    fn cell_midpoint() {
        let f = unit_cell([0.0, 0.0, 0.0, 0.4]);
        let z = f.elevation_at(Point2::new(0.5, 0.5)).unwrap();
        assert!((z - 0.1).abs() < 1e-15);
    }

    #[test]
    fn continuity_across_cells() {
        let values: Vec<f64> = (0..9)
            .map(|k| (k as f64 * 0.37).sin().abs() * 0.5)
            .collect();
        let f = TerrainField::from_values(Bounds::new(0.0, 0.0, 2.0, 2.0), 3, 3, values).unwrap();
        for y in [0.1, 0.77, 1.5] {
            let l = f.elevation_at(Point2::new(1.0 - 1e-12, y)).unwrap();
            let r = f.elevation_at(Point2::new(1.0 + 1e-12, y)).unwrap();
            assert!((l - r).abs() < 1e-10);
        }
    }

    #[test]
    fn outside_is_domain_error() {
        let f = unit_cell([0.0; 4]);
        assert!(matches!(
            f.elevation_at(Point2::new(1.5, 0.5)),
            Err(Error::Domain(_))
        ));
        assert!(f.elevation_at(Point2::new(f64::NAN, 0.5)).is_err());
    }

    #[test]
    fn rejects_bad_grid() {
        let b = Bounds::new(0.0, 0.0, 1.0, 1.0);
        assert!(TerrainField::from_values(b, 1, 2, vec![0.0; 2]).is_err());
        assert!(TerrainField::from_values(b, 2, 2, vec![0.0; 3]).is_err());
        assert!(
            TerrainField::from_values(Bounds::new(0.0, 0.0, 0.0, 1.0), 2, 2, vec![0.0; 4]).is_err()
        );
    }
}
