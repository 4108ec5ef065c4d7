use serde::{Deserialize, Serialize};

use crate::belief::ElevationBelief;
use crate::geometry::Point2;
use crate::terrain::{bilinear, Bounds};

/// Terrain-model predictions on a lattice, read back by bilinear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridBelief {
    pub id: usize,
    pub bounds: Bounds,
    pub cols: usize,
    pub rows: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl GridBelief {
    pub fn node_positions(bounds: &Bounds, cols: usize, rows: usize) -> Vec<Point2> {
        let dx = bounds.width() / (cols - 1) as f64;
        let dy = bounds.height() / (rows - 1) as f64;
        (0..rows)
            .flat_map(|j| {
                (0..cols).map(move |i| {
                    Point2::new(bounds.min[0] + i as f64 * dx, bounds.min[1] + j as f64 * dy)
                })
            })
            .collect()
    }

    /// Copy whose mean at each node is the largest mean within `radius`.
    /// Planning on it keeps a clearance from untraversable ground. With
    /// `border` set, lattice offsets falling outside the grid count as that
    /// elevation, so the clearance extends to the workspace edge as well.
    pub fn dilated(&self, radius: f64, border: Option<f64>) -> GridBelief {
        let dx = self.bounds.width() / (self.cols - 1) as f64;
        let dy = self.bounds.height() / (self.rows - 1) as f64;
        let (ri, rj) = (
            (radius / dx).floor() as isize,
            (radius / dy).floor() as isize,
        );
        let mut mean = self.mean.clone();
        for j in 0..self.rows as isize {
            for i in 0..self.cols as isize {
                let mut m = f64::NEG_INFINITY;
                for b in j - rj..=j + rj {
                    for a in i - ri..=i + ri {
                        let (ox, oy) = ((a - i) as f64 * dx, (b - j) as f64 * dy);
                        if ox * ox + oy * oy > radius * radius + 1e-12 {
                            continue;
                        }
                        let inside = (0..self.cols as isize).contains(&a)
                            && (0..self.rows as isize).contains(&b);
                        if inside {
                            m = m.max(self.mean[b as usize * self.cols + a as usize]);
                        } else if let Some(w) = border {
                            m = m.max(w);
                        }
                    }
                }
                mean[j as usize * self.cols + i as usize] = m;
            }
        }
        GridBelief {
            mean,
            ..self.clone()
        }
    }

    /// Mean posterior standard deviation over the lattice.
    pub fn mean_std(&self) -> f64 {
        self.variance.iter().map(|v| v.max(0.0).sqrt()).sum::<f64>() / self.variance.len() as f64
    }
}

impl ElevationBelief for GridBelief {
    fn mean(&self, p: Point2) -> f64 {
        bilinear(&self.mean, self.cols, self.rows, &self.bounds, p)
    }

    fn variance(&self, p: Point2) -> f64 {
        bilinear(&self.variance, self.cols, self.rows, &self.bounds, p).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spike() -> GridBelief {
        let mut mean = vec![0.0; 25];
        mean[12] = 1.0;
        GridBelief {
            id: 0,
            bounds: Bounds::new(0.0, 0.0, 4.0, 4.0),
            cols: 5,
            rows: 5,
            mean,
            variance: vec![0.5; 25],
        }
    }

    #[test]
    fn dilation_spreads_to_the_disc_only() {
        let d = spike().dilated(1.0, None);
        let hot: Vec<usize> = (0..25).filter(|&k| d.mean[k] == 1.0).collect();
        assert_eq!(hot, vec![7, 11, 12, 13, 17]);
        assert_eq!(spike().dilated(0.0, None), spike());
    }

    #[test]
    fn border_counts_as_a_wall() {
        let d = spike().dilated(1.0, Some(5.0));
        let walled: Vec<usize> = (0..25).filter(|&k| d.mean[k] == 5.0).collect();
        let rim: Vec<usize> = (0..25)
            .filter(|&k| k % 5 == 0 || k % 5 == 4 || !(5..20).contains(&k))
            .collect();
        assert_eq!(walled, rim);
        assert_eq!(d.mean[12], 1.0);
    }

    #[test]
    fn interpolates_nodes_exactly() {
        let g = spike();
        assert_eq!(g.mean(Point2::new(2.0, 2.0)), 1.0);
        assert_eq!(g.mean(Point2::new(2.5, 2.0)), 0.5);
        assert_eq!(g.variance(Point2::new(0.3, 3.1)), 0.5);
    }
}
