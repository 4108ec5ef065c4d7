//! The elevation belief consumed by the planners.

use crate::geometry::Point2;

/// Predicted terrain elevation at planar locations.
///
/// Implemented by fitted terrain models, gridded snapshots of them, the
/// ground-truth field and scripted stubs used in tests.
pub trait ElevationBelief: Sync {
    fn mean(&self, p: Point2) -> f64;
    fn variance(&self, p: Point2) -> f64;

    /// Central-difference gradient of the mean.
    fn mean_gradient(&self, p: Point2, h: f64) -> (f64, f64) {
        let dx = (self.mean(Point2::new(p.x + h, p.y)) - self.mean(Point2::new(p.x - h, p.y)))
            / (2.0 * h);
        let dy = (self.mean(Point2::new(p.x, p.y + h)) - self.mean(Point2::new(p.x, p.y - h)))
            / (2.0 * h);
        (dx, dy)
    }
}

/// Flat belief with a constant mean and variance.
#[derive(Debug, Clone, Copy)]
pub struct ConstantBelief {
    pub mean: f64,
    pub variance: f64,
}

impl ElevationBelief for ConstantBelief {
    fn mean(&self, _p: Point2) -> f64 {
        self.mean
    }
    fn variance(&self, _p: Point2) -> f64 {
        self.variance
    }
}

/// Belief backed by closures; handy for scripted scenarios.
pub struct FnBelief<M, V> {
    pub mean: M,
    pub variance: V,
}

impl<M, V> ElevationBelief for FnBelief<M, V>
where
    M: Fn(Point2) -> f64 + Sync,
    V: Fn(Point2) -> f64 + Sync,
{
    fn mean(&self, p: Point2) -> f64 {
        (self.mean)(p)
    }
    fn variance(&self, p: Point2) -> f64 {
        (self.variance)(p)
    }
}
