use rand::Rng;

use super::segment_safe;
use crate::belief::ElevationBelief;
use crate::error::{Error, Result};
use crate::geometry::{in_triangle, segments_intersect, unit, Point2};
use crate::locomotion::SafetyLimits;
use crate::terrain::Bounds;

/// Regular tiling of the workspace into square regions. Interior boundaries
/// belong to the higher region; the far workspace edges to the last one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionPartition {
    pub bounds: Bounds,
    pub size: f64,
    pub cols: usize,
    pub rows: usize,
}

pub fn build_partition(bounds: Bounds, size: f64) -> Result<RegionPartition> {
    bounds.validate()?;
    if !(size > 0.0) || !size.is_finite() {
        return Err(Error::Config(format!(
            "region size {size} must be positive"
        )));
    }
    Ok(RegionPartition {
        bounds,
        size,
        cols: (bounds.width() / size).ceil() as usize,
        rows: (bounds.height() / size).ceil() as usize,
    })
}

impl RegionPartition {
    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(column, row)` of the region containing `p`; points outside are clamped.
    pub fn region_of(&self, p: Point2) -> (usize, usize) {
        let idx = |v: f64, lo: f64, n: usize| {
            (((v - lo) / self.size).floor().max(0.0) as usize).min(n - 1)
        };
        (
            idx(p.x, self.bounds.min[0], self.cols),
            idx(p.y, self.bounds.min[1], self.rows),
        )
    }

    pub fn index_of(&self, p: Point2) -> usize {
        let (c, r) = self.region_of(p);
        r * self.cols + c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyBarriers {
    pub origin: Point2,
    /// Far endpoint of the barrier at `theta0 - dtheta_safe`.
    pub lsb1: Point2,
    /// Far endpoint of the barrier at `theta0 + dtheta_safe`.
    pub lsb2: Point2,
}

pub fn safety_barriers(v0: Point2, theta0: f64, d_step: f64, dtheta_safe: f64) -> SafetyBarriers {
    SafetyBarriers {
        origin: v0,
        lsb1: v0 + unit(theta0 - dtheta_safe) * (2.0 * d_step),
        lsb2: v0 + unit(theta0 + dtheta_safe) * (2.0 * d_step),
    }
}

impl SafetyBarriers {
    pub fn segments(&self) -> [(Point2, Point2); 2] {
        [(self.origin, self.lsb1), (self.origin, self.lsb2)]
    }

    /// Closed wedge between the two barriers.
    pub fn in_wedge(&self, p: Point2) -> bool {
        in_triangle(p, self.origin, self.lsb1, self.lsb2, 1e-12)
    }

    /// Whether edge `p`-`q` meets a barrier anywhere except at the shared origin.
    pub fn blocks(&self, p: Point2, q: Point2) -> bool {
        self.segments().iter().any(|&(a, b)| {
            if p == self.origin || q == self.origin {
                // Segments sharing an endpoint meet elsewhere only when collinear and overlapping.
                let other = if p == self.origin { q } else { p };
                let (e, s) = (other - a, b - a);
                (e.x * s.y - e.y * s.x).abs() <= 1e-12 * e.norm() * s.norm() && e.dot(&s) > 0.0
            } else {
                segments_intersect(p, q, a, b)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalConfig {
    pub d_step: f64,
    pub region_size: f64,
    pub budget: usize,
    /// Iterations spent improving the path after the goal is first reached.
    pub refine: usize,
    pub goal_bias: f64,
    /// Sampling interval of the elevation check along edges; `None` checks vertices only.
    pub edge_spacing: Option<f64>,
    pub bounds: Bounds,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self {
            d_step: 1.5,
            region_size: 5.0,
            budget: 4000,
            refine: 300,
            goal_bias: 0.1,
            edge_spacing: Some(0.25),
            bounds: Bounds::new(0.0, 0.0, 20.0, 20.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GlobalGraph {
    pub vertices: Vec<Point2>,
    pub parent: Vec<Option<usize>>,
    pub cost: Vec<f64>,
}

impl GlobalGraph {
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|p| (p, i)))
    }

    fn path_to(&self, i: usize) -> Vec<Point2> {
        let mut out = vec![self.vertices[i]];
        let mut v = i;
        while let Some(p) = self.parent[v] {
            out.push(self.vertices[p]);
            v = p;
        }
        out.reverse();
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalPlan {
    /// Vertices from the start to the goal.
    pub path: Vec<Point2>,
    /// The search tree, goal connections excluded.
    pub graph: GlobalGraph,
    pub barriers: SafetyBarriers,
}

/// Coarse RRT* with `d_step` edges. Children of the start must lie in the
/// barrier wedge and no edge may cross a barrier. A vertex within `d_step`
/// of the goal connects to it; after the first connection the search keeps
/// sampling for `refine` iterations and returns the cheapest connection.
#[allow(clippy::too_many_arguments)]
pub fn lda_g_rrt<R: Rng + ?Sized>(
    v0: Point2,
    theta0: f64,
    goal: Point2,
    terrain: &dyn ElevationBelief,
    limits: &SafetyLimits,
    cfg: &GlobalConfig,
    rng: &mut R,
) -> Result<GlobalPlan> {
    if !(cfg.d_step > limits.d_safe) {
        return Err(Error::Config(
            "global step must exceed the local safe step".into(),
        ));
    }
    if terrain.mean(v0) > limits.z_safe {
        return Err(Error::Domain(
            "global search started on untraversable terrain".into(),
        ));
    }
    let barriers = safety_barriers(v0, theta0, cfg.d_step, limits.dtheta_safe);
    let mut graph = GlobalGraph {
        vertices: vec![v0],
        parent: vec![None],
        cost: vec![0.0],
    };
    let edge_ok = |from: usize, p: Point2, q: Point2| -> bool {
        if !cfg.bounds.contains(q) || terrain.mean(q) > limits.z_safe {
            return false;
        }
        if from == 0 && !barriers.in_wedge(q) {
            return false;
        }
        if barriers.blocks(p, q) {
            return false;
        }
        cfg.edge_spacing
            .is_none_or(|s| segment_safe(terrain, p, q, limits.z_safe, s))
    };
    let mut best: Option<(f64, usize)> = None;
    let try_goal = |graph: &GlobalGraph, i: usize, best: &mut Option<(f64, usize)>| {
        let p = graph.vertices[i];
        let d = (goal - p).norm();
        if d <= cfg.d_step && (d == 0.0 || edge_ok(i, p, goal)) {
            let c = graph.cost[i] + d;
            if best.is_none_or(|(bc, _)| c < bc) {
                *best = Some((c, i));
            }
        }
    };
    try_goal(&graph, 0, &mut best);
    let mut remaining_refine = cfg.refine;
    for _ in 0..cfg.budget {
        if best.is_some() {
            if remaining_refine == 0 {
                break;
            }
            remaining_refine -= 1;
        }
        let rand_point = if rng.random::<f64>() < cfg.goal_bias {
            goal
        } else {
            Point2::new(
                rng.random_range(cfg.bounds.min[0]..=cfg.bounds.max[0]),
                rng.random_range(cfg.bounds.min[1]..=cfg.bounds.max[1]),
            )
        };
        let near = (0..graph.vertices.len())
            .min_by(|&a, &b| {
                (graph.vertices[a] - rand_point)
                    .norm_squared()
                    .total_cmp(&(graph.vertices[b] - rand_point).norm_squared())
            })
            .expect("root exists");
        let dir = rand_point - graph.vertices[near];
        if dir.norm() == 0.0 {
            continue;
        }
        let q = graph.vertices[near] + dir.normalize() * cfg.d_step;
        // Cheapest admissible parent exactly one step away; usually only `near`.
        let mut parent = None;
        for u in 0..graph.vertices.len() {
            let p = graph.vertices[u];
            if ((q - p).norm() - cfg.d_step).abs() > 1e-9 {
                continue;
            }
            if parent.is_none_or(|b: usize| graph.cost[u] < graph.cost[b]) && edge_ok(u, p, q) {
                parent = Some(u);
            }
        }
        let Some(parent) = parent else {
            continue;
        };
        graph.vertices.push(q);
        graph.parent.push(Some(parent));
        graph.cost.push(graph.cost[parent] + cfg.d_step);
        try_goal(&graph, graph.vertices.len() - 1, &mut best);
    }
    let Some((_, last)) = best else {
        return Err(Error::Infeasible(format!(
            "global search exhausted {} iterations with {} vertices",
            cfg.budget,
            graph.vertices.len()
        )));
    };
    let mut path = graph.path_to(last);
    if *path.last().expect("non-empty") != goal {
        path.push(goal);
    }
    Ok(GlobalPlan {
        path,
        graph,
        barriers,
    })
}

/// Indices of the local targets along `path`: from each anchor, the last
/// vertex of the run sharing the anchor's region; the next anchor follows it.
pub fn extract_waypoints(path: &[Point2], partition: &RegionPartition) -> Vec<usize> {
    let mut out = Vec::new();
    let mut anchor = 0;
    while anchor < path.len() {
        let region = partition.index_of(path[anchor]);
        let mut i = anchor;
        while i + 1 < path.len() && partition.index_of(path[i + 1]) == region {
            i += 1;
        }
        out.push(i);
        anchor = i + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::ConstantBelief;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn partition_counts_and_ties() {
        let p = build_partition(Bounds::new(0.0, 0.0, 20.0, 20.0), 5.0).unwrap();
        assert_eq!(p.len(), 16);
        assert_eq!(p.region_of(Point2::new(0.0, 0.0)), (0, 0));
        assert_eq!(p.region_of(Point2::new(5.0, 1.0)), (1, 0));
        assert_eq!(p.region_of(Point2::new(20.0, 20.0)), (3, 3));
        assert!(build_partition(Bounds::new(0.0, 0.0, 1.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn barrier_endpoints() {
        let b = safety_barriers(Point2::new(0.0, 0.0), 0.0, 1.0, FRAC_PI_4);
        assert!((b.lsb2.x - 2.0 * FRAC_PI_4.cos()).abs() < 1e-12);
        assert!((b.lsb2.y - std::f64::consts::SQRT_2).abs() < 1e-12);
        let z = safety_barriers(Point2::new(1.0, 2.0), 0.7, 1.0, 0.0);
        assert_eq!(z.lsb1, z.lsb2);
    }

    #[test]
    fn shared_origin_is_not_a_crossing() {
        let b = safety_barriers(Point2::new(0.0, 0.0), 0.0, 1.0, 0.3);
        assert!(!b.blocks(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)));
        assert!(b.blocks(Point2::new(0.0, 0.0), b.lsb1 * 0.5));
        assert!(b.blocks(Point2::new(1.0, -1.0), Point2::new(1.0, 1.0)));
    }

    #[test]
    fn extraction_examples() {
        let part = build_partition(Bounds::new(0.0, 0.0, 15.0, 5.0), 5.0).unwrap();
        let xs = [0.5, 1.5, 2.5, 5.5, 6.5, 7.5, 10.5, 11.5, 12.5];
        let path: Vec<Point2> = xs.iter().map(|&x| Point2::new(x, 1.0)).collect();
        assert_eq!(extract_waypoints(&path, &part), vec![2, 5, 8]);
        assert_eq!(extract_waypoints(&path[..3], &part), vec![2]);
        assert_eq!(extract_waypoints(&path[..1], &part), vec![0]);
    }

    #[test]
    fn straight_goal_on_flat_ground() {
        let flat = ConstantBelief {
            mean: 0.0,
            variance: 0.01,
        };
        let mut rng = crate::rng::from_seed(1);
        let plan = lda_g_rrt(
            Point2::new(2.0, 10.0),
            0.0,
            Point2::new(18.0, 10.0),
            &flat,
            &SafetyLimits::default(),
            &GlobalConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert!(plan.barriers.in_wedge(plan.path[1]));
        assert_eq!(*plan.path.last().unwrap(), Point2::new(18.0, 10.0));
    }
}
