use rand::Rng;

use super::segment_safe;
use crate::belief::ElevationBelief;
use crate::error::{Error, Result};
use crate::geometry::{heading_of, unit, wrap_angle, Point2};
use crate::locomotion::{action_between, HighLevelAction, SafetyLimits, Stance, Waypoint};
use crate::terrain::Bounds;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalConfig {
    /// Expansion iterations per search.
    pub budget: usize,
    /// Probability of sampling the target itself.
    pub goal_bias: f64,
    /// Samples are drawn from the start/target bounding box grown by this margin.
    pub margin: f64,
    /// Sampling interval of the elevation check along new edges.
    pub edge_spacing: f64,
    /// Also require the elevation condition along each new edge, not only at its vertex.
    pub check_edges: bool,
    /// Vertices must stay inside the workspace when set.
    pub bounds: Option<Bounds>,
    /// The final vertex must admit a further chain of this many admissible
    /// steps, so a trajectory never ends cornered; 0 disables the check.
    pub lookahead: usize,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self {
            budget: 2000,
            goal_bias: 0.15,
            margin: 3.0,
            edge_spacing: 0.05,
            check_edges: true,
            bounds: None,
            lookahead: 0,
        }
    }
}

/// Search tree of apex waypoints; every edge is one admissible step.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalGraph {
    pub vertices: Vec<Waypoint>,
    pub parent: Vec<Option<usize>>,
    pub cost: Vec<f64>,
    children: Vec<usize>,
}

impl LocalGraph {
    pub fn new(root: Waypoint) -> Self {
        Self {
            vertices: vec![root],
            parent: vec![None],
            cost: vec![0.0],
            children: vec![0],
        }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn has_child(&self, i: usize) -> bool {
        self.children[i] > 0
    }

    pub fn add(&mut self, w: Waypoint, parent: usize) -> usize {
        let cost = self.cost[parent] + self.vertices[parent].distance(&w);
        self.vertices.push(w);
        self.parent.push(Some(parent));
        self.cost.push(cost);
        self.children.push(0);
        self.children[parent] += 1;
        self.vertices.len() - 1
    }

    fn reparent(&mut self, i: usize, new_parent: usize) {
        if let Some(old) = self.parent[i] {
            self.children[old] -= 1;
        }
        self.parent[i] = Some(new_parent);
        self.children[new_parent] += 1;
        let delta = self.cost[new_parent] + self.vertices[new_parent].distance(&self.vertices[i])
            - self.cost[i];
        // Propagate the cost change to every descendant.
        let mut stack = vec![i];
        while let Some(v) = stack.pop() {
            self.cost[v] += delta;
            stack.extend((0..self.len()).filter(|&c| self.parent[c] == Some(v)));
        }
    }

    /// Vertex indices from the root to `i`.
    pub fn path_to(&self, i: usize) -> Vec<usize> {
        let mut out = vec![i];
        let mut v = i;
        while let Some(p) = self.parent[v] {
            out.push(p);
            v = p;
        }
        out.reverse();
        out
    }

    /// Trajectory along the tree from the root to `i`.
    pub fn trajectory_to(
        &self,
        i: usize,
        terrain: &dyn ElevationBelief,
        start_stance: Stance,
    ) -> LocalTrajectory {
        let wps = self
            .path_to(i)
            .into_iter()
            .map(|k| self.vertices[k])
            .collect();
        LocalTrajectory::from_waypoints(wps, terrain, start_stance)
    }

    fn is_ancestor(&self, a: usize, mut v: usize) -> bool {
        while let Some(p) = self.parent[v] {
            if p == a {
                return true;
            }
            v = p;
        }
        false
    }
}

/// An accepted expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub waypoint: Waypoint,
    pub parent: usize,
    /// Produced by the heading-limited fallback rule.
    pub fallback: bool,
}

fn admissible(
    from: Point2,
    to: Point2,
    terrain: &dyn ElevationBelief,
    limits: &SafetyLimits,
    cfg: &LocalConfig,
) -> bool {
    if let Some(b) = &cfg.bounds {
        if !b.contains(to) {
            return false;
        }
    }
    if cfg.check_edges {
        segment_safe(terrain, from, to, limits.z_safe, cfg.edge_spacing)
    } else {
        terrain.mean(to) <= limits.z_safe
    }
}

/// Candidate vertex towards `rand_point`: vertices are tried nearest first;
/// a candidate one `d_safe` step towards the sample is accepted when its
/// heading change and elevation are admissible. If none is, a final
/// candidate turns by `+dtheta_safe` from the nearest childless vertex.
pub fn propose_vertex(
    graph: &LocalGraph,
    rand_point: Point2,
    limits: &SafetyLimits,
    terrain: &dyn ElevationBelief,
    cfg: &LocalConfig,
) -> Option<Proposal> {
    let mut order: Vec<(f64, usize)> = graph
        .vertices
        .iter()
        .enumerate()
        .map(|(i, v)| ((v.position() - rand_point).norm_squared(), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for &(dist2, i) in &order {
        if dist2 == 0.0 {
            continue;
        }
        let v = &graph.vertices[i];
        let theta = heading_of(rand_point - v.position());
        if wrap_angle(theta - v.theta).abs() > limits.dtheta_safe {
            continue;
        }
        let p = v.position() + unit(theta) * limits.d_safe;
        if admissible(v.position(), p, terrain, limits, cfg) {
            return Some(Proposal {
                waypoint: Waypoint::new(p.x, p.y, theta),
                parent: i,
                fallback: false,
            });
        }
    }
    let &(_, near) = order.iter().find(|(_, i)| !graph.has_child(*i))?;
    let v = &graph.vertices[near];
    let theta = v.theta + limits.dtheta_safe;
    let p = v.position() + unit(theta) * limits.d_safe;
    admissible(v.position(), p, terrain, limits, cfg).then(|| Proposal {
        waypoint: Waypoint::new(p.x, p.y, wrap_angle(theta)),
        parent: near,
        fallback: true,
    })
}

/// Waypoints and the actions between them.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTrajectory {
    pub waypoints: Vec<Waypoint>,
    pub actions: Vec<HighLevelAction>,
}

impl LocalTrajectory {
    /// Builds the actions from consecutive waypoints; stances alternate
    /// starting from the foot opposite `start_stance`.
    pub fn from_waypoints(
        waypoints: Vec<Waypoint>,
        terrain: &dyn ElevationBelief,
        start_stance: Stance,
    ) -> Self {
        let mut stance = start_stance;
        let actions = waypoints
            .windows(2)
            .map(|w| {
                let a = action_between(&w[0], &w[1], terrain, stance);
                stance = a.psi;
                a
            })
            .collect();
        Self { waypoints, actions }
    }

    pub fn start_stance(&self) -> Option<Stance> {
        self.actions.first().map(|a| a.psi.other())
    }

    pub fn steps(&self) -> usize {
        self.actions.len()
    }

    pub fn length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| w[0].distance(&w[1]))
            .sum()
    }

    pub fn end(&self) -> &Waypoint {
        self.waypoints.last().expect("trajectory has a start")
    }
}

/// True when `depth` further steps, each turning by 0 or `±dtheta_safe`,
/// stay admissible from `w`.
pub fn has_continuation(
    w: &Waypoint,
    depth: usize,
    terrain: &dyn ElevationBelief,
    limits: &SafetyLimits,
    cfg: &LocalConfig,
) -> bool {
    if depth == 0 {
        return true;
    }
    [0.0, limits.dtheta_safe, -limits.dtheta_safe]
        .iter()
        .any(|dt| {
            let theta = w.theta + dt;
            let p = w.position() + unit(theta) * limits.d_safe;
            admissible(w.position(), p, terrain, limits, cfg)
                && has_continuation(
                    &Waypoint::new(p.x, p.y, wrap_angle(theta)),
                    depth - 1,
                    terrain,
                    limits,
                    cfg,
                )
        })
}

/// Heading-constrained RRT* over apex waypoints. Succeeds once a vertex is
/// within `d_safe` of the target and admits the configured lookahead; that
/// vertex ends the trajectory.
#[allow(clippy::too_many_arguments)]
pub fn lda_l_rrt<R: Rng + ?Sized>(
    start: Waypoint,
    start_stance: Stance,
    target: Point2,
    terrain: &dyn ElevationBelief,
    limits: &SafetyLimits,
    cfg: &LocalConfig,
    rng: &mut R,
) -> Result<(LocalTrajectory, LocalGraph)> {
    let (graph, reached) = grow_local_tree(start, target, terrain, limits, cfg, rng)?;
    match reached {
        Some(i) => Ok((graph.trajectory_to(i, terrain, start_stance), graph)),
        None => Err(Error::Infeasible(format!(
            "local search exhausted {} iterations with {} vertices",
            cfg.budget,
            graph.len()
        ))),
    }
}

/// The search behind [`lda_l_rrt`]. Returns the tree and the vertex that
/// reached the target, if any; a failed search still yields its tree.
pub fn grow_local_tree<R: Rng + ?Sized>(
    start: Waypoint,
    target: Point2,
    terrain: &dyn ElevationBelief,
    limits: &SafetyLimits,
    cfg: &LocalConfig,
    rng: &mut R,
) -> Result<(LocalGraph, Option<usize>)> {
    limits.validate()?;
    if terrain.mean(start.position()) > limits.z_safe {
        return Err(Error::Domain(
            "local search started on untraversable terrain".into(),
        ));
    }
    let mut graph = LocalGraph::new(start);
    let done = |g: &LocalGraph, i: usize| {
        (g.vertices[i].position() - target).norm() <= limits.d_safe + EPS
            && has_continuation(&g.vertices[i], cfg.lookahead, terrain, limits, cfg)
    };
    if done(&graph, 0) {
        return Ok((graph, Some(0)));
    }
    let s = start.position();
    let mut lo = [
        s.x.min(target.x) - cfg.margin,
        s.y.min(target.y) - cfg.margin,
    ];
    let mut hi = [
        s.x.max(target.x) + cfg.margin,
        s.y.max(target.y) + cfg.margin,
    ];
    if let Some(b) = &cfg.bounds {
        for k in 0..2 {
            lo[k] = lo[k].max(b.min[k]);
            hi[k] = hi[k].min(b.max[k]);
        }
    }
    for _ in 0..cfg.budget {
        let rand_point = if rng.random::<f64>() < cfg.goal_bias {
            target
        } else {
            Point2::new(
                rng.random_range(lo[0]..=hi[0]),
                rng.random_range(lo[1]..=hi[1]),
            )
        };
        let Some(prop) = propose_vertex(&graph, rand_point, limits, terrain, cfg) else {
            continue;
        };
        let new = graph.add(prop.waypoint, prop.parent);
        choose_parent(&mut graph, new, terrain, limits, cfg);
        rewire(&mut graph, new, terrain, limits, cfg);
        if done(&graph, new) {
            return Ok((graph, Some(new)));
        }
    }
    Ok((graph, None))
}

/// True when `child` is exactly one admissible step from `parent` along the
/// child's own heading.
fn step_fits(graph: &LocalGraph, parent: usize, child: usize, limits: &SafetyLimits) -> bool {
    let (p, c) = (&graph.vertices[parent], &graph.vertices[child]);
    let d = c.position() - p.position();
    (d.norm() - limits.d_safe).abs() <= EPS
        && wrap_angle(heading_of(d) - c.theta).abs() <= EPS
        && wrap_angle(c.theta - p.theta).abs() <= limits.dtheta_safe
}

fn choose_parent(
    graph: &mut LocalGraph,
    new: usize,
    terrain: &dyn ElevationBelief,
    limits: &SafetyLimits,
    cfg: &LocalConfig,
) {
    let mut best = graph.parent[new].expect("new vertex has a parent");
    for u in 0..new {
        if u == best || !step_fits(graph, u, new, limits) {
            continue;
        }
        if graph.cost[u] + limits.d_safe < graph.cost[best] + limits.d_safe - EPS
            && admissible(
                graph.vertices[u].position(),
                graph.vertices[new].position(),
                terrain,
                limits,
                cfg,
            )
        {
            best = u;
        }
    }
    if Some(best) != graph.parent[new] {
        graph.reparent(new, best);
    }
}

fn rewire(
    graph: &mut LocalGraph,
    new: usize,
    terrain: &dyn ElevationBelief,
    limits: &SafetyLimits,
    cfg: &LocalConfig,
) {
    for x in 0..new {
        if graph.parent[x].is_none()
            || !step_fits(graph, new, x, limits)
            || graph.is_ancestor(x, new)
        {
            continue;
        }
        if graph.cost[new] + limits.d_safe < graph.cost[x] - EPS
            && admissible(
                graph.vertices[new].position(),
                graph.vertices[x].position(),
                terrain,
                limits,
                cfg,
            )
        {
            graph.reparent(x, new);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{ConstantBelief, FnBelief};
    use crate::rng;

    fn flat() -> ConstantBelief {
        ConstantBelief {
            mean: 0.0,
            variance: 0.01,
        }
    }

    #[test]
    fn straight_ahead_candidate() {
        let g = LocalGraph::new(Waypoint::new(0.0, 0.0, 0.0));
        let p = propose_vertex(
            &g,
            Point2::new(3.0, 0.0),
            &SafetyLimits::default(),
            &flat(),
            &LocalConfig::default(),
        )
        .unwrap();
        assert!(!p.fallback);
        assert!(
            (p.waypoint.x - 0.4).abs() < 1e-15 && p.waypoint.y == 0.0 && p.waypoint.theta == 0.0
        );
    }

    #[test]
    fn behind_triggers_fallback() {
        let g = LocalGraph::new(Waypoint::new(0.0, 0.0, 0.0));
        let l = SafetyLimits::default();
        let p = propose_vertex(
            &g,
            Point2::new(-3.0, 0.0),
            &l,
            &flat(),
            &LocalConfig::default(),
        )
        .unwrap();
        assert!(p.fallback);
        assert_eq!(p.waypoint.theta, l.dtheta_safe);
        assert!((p.waypoint.x - 0.4 * 0.3f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn high_candidate_moves_to_next_vertex() {
        let mut g = LocalGraph::new(Waypoint::new(0.0, 0.0, 0.0));
        g.add(Waypoint::new(0.0, 1.0, 0.0), 0);
        // Above y = 0.5 the terrain is a wall except where x <= 0.2.
        let wall = FnBelief {
            mean: |p: Point2| if p.y > 0.5 && p.x > 0.2 { 0.2 } else { 0.0 },
            variance: |_p: Point2| 0.0,
        };
        let cfg = LocalConfig {
            check_edges: false,
            ..Default::default()
        };
        let p = propose_vertex(
            &g,
            Point2::new(3.0, 0.6),
            &SafetyLimits::default(),
            &wall,
            &cfg,
        );
        // The nearest vertex (index 1) lands on the wall; the root is tried next.
        let p = p.unwrap();
        assert_eq!(p.parent, 0);
        assert!(wall.mean(p.waypoint.position()) <= 0.15);
    }

    #[test]
    fn one_step_target() {
        let mut r = rng::from_seed(4);
        let (t, _) = lda_l_rrt(
            Waypoint::new(0.0, 0.0, 0.0),
            Stance::Left,
            Point2::new(0.6, 0.0),
            &flat(),
            &SafetyLimits::default(),
            &LocalConfig::default(),
            &mut r,
        )
        .unwrap();
        assert!((1..=2).contains(&t.steps()));
        assert!((t.end().position() - Point2::new(0.6, 0.0)).norm() <= 0.4 + 1e-9);
    }

    #[test]
    fn deterministic_per_seed() {
        let run = |seed| {
            let mut r = rng::from_seed(seed);
            lda_l_rrt(
                Waypoint::new(1.0, 1.0, 0.5),
                Stance::Right,
                Point2::new(5.0, 3.0),
                &flat(),
                &SafetyLimits::default(),
                &LocalConfig::default(),
                &mut r,
            )
            .unwrap()
            .0
        };
        assert_eq!(run(9), run(9));
    }

    #[test]
    fn continuation_sees_a_dead_end() {
        // Untraversable beyond x = 1 with nothing to turn into.
        let wall = FnBelief {
            mean: |p: Point2| {
                if p.x > 1.0 || p.y.abs() > 0.5 {
                    0.2
                } else {
                    0.0
                }
            },
            variance: |_p: Point2| 0.0,
        };
        let (limits, cfg) = (SafetyLimits::default(), LocalConfig::default());
        let w = Waypoint::new(0.0, 0.0, 0.0);
        assert!(has_continuation(&w, 0, &wall, &limits, &cfg));
        assert!(has_continuation(&w, 2, &wall, &limits, &cfg));
        assert!(!has_continuation(&w, 3, &wall, &limits, &cfg));
        assert!(has_continuation(&w, 6, &flat(), &limits, &cfg));
    }

    #[test]
    fn lookahead_rejects_cornered_endpoints() {
        // A wall just beyond the target, open only to the south.
        let pocket = FnBelief {
            mean: |p: Point2| if p.x > 3.8 && p.y > -1.0 { 0.2 } else { 0.0 },
            variance: |_p: Point2| 0.0,
        };
        let cfg = LocalConfig {
            lookahead: 3,
            ..Default::default()
        };
        let limits = SafetyLimits::default();
        for seed in 0..5 {
            let mut r = rng::from_seed(seed);
            let (t, _) = lda_l_rrt(
                Waypoint::new(0.0, 0.0, 0.0),
                Stance::Left,
                Point2::new(3.0, 0.0),
                &pocket,
                &limits,
                &cfg,
                &mut r,
            )
            .unwrap();
            assert!((t.end().position() - Point2::new(3.0, 0.0)).norm() <= 0.4 + 1e-9);
            assert!(has_continuation(t.end(), 3, &pocket, &limits, &cfg));
        }
    }
}
