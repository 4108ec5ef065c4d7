//! Planar geometry helpers shared by the planners.

use std::f64::consts::{PI, TAU};

pub type Point2 = nalgebra::Point2<f64>;
pub type Vector2 = nalgebra::Vector2<f64>;

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

pub fn heading_of(v: Vector2) -> f64 {
    v.y.atan2(v.x)
}

pub fn unit(theta: f64) -> Vector2 {
    Vector2::new(theta.cos(), theta.sin())
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(p: Point2, q: Point2, r: Point2) -> bool {
    q.x <= p.x.max(r.x) && q.x >= p.x.min(r.x) && q.y <= p.y.max(r.y) && q.y >= p.y.min(r.y)
}

/// Closed segment-segment intersection test (touching counts).
pub fn segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, p1, q2))
        || (d2 == 0.0 && on_segment(q1, p2, q2))
        || (d3 == 0.0 && on_segment(p1, q1, p2))
        || (d4 == 0.0 && on_segment(p1, q2, p2))
}

/// Closed triangle containment with a small absolute tolerance.
pub fn in_triangle(p: Point2, a: Point2, b: Point2, c: Point2, tol: f64) -> bool {
    let area = cross(a, b, c);
    if area.abs() < 1e-15 {
        // Degenerate wedge: accept points on the segment(s).
        let near = |s: Point2, e: Point2| {
            let se = e - s;
            let len2 = se.norm_squared();
            if len2 == 0.0 {
                return (p - s).norm() <= tol;
            }
            let t = ((p - s).dot(&se) / len2).clamp(0.0, 1.0);
            (p - (s + se * t)).norm() <= tol
        };
        return near(a, b) || near(a, c) || near(b, c);
    }
    let s = area.signum();
    let e = tol * (b - a).norm().max((c - a).norm()).max(1.0);
    s * cross(a, b, p) >= -e && s * cross(b, c, p) >= -e && s * cross(c, a, p) >= -e
}
