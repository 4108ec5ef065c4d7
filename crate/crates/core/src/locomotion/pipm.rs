/// CoM state at time `t` along a single-stance segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipmSample {
    pub t: f64,
    pub position: [f64; 2],
    pub velocity: [f64; 2],
}

/// Closed-form single-stance motion about `foot`, per axis
/// `x(t) = x0 + (x0 - xf)(cosh wt - 1) + (v0/w) sinh wt`, sampled every `dt`
/// with the final sample exactly at `duration`.
pub fn pipm_propagate(
    position: [f64; 2],
    velocity: [f64; 2],
    foot: [f64; 2],
    omega: f64,
    duration: f64,
    dt: f64,
) -> Vec<PipmSample> {
    assert!(
        omega > 0.0 && dt > 0.0 && duration >= 0.0,
        "invalid propagation parameters"
    );
    let at = |t: f64| {
        let (c, s) = ((omega * t).cosh(), (omega * t).sinh());
        let mut p = [0.0; 2];
        let mut v = [0.0; 2];
        for k in 0..2 {
            let rel = position[k] - foot[k];
            p[k] = position[k] + rel * (c - 1.0) + velocity[k] / omega * s;
            v[k] = rel * omega * s + velocity[k] * c;
        }
        PipmSample {
            t,
            position: p,
            velocity: v,
        }
    };
    let steps = (duration / dt).floor() as usize;
    let mut out: Vec<PipmSample> = (0..=steps).map(|i| at(i as f64 * dt)).collect();
    if out.last().is_none_or(|s| duration - s.t > 1e-12) {
        out.push(at(duration));
    } else if let Some(last) = out.last_mut() {
        *last = at(duration);
    }
    out
}

/// Orbital energy `v^2/2 - w^2 (x - xf)^2 / 2`, conserved along single stance.
pub fn orbital_energy(x: f64, v: f64, foot: f64, omega: f64) -> f64 {
    0.5 * v * v - 0.5 * omega * omega * (x - foot) * (x - foot)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibrium_is_stationary() {
        let s = pipm_propagate([0.3, -0.2], [0.0, 0.0], [0.3, -0.2], 3.0, 1.0, 0.1);
        assert!(s
            .iter()
            .all(|p| p.position == [0.3, -0.2] && p.velocity == [0.0, 0.0]));
    }

    #[test]
    fn zero_time_is_exact() {
        let s = pipm_propagate([0.123, 0.456], [0.7, -0.3], [0.01, 0.2], 3.1, 0.0, 0.01);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].position, [0.123, 0.456]);
        assert_eq!(s[0].velocity, [0.7, -0.3]);
    }

    #[test]
    fn final_sample_at_duration() {
        let s = pipm_propagate([0.0, 0.0], [0.4, 0.0], [0.0, 0.0], 3.0, 0.37, 0.1);
        assert_eq!(s.last().unwrap().t, 0.37);
        assert!(s.windows(2).all(|w| w[1].t > w[0].t));
    }
}
