use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;

use terra_nav::belief::ConstantBelief;
use terra_nav::framework::GridBelief;
use terra_nav::gp::{kmeans, GpModel, InducingPolicy, KdTree, Kernel};
use terra_nav::locomotion::{
    plan_step, ApexState, HighLevelAction, PipmParams, SafetyLimits, Stance, Waypoint,
};
use terra_nav::planner::{
    build_partition, extract_waypoints, select_trajectory, smooth, LocalTrajectory,
    TrajectoryScores,
};
use terra_nav::terrain::Bounds;
use terra_nav::{ElevationBelief, Point2};

fn points(dim: usize, n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-4.0..4.0f64, dim), n)
}

fn flat() -> ConstantBelief {
    ConstantBelief {
        mean: 0.0,
        variance: 0.1,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grams_are_symmetric_psd(xs in points(2, 2..30), s2 in 0.1..3.0f64, l in 0.1..3.0f64, b in 0.05..2.0f64) {
        for k in [Kernel::rbf(s2, l), Kernel::neural_net(s2, b, vec![l, 2.0 * l])] {
            let g = k.gram(&xs);
            prop_assert!((&g - g.transpose()).amax() == 0.0);
            let min = SymmetricEigen::new(g).eigenvalues.min();
            prop_assert!(min >= -1e-9 * xs.len() as f64, "{} min eigenvalue {min}", k.name());
        }
    }

    #[test]
    fn nn_kernel_within_arcsine_range(a in prop::collection::vec(-1e4..1e4f64, 3), c in prop::collection::vec(-1e4..1e4f64, 3),
                                      s2 in 0.1..5.0f64, b in 1e-3..5.0f64) {
        let k = Kernel::neural_net(s2, b, vec![0.1, 1.0, 10.0]);
        prop_assert!(k.eval(&a, &c).unwrap().abs() <= s2 * FRAC_PI_2);
        prop_assert!(k.diag(&a) <= k.max_variance());
    }

    #[test]
    fn exact_posterior_matches_dense_solve(xs in points(1, 1..25), seed in 0u64..1000) {
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| (x[0] + seed as f64).sin() + 0.01 * i as f64).collect();
        let noise = 0.05;
        let k = Kernel::rbf(1.0, 0.8);
        let gp = GpModel::fit(xs.clone(), ys.clone(), k.clone(), noise, InducingPolicy::Exact).unwrap();
        let q = vec![0.37];
        let (m, v) = gp.predict(&q).unwrap();
        let n = xs.len();
        let rbf = |a: f64, b: f64| (-(a - b).powi(2) / (2.0 * 0.64)).exp();
        let kxx = DMatrix::from_fn(n, n, |i, j| rbf(xs[i][0], xs[j][0]) + if i == j { noise } else { 0.0 });
        let kq = DVector::from_fn(n, |i, _| rbf(xs[i][0], q[0]));
        let ybar = ys.iter().sum::<f64>() / n as f64;
        let lu = kxx.lu();
        let alpha = lu.solve(&DVector::from_fn(n, |i, _| ys[i] - ybar)).unwrap();
        let w = lu.solve(&kq).unwrap();
        prop_assert!((m - (ybar + kq.dot(&alpha))).abs() < 1e-8);
        prop_assert!((v - (1.0 - kq.dot(&w)).max(0.0)).abs() < 1e-8);
    }

    #[test]
    fn kd_tree_matches_brute_force(xs in points(3, 1..80), q in prop::collection::vec(-5.0..5.0f64, 3), n in 1usize..10) {
        let n = n.min(xs.len());
        let tree = KdTree::build(xs.clone()).unwrap();
        let got = tree.nearest(&q, n).unwrap();
        let d = |i: usize| xs[i].iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let mut all: Vec<usize> = (0..xs.len()).collect();
        all.sort_by(|&a, &b| d(a).total_cmp(&d(b)).then(a.cmp(&b)));
        prop_assert_eq!(got, all[..n].to_vec());
    }

    #[test]
    fn kmeans_recovers_separated_blobs(k in 1usize..6, per in 3usize..15, seed in 0u64..500) {
        let mut pts = Vec::new();
        for c in 0..k {
            for j in 0..per {
                let t = j as f64 * 0.7 + seed as f64;
                pts.push(vec![100.0 * c as f64 + t.sin(), -50.0 * c as f64 + t.cos()]);
            }
        }
        let cl = kmeans(&pts, k, seed).unwrap();
        for c in 0..k {
            let label = cl.assignment[c * per];
            prop_assert!(cl.assignment[c * per..(c + 1) * per].iter().all(|&a| a == label));
        }
        let mut labels: Vec<usize> = (0..k).map(|c| cl.assignment[c * per]).collect();
        labels.sort_unstable();
        labels.dedup();
        prop_assert_eq!(labels.len(), k);
    }

    #[test]
    fn extraction_ends_each_region_run(path in prop::collection::vec((0.0..20.0f64, 0.0..20.0f64), 1..40), size in 0.5..8.0f64) {
        let path: Vec<Point2> = path.into_iter().map(|(x, y)| Point2::new(x, y)).collect();
        let part = build_partition(Bounds::new(0.0, 0.0, 20.0, 20.0), size).unwrap();
        let idx = extract_waypoints(&path, &part);
        prop_assert_eq!(*idx.last().unwrap(), path.len() - 1);
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        for &i in &idx[..idx.len() - 1] {
            prop_assert_ne!(part.index_of(path[i]), part.index_of(path[i + 1]));
        }
    }

    #[test]
    fn selection_is_scale_invariant(scores in prop::collection::vec((0.0..5.0f64, -10.0..5.0f64), 1..10),
                                    a in 0.0..3.0f64, b in 0.0..3.0f64, c in 1e-3..1e3f64) {
        let s: Vec<TrajectoryScores> = scores.into_iter().map(|(error, info)| TrajectoryScores { error, info }).collect();
        prop_assert_eq!(select_trajectory(&s, a, b).unwrap(), select_trajectory(&s, c * a, c * b).unwrap());
    }

    #[test]
    fn step_energy_is_conserved(d in 0.05..0.4f64, dtheta in -0.3..0.3f64, left in any::<bool>()) {
        let params = PipmParams::default();
        let stance = if left { Stance::Left } else { Stance::Right };
        let apex = ApexState::nominal(Waypoint::new(1.0, -2.0, 0.4), 0.0, stance, &params);
        let action = HighLevelAction { d, dtheta, dz: 0.0, psi: stance.other() };
        let plan = plan_step(&apex, &action, &params, &SafetyLimits::default(), &flat()).unwrap();
        let w2 = plan.omega * plan.omega;
        for (phase, foot) in plan.phases.iter().zip(plan.feet) {
            let e = |p: &terra_nav::locomotion::PipmSample| 0.5 * p.velocity[0].powi(2) - 0.5 * w2 * (p.position[0] - foot[0]).powi(2);
            prop_assert!(phase.iter().all(|p| (e(p) - e(&phase[0])).abs() < 1e-9));
        }
        let exit = plan.phases[1].last().unwrap();
        prop_assert!((exit.position[0] - d).abs() < 1e-9);
        prop_assert!((plan.next_apex.v_apex - params.v_apex).abs() < 1e-9);
    }

    #[test]
    fn smoothing_keeps_endpoints_and_limits(turns in prop::collection::vec(-0.3..0.3f64, 2..15)) {
        let mut wps = vec![Waypoint::new(0.0, 0.0, 0.0)];
        for t in turns {
            wps.push(wps.last().unwrap().advance(0.4, t));
        }
        let raw = LocalTrajectory::from_waypoints(wps, &flat(), Stance::Left);
        let s = smooth(&raw, &flat(), &SafetyLimits::default(), 0.05);
        prop_assert_eq!(s.waypoints[0], raw.waypoints[0]);
        prop_assert_eq!(s.end().position(), raw.end().position());
        prop_assert!(s.length() <= raw.length() + 1e-9);
        for a in &s.actions {
            prop_assert!(a.d <= 0.4 + 1e-9 && a.dtheta.abs() <= 0.3 + 1e-9);
        }
    }

    #[test]
    fn dilation_dominates(vals in prop::collection::vec(0.0..1.0f64, 36), radius in 0.0..3.0f64) {
        let g = GridBelief {
            id: 0,
            bounds: Bounds::new(0.0, 0.0, 5.0, 5.0),
            cols: 6,
            rows: 6,
            mean: vals,
            variance: vec![0.1; 36],
        };
        let d = g.dilated(radius, None);
        prop_assert!(d.mean.iter().zip(&g.mean).all(|(a, b)| a >= b));
        let p = Point2::new(2.3, 4.1);
        prop_assert!(d.mean(p) >= g.mean(p) - 1e-12);
    }
}
