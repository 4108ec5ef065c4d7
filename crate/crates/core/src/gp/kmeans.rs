use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

pub const MAX_LLOYD_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centers: Vec<Vec<f64>>,
    /// Cluster index for every input point.
    pub assignment: Vec<usize>,
    pub iterations: usize,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    /// Point indices belonging to each cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.centers.len()];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn closest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Clustering> {
    if k == 0 {
        return Err(Error::Usage("k-means needs k >= 1".into()));
    }
    if k > points.len() {
        return Err(Error::Usage(format!(
            "k = {k} exceeds {} points",
            points.len()
        )));
    }
    let mut rng = rng::stream(seed, "kmeans");
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centers = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && !chosen[i] {
                    pick = Some(i);
                    if r < d {
                        break;
                    }
                    r -= d;
                }
            }
            pick
        } else {
            None
        };
        let pick = pick
            .or_else(|| (0..n).find(|&i| !chosen[i]))
            .expect("k <= n");
        chosen[pick] = true;
        centers.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq(p, &centers[centers.len() - 1]));
        }
    }

    let dim = points[0].len();
    let mut assignment: Vec<usize> = points.iter().map(|p| closest(p, &centers).0).collect();
    let mut iterations = 0;
    for it in 1..=MAX_LLOYD_ITERS {
        iterations = it;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            for d in 0..dim {
                sums[c][d] += p[d];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            } else {
                // Reseed an empty cluster at the point farthest from its centre.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq(&points[a], &centers[assignment[a]]);
                        let db = sq(&points[b], &centers[assignment[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("non-empty");
                centers[c] = points[far].clone();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| closest(p, &centers).0).collect();
        let changed = next != assignment;
        assignment = next;
        if !changed {
            break;
        }
    }
    Ok(Clustering {
        centers,
        assignment,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_equals_n() {
        let pts: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64 * 1.5, 0.0]).collect();
        let c = kmeans(&pts, 7, 1).unwrap();
        let mut seen = c.assignment.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 7);
        for (i, p) in pts.iter().enumerate() {
            assert_eq!(&c.centers[c.assignment[i]], p);
        }
    }

    #[test]
    fn k_one_is_centroid() {
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 3.0]];
        let c = kmeans(&pts, 1, 5).unwrap();
        assert!((c.centers[0][0] - 1.0).abs() < 1e-12 && (c.centers[0][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_many_clusters() {
        assert!(matches!(kmeans(&[vec![0.0]], 2, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn duplicate_points_still_fill_k() {
        let pts = vec![vec![1.0, 1.0]; 5];
        let c = kmeans(&pts, 3, 2).unwrap();
        assert_eq!(c.k(), 3);
    }
}
