use serde::{Deserialize, Serialize};

use super::kdtree::KdTree;
use super::kernel::Kernel;
use super::kmeans::{kmeans, Clustering};
use super::model::{GpModel, InducingPolicy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalApproxConfig {
    pub clusters: usize,
    pub neighbors: usize,
    pub seed: u64,
    /// Express each local problem in coordinates centred on its cluster
    /// centre. Matters for kernels that are not translation invariant.
    pub recenter: bool,
}

impl Default for LocalApproxConfig {
    fn default() -> Self {
        Self {
            clusters: 200,
            neighbors: 100,
            seed: 0,
            recenter: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalPrediction {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Number of local GP fits performed.
    pub solves: usize,
    pub clustering: Clustering,
}

/// Predicts every query with a GP fitted on the training points nearest its
/// cluster centre: one factorisation per cluster.
pub fn local_approx_predict(
    inputs: &[Vec<f64>],
    targets: &[f64],
    kernel: &Kernel,
    noise_var: f64,
    queries: &[Vec<f64>],
    cfg: &LocalApproxConfig,
) -> Result<LocalPrediction> {
    let tree = KdTree::build(inputs.to_vec())?;
    let clustering = kmeans(queries, cfg.clusters, cfg.seed)?;
    local_approx_with(
        &tree,
        targets,
        kernel,
        noise_var,
        queries,
        clustering,
        cfg.neighbors,
        cfg.recenter,
    )
}

/// As [`local_approx_predict`] with a prebuilt index and clustering.
#[allow(clippy::too_many_arguments)]
pub fn local_approx_with(
    tree: &KdTree,
    targets: &[f64],
    kernel: &Kernel,
    noise_var: f64,
    queries: &[Vec<f64>],
    clustering: Clustering,
    neighbors: usize,
    recenter: bool,
) -> Result<LocalPrediction> {
    if tree.is_empty() {
        return Err(Error::Usage(
            "local approximation needs training data".into(),
        ));
    }
    if tree.len() != targets.len() {
        return Err(Error::Data("index and targets differ in length".into()));
    }
    if neighbors == 0 || neighbors > tree.len() {
        return Err(Error::Usage(format!(
            "neighbour count {neighbors} outside 1..={}",
            tree.len()
        )));
    }
    if clustering.assignment.len() != queries.len() {
        return Err(Error::Usage("clustering does not cover the queries".into()));
    }
    let mut means = vec![0.0; queries.len()];
    let mut variances = vec![0.0; queries.len()];
    let mut solves = 0;
    for (c, members) in clustering.members().into_iter().enumerate() {
        let center = &clustering.centers[c];
        let shift = |x: &[f64]| -> Vec<f64> {
            if recenter {
                x.iter().zip(center).map(|(a, b)| a - b).collect()
            } else {
                x.to_vec()
            }
        };
        let idx = tree.nearest(center, neighbors)?;
        let xs: Vec<Vec<f64>> = idx.iter().map(|&i| shift(&tree.points()[i])).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| targets[i]).collect();
        let model = GpModel::fit(xs, ys, kernel.clone(), noise_var, InducingPolicy::Exact)?;
        solves += 1;
        if members.is_empty() {
            continue;
        }
        let q: Vec<Vec<f64>> = members.iter().map(|&i| shift(&queries[i])).collect();
        let (m, v) = model.predict_batch(&q)?;
        for (k, &i) in members.iter().enumerate() {
            means[i] = m[k];
            variances[i] = v[k];
        }
    }
    Ok(LocalPrediction {
        means,
        variances,
        solves,
        clustering,
    })
}
