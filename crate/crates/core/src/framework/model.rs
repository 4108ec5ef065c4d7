use serde::{Deserialize, Serialize};

use super::belief_map::GridBelief;
use super::config::{KernelChoice, TerrainGpSettings};
use crate::error::Result;
use crate::geometry::Point2;
use crate::gp::{
    kmeans, local_approx_with, train_on_sets, Attentive, Clustering, GpModel, InducingPolicy,
    KdTree, Kernel, TrainReport,
};
use crate::terrain::{Bounds, TerrainSample};

/// A local training set: inputs relative to the patch centre, and targets.
type Patch = (Vec<Vec<f64>>, Vec<f64>);

/// Outcome of one hyperparameter refit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitSummary {
    pub initial_lml: f64,
    pub final_lml: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl From<&TrainReport> for RefitSummary {
    fn from(r: &TrainReport) -> Self {
        Self {
            initial_lml: r.initial_lml,
            final_lml: r.final_lml,
            iterations: r.iterations,
            converged: r.converged,
        }
    }
}

/// Terrain GP over planar positions. RBF and attentive kernels use the
/// sparse posterior; the NN kernel uses the clustered local approximation
/// over a fixed query lattice.
pub struct TerrainModel {
    choice: KernelChoice,
    kernel: Kernel,
    settings: TerrainGpSettings,
    bounds: Bounds,
    cols: usize,
    rows: usize,
    nodes: Vec<Vec<f64>>,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    fitted: Option<GpModel>,
    clustering: Option<Clustering>,
    snapshots: usize,
}

impl TerrainModel {
    /// Lattice `cols x rows` over `bounds` is where snapshots are evaluated.
    pub fn new(
        choice: KernelChoice,
        settings: TerrainGpSettings,
        bounds: Bounds,
        cols: usize,
        rows: usize,
        seed: u64,
    ) -> Result<Self> {
        let nodes: Vec<Vec<f64>> = GridBelief::node_positions(&bounds, cols, rows)
            .into_iter()
            .map(|p| vec![p.x, p.y])
            .collect();
        let kernel = match choice {
            KernelChoice::Rbf => Kernel::rbf(0.01, 1.0),
            KernelChoice::Nn => Kernel::neural_net(0.01, 1.0, vec![1.0, 1.0]),
            KernelChoice::Attentive => {
                let centre = vec![
                    bounds.min[0] + 0.5 * bounds.width(),
                    bounds.min[1] + 0.5 * bounds.height(),
                ];
                let scale = 0.5 * bounds.width().max(bounds.height());
                let mut a = Attentive::new(
                    2,
                    settings.ak_bases,
                    settings.ak_lengthscales,
                    settings.ak_hidden,
                    centre,
                    scale,
                    seed,
                )?;
                a.amplitude = 0.01;
                Kernel::Attentive(a)
            }
        };
        kernel.validate()?;
        let clustering = match choice {
            KernelChoice::Nn => Some(kmeans(
                &nodes,
                settings.local.clusters.min(nodes.len()),
                settings.local.seed,
            )?),
            _ => None,
        };
        Ok(Self {
            choice,
            kernel,
            settings,
            bounds,
            cols,
            rows,
            nodes,
            inputs: Vec::new(),
            targets: Vec::new(),
            fitted: None,
            clustering,
            snapshots: 0,
        })
    }

    pub fn choice(&self) -> KernelChoice {
        self.choice
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn add(&mut self, samples: &[TerrainSample]) {
        for s in samples {
            self.inputs.push(vec![s.location.x, s.location.y]);
            self.targets.push(s.elevation);
        }
    }

    /// Sets the signal variance from the data spread; used once before the first refit.
    pub fn scale_to_data(&mut self) {
        let n = self.targets.len();
        if n < 2 {
            return;
        }
        let mean = self.targets.iter().sum::<f64>() / n as f64;
        let var =
            (self.targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64).max(1e-6);
        match &mut self.kernel {
            Kernel::Rbf { signal_var, .. } => *signal_var = var,
            Kernel::NeuralNet { signal_var, .. } => *signal_var = var,
            Kernel::Attentive(a) => a.amplitude = var,
        }
    }

    /// Conditions on all collected data with the current hyperparameters.
    pub fn condition(&mut self) -> Result<()> {
        if self.choice != KernelChoice::Nn {
            self.fitted = Some(GpModel::fit(
                self.inputs.clone(),
                self.targets.clone(),
                self.kernel.clone(),
                self.settings.noise_var,
                InducingPolicy::Strided(self.settings.inducing),
            )?);
        }
        Ok(())
    }

    /// Refits hyperparameters by marginal likelihood, then re-conditions.
    pub fn refit(&mut self) -> Result<RefitSummary> {
        let report = if self.choice == KernelChoice::Nn {
            let sets = self.nn_patches()?;
            train_on_sets(
                &self.kernel,
                self.settings.noise_var,
                &sets,
                &self.settings.train,
            )?
        } else {
            let n = self.len();
            let cap = self.settings.train.max_points.max(5).min(n);
            let set = (0..cap)
                .map(|k| {
                    let i = k * n / cap;
                    (self.inputs[i].clone(), self.targets[i])
                })
                .unzip();
            train_on_sets(
                &self.kernel,
                self.settings.noise_var,
                &[set],
                &self.settings.train,
            )?
        };
        self.kernel = report.kernel.clone();
        self.condition()?;
        Ok(RefitSummary::from(&report))
    }

    /// Neighbourhoods of the data around evenly spread cluster centres,
    /// expressed relative to their centre.
    fn nn_patches(&self) -> Result<Vec<Patch>> {
        let tree = KdTree::build(self.inputs.clone())?;
        let clustering = self.clustering.as_ref().expect("nn model has a clustering");
        let k = clustering.k();
        let count = self.settings.nn_train_patches.clamp(1, k);
        let n = self.settings.local.neighbors.min(self.len());
        (0..count)
            .map(|p| {
                let centre = &clustering.centers[(2 * p + 1) * k / (2 * count)];
                let idx = tree.nearest(centre, n)?;
                let xs = idx
                    .iter()
                    .map(|&i| {
                        self.inputs[i]
                            .iter()
                            .zip(centre)
                            .map(|(a, c)| a - c)
                            .collect()
                    })
                    .collect();
                let ys = idx.iter().map(|&i| self.targets[i]).collect();
                Ok((xs, ys))
            })
            .collect()
    }

    /// Posterior mean and variance at arbitrary points.
    pub fn predict(&self, points: &[Point2]) -> Result<(Vec<f64>, Vec<f64>)> {
        let qs: Vec<Vec<f64>> = points.iter().map(|p| vec![p.x, p.y]).collect();
        match self.choice {
            KernelChoice::Nn => {
                let base = self.clustering.as_ref().expect("nn model has a clustering");
                let assignment = qs
                    .iter()
                    .map(|q| {
                        (0..base.k())
                            .min_by(|&a, &b| {
                                sq(&base.centers[a], q).total_cmp(&sq(&base.centers[b], q))
                            })
                            .expect("clusters exist")
                    })
                    .collect();
                self.local_predict(
                    &qs,
                    Clustering {
                        centers: base.centers.clone(),
                        assignment,
                        iterations: 0,
                    },
                )
            }
            _ => self.sparse_predict(&qs),
        }
    }

    fn sparse_predict(&self, qs: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
        match &self.fitted {
            Some(gp) => gp.predict_batch(qs),
            None => {
                let prior = GpModel::fit(
                    Vec::new(),
                    Vec::new(),
                    self.kernel.clone(),
                    self.settings.noise_var,
                    InducingPolicy::Exact,
                )?;
                prior.predict_batch(qs)
            }
        }
    }

    fn local_predict(
        &self,
        qs: &[Vec<f64>],
        clustering: Clustering,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.is_empty() {
            let var = qs.iter().map(|q| self.kernel.diag(q)).collect();
            return Ok((vec![0.0; qs.len()], var));
        }
        let tree = KdTree::build(self.inputs.clone())?;
        let neighbors = self.settings.local.neighbors.min(self.len());
        let out = local_approx_with(
            &tree,
            &self.targets,
            &self.kernel,
            self.settings.noise_var,
            qs,
            clustering,
            neighbors,
            self.settings.local.recenter,
        )?;
        Ok((out.means, out.variances))
    }

    /// Posterior on the lattice, tagged with a fresh id.
    pub fn snapshot(&mut self) -> Result<GridBelief> {
        let (mean, variance) = match self.choice {
            KernelChoice::Nn => {
                let c = self.clustering.clone().expect("nn model has a clustering");
                self.local_predict(&self.nodes, c)?
            }
            _ => self.sparse_predict(&self.nodes)?,
        };
        let id = self.snapshots;
        self.snapshots += 1;
        Ok(GridBelief {
            id,
            bounds: self.bounds,
            cols: self.cols,
            rows: self.rows,
            mean,
            variance,
        })
    }
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}
