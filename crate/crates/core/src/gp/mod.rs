//! Gaussian-process regression: kernels, exact and sparse posteriors,
//! marginal-likelihood training and the clustered local approximation.

pub mod attentive;
pub mod kdtree;
pub mod kernel;
pub mod kmeans;
pub mod local;
pub mod model;
pub mod train;

pub use attentive::{Attentive, FeatureNet};
pub use kdtree::KdTree;
pub use kernel::Kernel;
pub use kmeans::{kmeans, Clustering};
pub use local::{local_approx_predict, local_approx_with, LocalApproxConfig, LocalPrediction};
pub use model::{GpModel, GpSpec, InducingPolicy};
pub use train::{
    lml_and_grad, log_marginal_likelihood, train_hyperparams, train_on_sets, TrainOptions,
    TrainReport,
};
