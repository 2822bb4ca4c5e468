//! Gaussian-process regression: RBF kernel, exact posterior, marginal
//! likelihood and its gradient, multi-start hyperparameter search,
//! heteroscedastic noise modeling and Gaussian-product fusion.

mod fusion;
mod hetero;
mod kernel;
mod model;
mod optimize;

pub use fusion::gaussian_product;
pub(crate) use fusion::product_1d;
pub use hetero::{fit_heteroscedastic, GpSnapshot, HeteroConfig, HeteroGpModel, HeteroSnapshot};
pub use kernel::{rbf_kernel, KernelParams};
pub use model::{GpModel, NoiseModel, PosteriorPrediction, PriorMean, TrainingSet};
pub use optimize::{optimize_hyperparameters, optimize_with_prior, Hyperparameters, OptConfig, SearchBox};

/// Fits a GP with fixed hyperparameters. See [`GpModel::fit`].
pub fn fit_gp(train: TrainingSet, params: KernelParams, noise: NoiseModel, prior: PriorMean) -> crate::Result<GpModel> {
    GpModel::fit(train, params, noise, prior)
}
