//! Neighbour embeddings (UMAP- and t-SNE-like objectives, Laplacian
//! Eigenmaps) written as maximum-a-posteriori inference of latent
//! coordinates under a Wishart model of the kNN graph Laplacian.
//!
//! | module | contents |
//! |--------|----------|
//! | [`dataio`] | CSV loading, synthetic blobs, group resampling, embedding files |
//! | [`graph`] | exact kNN graphs, Laplacians, `(L + εI)⁻¹` |
//! | [`kernels`] | Student-t kernels, double centring, PSD checks |
//! | [`objectives`] | CNE, Bernoulli and Wishart objectives with gradients |
//! | [`optim`] | Adam with linear decay, initialisations, spectral baselines |
//! | [`diststats`] | moments and Monte Carlo checks for Gaussian squared distances |
//! | [`verify`] | numerical property suites used by the CLI and the tests |

pub mod dataio;
pub mod diststats;
pub mod error;
pub mod graph;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod objectives;
pub mod optim;
pub mod rng;
pub mod verify;

pub use dataio::{DataMatrix, Embedding};
pub use error::{Error, Result};
pub use graph::{GraphLaplacian, LaplacianVariant, NeighborGraph};
pub use objectives::{ObjectiveKind, ObjectiveSpec, ObjectiveValue, Problem};
pub use optim::{FitReport, Init, OptimizerConfig};
