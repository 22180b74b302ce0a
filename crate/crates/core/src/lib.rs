//! Compressed-domain density estimation: an autoencoder maps data into the
//! unit hypercube while a rank-F CPD model of the truncated Fourier
//! coefficient tensor learns the latent density. Both are trained jointly by
//! projected stochastic gradient descent; the result supports sampling,
//! imputation and anomaly detection.

pub mod data;
pub mod density;
pub mod error;
pub mod linalg;
pub mod model_io;
pub mod net;
pub mod optim;
pub mod rng;
pub mod sampler;
pub mod tasks;
pub mod train;

pub use data::Dataset;
pub use density::{project_simplex, DensityParams, NllGradient};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use model_io::ModelFile;
pub use net::{Activation, LayerSpec, NetworkParams};
pub use optim::AdamState;
pub use sampler::GridCdf;
pub use tasks::{AnomalyResult, ImputeConfig};
pub use train::{TrainConfig, TrainReport};
