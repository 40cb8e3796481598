//! Autoregressive Gaussian-mixture density estimation with
//! Knothe-Rosenblatt transport for unsupervised domain adaptation.
//!
//! The pipeline, end to end:
//!
//! 1. [`train::fit_joint`] fits one autoregressive mixture-density model
//!    per domain (source and target) with a shared backbone, by maximum
//!    likelihood.
//! 2. [`transport::transfer_dataset`] pushes every source sample into the
//!    target domain, component by component, preserving each conditional
//!    quantile under the two estimated densities.
//! 3. [`svm`] trains a kernel classifier on the transferred, labelled
//!    source samples; held-out target samples are evaluated directly.
//!
//! [`mixture`] holds the exact one-dimensional probability calculus the
//! other modules build on, and [`data`] the dataset plumbing (generators,
//! CSV, standardization).

pub mod data;
pub mod error;
pub mod mixture;
pub mod model;
pub mod pipeline;
pub mod stats;
pub mod svm;
pub mod train;
pub mod transport;

pub use data::{Dataset, GmmSpec, MoonsSpec, Standardizer};
pub use svm::SvmModel;
pub use train::{EpochMetrics, TrainConfig};
pub use transport::TransferReport;
pub use error::KrdaError;
pub use mixture::GaussianMixture1D;
pub use model::{Backbone, Domain, DomainHead, KrdaModel};



