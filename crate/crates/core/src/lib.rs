//! Squeezed-light image sensing: photon-budget datasets, PCA sensing bases,
//! the Gaussian measurement-noise model, an RBF SVM and reconstruction
//! metrics, plus a sweep harness tying them together.

pub mod dataset;
pub mod error;
pub mod harness;
pub mod io;
pub mod pca;
pub mod quantum;
pub mod recon;
pub mod svm;

pub use error::{Error, Result};
