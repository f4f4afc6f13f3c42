//! Streaming PCA compression for fixed-window sensor time series.
//!
//! The [`estimator`] module tracks a top-k basis block by block in
//! `O(d(k + B))` memory; [`batch_oracle`] computes the same basis from the
//! full window set; [`codec`] projects windows onto a frozen basis and
//! scores reconstructions; [`io`] reads traces and persists models and
//! compressed streams; [`bench`] holds the memory model, parameter sweeps
//! and step timing.

pub mod batch_oracle;
pub mod bench;
pub mod codec;
pub mod error;
pub mod estimator;
pub mod gaussian;
pub mod io;
pub mod linalg;

pub use batch_oracle::{batch_pca, batch_pca_windows, correlation_matrix};
pub use codec::{
    compress, expected_reconstruction_error, mean_rsnr_db, reconstruct, rsnr_db, BasisModel,
    CompressedWindow, Rsnr, RsnrSummary, SignalWindow,
};
pub use error::{HpcaError, Result};
pub use estimator::{train_hpca, HpcaConfig, HpcaState};
pub use linalg::Matrix;
