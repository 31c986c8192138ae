//! Sparse principal component analysis.
//!
//! The central method, [`eespca_first_pc`], estimates sparse loadings from
//! the eigenvalues of the covariance matrix and of its leave-one-variable-out
//! submatrices. Comparison methods ([`spc_first_pc`], [`tpower_first_pc`],
//! [`rifle_first_pc`]) take a sparsity parameter that [`cv_select`] chooses by
//! cross-validation. The [`simulation`] module runs the block-covariance
//! benchmark study.
//!
//! ```
//! use sparsepc::{eespca_first_pc, simulation::block_covariance, PowerOptions};
//!
//! let sigma = block_covariance(10, 4, 0.5).unwrap();
//! let pc = eespca_first_pc(&sigma, &PowerOptions::default()).unwrap();
//! assert_eq!(pc.support, vec![0, 1, 2, 3]);
//! ```

pub mod baselines;
pub mod component;
pub mod eespca;
pub mod eevi;
pub mod error;
pub mod linalg;
pub mod model_selection;
pub mod simulation;

pub use baselines::{
    multi_pc, pca_first_pc, rifle_first_pc, spc_first_pc, tpower_first_pc, truncate_k, CardinalityParams,
    FirstPcFit, SpcParams,
};
pub use component::{Method, SparseComponent};
pub use eespca::{deflate_components, eespca_first_pc, eespca_first_pc_detailed, eespca_multi, reconstruction_error, EespcaDetails};
pub use eevi::{approx_squared_loadings, exact_identity_squared_loadings, loading_ratios};
pub use error::{Error, Result};
pub use linalg::{
    exact_symmetric_eigen, mean_center, power_iteration, sample_covariance, DataMatrix, EigenPair, PowerOptions,
    SymMatrix,
};
pub use model_selection::{cv_select, make_folds, CvGrid, CvMethod, CvResult, GridKind};
