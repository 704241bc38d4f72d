//! Knowledge-graph completion with complex-valued embeddings.
//!
//! The crate trains and evaluates the ComplEx factorization model and
//! its standard baselines (DistMult, CP, TransE, RESCAL) on triple data,
//! and ships a spectral lab that checks the normal-matrix constructions
//! underpinning the model on concrete matrices.
//!
//! Modules:
//! - [`data`]: TSV ingestion, vocabularies, fold splitting, the
//!   synthetic symmetric/antisymmetric task
//! - [`params`]: parameter storage, initialization, model files
//! - [`scoring`]: scores and analytic gradients for all model kinds
//! - [`training`]: losses, negative sampling, SGD with AdaGrad
//! - [`eval`]: raw/filtered MRR, Hits@N, average precision
//! - [`spectral`]: normal lifting, unitary diagonalization, rank bounds
//! - [`pca`]: principal-component export of relation embeddings

pub mod cli;
pub mod data;
pub mod dense;
pub mod error;
pub mod eval;
pub mod params;
pub mod pca;
pub mod scoring;
pub mod spectral;
pub mod training;

pub use error::{KgError, Result};
