//! Transport-based generalization bounds for graph node classifiers.
//!
//! The math core is generic over [`Real`] (`f32` or `f64`); the `*64` aliases
//! below fix it to `f64`, which is what the harness and CLI use.

pub mod bounds;
pub mod checkpoint;
pub mod classifier;
pub mod encoders;
pub mod error;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod optim;
pub mod ot;
pub mod scalar;
mod serde_float;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Graph64 = graph::Graph<f64>;
pub type SparseMatrix64 = graph::SparseMatrix<f64>;
pub type Embeddings64 = encoders::Embeddings<f64>;
pub type GcnModel64 = encoders::GcnModel<f64>;
pub type MlpClassifier64 = classifier::MlpClassifier<f64>;
