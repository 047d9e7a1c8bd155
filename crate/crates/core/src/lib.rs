//! Mining contextual variables from customer dialogue transcripts, expert
//! curation of the mined clusters, and long-tail evaluation of propensity
//! models that use them.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which every pipeline stage uses.

pub mod clustering;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod lexicon;
pub mod linalg;
pub mod models;
pub mod occurrence;
pub mod pca;
pub mod registry;
pub mod phrasing;
pub mod pipeline;
pub mod scalar;
pub mod synthgen;
pub mod text;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = linalg::Matrix<f64>;
pub type DistanceMatrix = clustering::DistanceMatrix<f64>;
pub type Dendrogram = clustering::Dendrogram<f64>;
pub type Pca = pca::PcaModel<f64>;
pub type FeatureSet = models::FeatureSet<f64>;
pub type PropensityModel = models::PropensityModel<f64>;
pub type LogReg = models::LogReg<f64>;
pub type Fm = models::Fm<f64>;
pub type Gbdt = models::Gbdt<f64>;
pub type Forest = models::Forest<f64>;
