//! Regularized VAR coefficient estimators and the modification pipeline.

pub mod dantzig;
pub mod lasso;
pub mod lp;
mod pipeline;

pub use lasso::Moments;
pub use pipeline::{
    adaptive_weights, back_transform, fit, standardize, EstimatorConfig, Method, Modifications,
    Provenance, Standardized, VarEstimate,
};
