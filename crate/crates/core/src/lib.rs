//! Sparse high-dimensional vector autoregressions: Lasso and Dantzig-type
//! estimators, thresholding, innovation covariance estimation, exact and
//! estimated second-order quantities, and a seeded Monte-Carlo harness.

pub mod covariance;
pub mod error;
pub mod estimators;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod simlab;
pub mod spectral;
pub mod thresholding;
pub mod tuning;

pub use error::{Result, VarError};
pub use model::{SampleDesign, TimeSeries, VarModel};
