//! Configuration, execution and verification behind the `sparsevar` binary.

pub mod config;
pub mod error;
pub mod run;
pub mod verify;
