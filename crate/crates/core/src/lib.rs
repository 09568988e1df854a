//! Instrumented difference-in-differences with staggered exposure.

pub mod aggregate;
pub mod bootstrap;
pub mod config;
pub mod data;
pub mod error;
pub mod latt;
pub mod nuisance;
pub mod rng;
pub mod sim;
pub mod stats;

pub use error::{IdidError, Result};
