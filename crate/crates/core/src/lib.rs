//! Transversal-mode simulation of a nested Mach-Zehnder interferometer with
//! vibrating mirrors, an optional Dove prism, far-field quad-cell detection
//! and a two-state-vector presence analysis.

pub mod detection;
pub mod elements;
pub mod error;
pub mod field;
pub mod network;
pub mod scenario;
pub mod weak_trace;

pub use error::{Error, Result};
