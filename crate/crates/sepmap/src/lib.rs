//! Positive-map separability criteria for bipartite quantum states:
//! weak-majorization relations, entropic inequalities, positive-map
//! decompositions, and detection-fraction scans.

pub mod criteria;
pub mod error;
pub mod io;
pub mod majorization;
pub mod maps;
pub mod matrix;
pub mod states;

pub use error::{Result, SepmapError};
