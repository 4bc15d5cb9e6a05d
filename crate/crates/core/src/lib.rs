#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` rejects NaN on purpose
//! Basin-of-attraction mapping for network dynamical systems.
//!
//! Initial conditions on a 2-D slice are integrated, each trajectory is
//! fingerprinted by its pairwise lag/alignment-cost vector, the fingerprints
//! are clustered into candidate attractors, and the resulting label map is
//! measured for boundary fractality.

pub mod basinmap;
pub mod config;
pub mod dynsys;
pub mod error;
pub mod fractal;
pub mod integrate;
pub mod netgraph;
pub mod pipeline;
pub mod render;
pub mod util;
pub mod vps;

pub use error::{Error, Result};
