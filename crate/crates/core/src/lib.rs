pub mod artifact;
pub mod chaos;
pub mod coeffs;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod lattice;
pub mod manifold;
pub mod rng;
pub mod sampler;
pub mod special;

pub use error::{Error, Result};
pub use manifold::Manifold;
