//! Sampling pair-interaction Gibbs measures on `{-1, +1}^n` with a
//! probabilistic cellular automaton (all sites updated at once), together
//! with exact enumeration oracles, Dobrushin-type bounds and an exact
//! Curie-Weiss analysis.

pub mod error;
pub mod exact;
pub mod generators;
pub mod linalg;
pub mod model;
pub mod numeric;
pub mod output;
pub mod rng;
pub mod bounds;
pub mod curie_weiss;
pub mod samplers;

pub use error::{Error, Result};
pub use model::{Convention, CouplingModel, Inertia, Measure, SpinConfiguration};
