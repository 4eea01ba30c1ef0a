//! Numerical laboratory for skew-product partially hyperbolic attractors.
//!
//! The two base maps live on `S^1 x [-1,1]^2`, expand the circle by `l`, contract `z`
//! strongly and `y` weakly. On top of them the crate computes unstable slope fields,
//! audits transversality of stable projections, builds empirical u-Gibbs measures and
//! measures their regularity at scale `r`, and clusters Birkhoff averages to count
//! physical measures.

pub mod dynamics;
pub mod error;
pub mod measures;
pub mod orbit;
pub mod params;
pub mod physical;
pub mod report;
pub mod transversality;
pub mod unstable;

pub use dynamics::{
    attractor_point, inverse_step, itinerary_of, step, step_deformed, Itinerary, Orientation,
    Point,
};
pub use error::{Error, Result};
pub use params::{validate_params, Example, MapParams, RawParams};
