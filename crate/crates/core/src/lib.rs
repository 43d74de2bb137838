//! Concentration analysis in BV and Lorentz spaces on dyadic grids.
//!
//! Grid functions ([`grid`]) and radial step functions ([`radial`]) feed the
//! rearrangement and Lorentz machinery ([`rearrange`]), discrete total
//! variation ([`bv`]), the dilation-translation group ([`group`]), the
//! truncation layers ([`layers`]), the staircase experiment
//! ([`counterexample`]) and greedy profile extraction ([`profiles`]).

pub mod audit;
pub mod bv;
pub mod corpus;
pub mod counterexample;
pub mod error;
pub mod grid;
pub mod io;
pub mod group;
pub mod layers;
pub mod multiscale;
pub mod norms;
pub mod profiles;
pub mod radial;
pub mod rearrange;

pub use error::{Error, Result};
pub use grid::{CellBox, GridFunction, Region};
pub use group::{DyadicVec, GroupElement};
pub use multiscale::DyadicSum;
pub use radial::RadialStep;
pub use rearrange::{LorentzIndex, StepFunction};
