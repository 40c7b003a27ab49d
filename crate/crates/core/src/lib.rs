//! Urban parcel delineation and characterization.
//!
//! Parcels are cut out of a study area by buffering a cleaned road network,
//! points of interest give each parcel a density, a dominant function and a
//! land-use mix, and a constrained vector cellular automaton picks the urban
//! parcels of every city until its built-up area budget is met.

pub mod ca;
pub mod delineation;
pub mod error;
pub mod geom;
pub mod io;
pub mod pipeline;
pub mod poi;
pub mod projection;
pub mod synthetic;
pub mod validation;

pub use error::{Error, Result};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/delineation.md")]
    mod delineation {}
    #[doc = include_str!("../../../book/src/characterization.md")]
    mod characterization {}
    #[doc = include_str!("../../../book/src/automaton.md")]
    mod automaton {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/validation.md")]
    mod validation {}
    #[doc = include_str!("../../../book/src/batch.md")]
    mod batch {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
