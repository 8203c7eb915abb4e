//! Conformable fractional calculus, evolution operators of non-autonomous
//! linear systems, mild solutions of semilinear conformable systems and
//! exact null control synthesis.
//!
//! Time is handled in the substituted coordinate `τ = t^α / α`, under which
//! the conformable derivative becomes `d/dτ` and the measure `d(t, α)`
//! becomes `dτ`.

pub mod calculus;
pub mod config;
pub mod control;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod io;
pub mod mild;
pub mod scenario;
pub mod specfun;

pub use error::{Error, Result};
pub use grid::{FractionalOrder, GridFunction, TimeGrid};
