//! Nonstationary Darboux transformations for the time-dependent harmonic and
//! singular oscillators, together with the numerical machinery used to check
//! every identity the construction relies on.

pub mod catalog;
pub mod config;
pub mod darboux;
pub mod error;
pub mod jet;
pub mod models;
pub mod quad;
pub mod specfun;
pub mod trajectory;
pub mod verify;

pub use error::{Error, Result};
