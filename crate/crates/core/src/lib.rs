//! Objectivity of thermal states: Gibbs states, spectrum broadcast structure
//! certification, partial-thermalization qubit channels and bounds on the
//! distance of thermal states from objective ones.

pub mod bounds;
pub mod channels;
pub mod error;
pub mod experiments;
pub mod gibbs;
pub mod io;
pub mod operator;
pub mod oracle;
pub mod random;
pub mod sbs;

pub use error::{Error, Result};
