pub mod cooc;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod numeric;
pub mod pipeline;
pub mod sparse;
pub mod synth;
pub mod theory;
pub mod train;
pub mod viz;

pub use error::{Error, Result};
