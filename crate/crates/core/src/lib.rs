//! Room CO2 dynamics as a transport PDE coupled to a human-source ODE, with a
//! boundary observer for the unmeasured source and swapping identifiers for
//! the model coefficients.

pub mod error;
pub mod identifiers;
pub mod model;
pub mod numerics;
pub mod observer;
pub mod scenario;

pub use error::{Error, Result};
pub use model::ModelParams;
pub use numerics::Grid;
