//! Bayesian estimation of wall thermal resistance and heat capacity from in-situ
//! temperature and heat-flux monitoring.

pub mod design;
pub mod error;
pub mod forward;
pub mod inference;
pub mod io;
pub mod likelihood;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod robustness;
pub mod synthetic;

pub use error::{Error, Result};
