pub mod error;
pub mod model;
pub mod phase;
pub mod simulator;
pub mod special;
pub mod variational;
pub mod verify;

pub use error::{Error, Result};
