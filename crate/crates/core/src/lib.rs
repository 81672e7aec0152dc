pub mod cli;
pub mod config;
pub mod decay;
pub mod error;
pub mod forcing;
pub mod geometry;
pub mod linalg;
pub mod membrane;
pub mod micro;
pub mod nonlinearity;
pub mod periodic;
pub mod two_scale;

pub use error::{Error, Result};
