pub mod benchmark;
pub mod cli;
pub mod court_detection;
pub mod error;
pub mod geometry;
pub mod hit_segmentation;
pub mod io;
pub mod optim;
pub mod physics;
pub mod reconstruction;

pub use error::{Error, Result};
