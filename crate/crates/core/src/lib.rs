pub mod error;
pub mod geometry;
pub mod ingest;
pub mod matching;
pub mod rng;

pub use error::{Error, GeometryError, Result};
pub mod scot;
pub mod raster;
pub mod trackers;
pub mod synth;
pub mod analysis;
