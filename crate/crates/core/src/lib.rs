pub mod baseline;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod multiblock;
pub mod ota_sim;
pub mod params_io;
pub mod precoder;
pub mod prototype_net;
pub mod training;

pub use error::{Error, Result};
