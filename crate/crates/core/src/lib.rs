//! Synthetic non-stationary V2V channel datasets, a label-conditioned
//! recurrent GAN that learns to generate them, and the statistics used to
//! compare generated channels with simulated ones.

pub mod error;
pub mod evalreport;
pub mod losses;
pub mod model;
pub mod nn;
pub mod preprocess;
pub mod real;
pub mod simkit;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
pub use simkit::{Category, ChannelDataset, Pdp, ScenarioConfig};
