//! Synthetic labeled V2V channel datasets.

mod config;
mod dataset;
mod pdp;
mod simulate;
pub mod store;

pub use config::{Category, ScenarioConfig, SPEED_OF_LIGHT};
pub use dataset::{build_dataset, standard_scenarios, DatasetPlan, Preset, ChannelDataset, Domain, Manifest, Normalization, FORMAT_VERSION};
pub use pdp::{db_to_linear, linear_to_db, Grid, Pdp};
pub use simulate::simulate_dynamic_channel;
