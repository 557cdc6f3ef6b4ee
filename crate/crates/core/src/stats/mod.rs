//! Channel statistics: temporal PDP correlation, stationarity intervals,
//! delay spread, multipath count, path loss, shadow fading and FID.

mod delay;
mod fid;
mod summary;
mod tpcc;

pub use delay::{multipath_count, path_loss, rmsds, shadow_fading};
pub use fid::{fid, fid_scalar};
pub use summary::{
    channel_stats, stats_summary, summary_table_csv, CategoryStats, ChannelFeatures, ChannelStats, Feature,
    StatsConfig, StatsSummary, WSS_THRESHOLD,
};
pub use tpcc::{
    linear_for_correlation, los_guard, tpcc, tpcc_matrix, tpcc_matrix_linear, wss_interval, wss_intervals,
    wss_intervals_from_matrix, wss_regions_from_matrix, WssConvention,
};
