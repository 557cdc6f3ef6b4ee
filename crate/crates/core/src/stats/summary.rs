use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::delay::{multipath_count, path_loss, rmsds, shadow_fading};
use super::tpcc::{wss_interval, WssConvention};
use crate::error::{Error, Result};
use crate::simkit::{db_to_linear, Category, ChannelDataset, Domain, Pdp};

pub const WSS_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    WssInterval,
    Rmsds,
    MultipathCount,
    ShadowFading,
    PathLoss,
}

impl Feature {
    pub const ALL: [Feature; 5] = [
        Feature::WssInterval,
        Feature::Rmsds,
        Feature::MultipathCount,
        Feature::ShadowFading,
        Feature::PathLoss,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Feature::WssInterval => "wss_interval_s",
            Feature::Rmsds => "rmsds_ns",
            Feature::MultipathCount => "multipath_count",
            Feature::ShadowFading => "shadow_fading_db",
            Feature::PathLoss => "path_loss_db",
        }
    }
}

/// Per-channel statistics; the feature vector used for FID.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelFeatures {
    pub wss_interval_s: f64,
    pub rmsds_ns: f64,
    pub multipath_count: f64,
    pub shadow_fading_db: f64,
    pub path_loss_db: f64,
}

impl ChannelFeatures {
    pub fn get(&self, f: Feature) -> f64 {
        match f {
            Feature::WssInterval => self.wss_interval_s,
            Feature::Rmsds => self.rmsds_ns,
            Feature::MultipathCount => self.multipath_count,
            Feature::ShadowFading => self.shadow_fading_db,
            Feature::PathLoss => self.path_loss_db,
        }
    }

    pub fn to_array(&self) -> [f64; 5] {
        Feature::ALL.map(|f| self.get(f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsConfig {
    pub wss_threshold: f64,
    pub wss_convention: WssConvention,
    /// Overrides the dataset's own noise floor when set.
    pub noise_floor_db: Option<f64>,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            wss_threshold: WSS_THRESHOLD,
            wss_convention: WssConvention::FirstCrossingMean,
            noise_floor_db: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub n_channels: usize,
    pub means: ChannelFeatures,
    pub channels: Vec<ChannelFeatures>,
    /// Per-snapshot values pooled over channels, for distribution plots.
    pub snapshot_rmsds_ns: Vec<f64>,
    pub snapshot_multipath_count: Vec<f64>,
}

impl CategoryStats {
    pub fn feature_column(&self, f: Feature) -> Vec<f64> {
        self.channels.iter().map(|c| c.get(f)).collect()
    }

    pub fn feature_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.channels.len(), 5), |(i, k)| self.channels[i].get(Feature::ALL[k]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub config: StatsConfig,
    pub noise_floor_db: f64,
    pub categories: BTreeMap<Category, CategoryStats>,
}

impl StatsSummary {
    pub fn category(&self, c: Category) -> Result<&CategoryStats> {
        self.categories.get(&c).ok_or_else(|| Error::EmptyCategory(c.to_string()))
    }
}

/// Statistics of one channel, excluding shadow fading which needs the group.
#[derive(Debug, Clone)]
pub struct ChannelStats {
    pub wss_interval_s: f64,
    pub snapshot_rmsds_ns: Vec<f64>,
    pub snapshot_multipath_count: Vec<f64>,
    pub path_loss_db: f64,
}

pub fn channel_stats(channel: &Pdp, noise_floor_db: f64, config: &StatsConfig) -> Result<ChannelStats> {
    let lin = channel.power_db.mapv(db_to_linear);
    let delays = &channel.grid.delay_ns;
    let mut snapshot_rmsds_ns = Vec::with_capacity(lin.nrows());
    let mut snapshot_multipath_count = Vec::with_capacity(lin.nrows());
    let mut losses = Vec::with_capacity(lin.nrows());
    for row in lin.rows() {
        let row = row.as_slice().expect("row-major snapshot");
        snapshot_multipath_count.push(multipath_count(row, noise_floor_db) as f64);
        // empty snapshots carry no spread and no path loss; skip them
        if let Ok(s) = rmsds(row, delays, noise_floor_db) {
            snapshot_rmsds_ns.push(s);
        }
        if let Ok(pl) = path_loss(row, noise_floor_db) {
            losses.push(pl);
        }
    }
    if losses.is_empty() {
        return Err(Error::ZeroPower);
    }
    Ok(ChannelStats {
        wss_interval_s: wss_interval(channel, config.wss_threshold, config.wss_convention)?,
        snapshot_rmsds_ns,
        snapshot_multipath_count,
        path_loss_db: mean(&losses),
    })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn stats_summary(ds: &ChannelDataset, config: &StatsConfig) -> Result<StatsSummary> {
    if ds.is_empty() {
        return Err(Error::Degenerate("empty dataset".into()));
    }
    if ds.manifest.domain != Domain::PowerDb {
        return Err(Error::InvalidConfig("statistics need a dataset in dB".into()));
    }
    let floor = config.noise_floor_db.unwrap_or(ds.manifest.noise_floor_db);
    let mut categories = BTreeMap::new();
    for (category, indices) in ds.indices_by_category() {
        let per_channel = indices
            .iter()
            .map(|&i| channel_stats(&ds.channels[i], floor, config))
            .collect::<Result<Vec<_>>>()?;
        let pl: Vec<f64> = per_channel.iter().map(|c| c.path_loss_db).collect();
        let sf = shadow_fading(&pl);
        let channels: Vec<ChannelFeatures> = per_channel
            .iter()
            .zip(&sf)
            .map(|(c, &sf)| ChannelFeatures {
                wss_interval_s: c.wss_interval_s,
                rmsds_ns: mean(&c.snapshot_rmsds_ns),
                multipath_count: mean(&c.snapshot_multipath_count),
                shadow_fading_db: sf,
                path_loss_db: c.path_loss_db,
            })
            .collect();
        let avg = |f: Feature| mean(&channels.iter().map(|c| c.get(f)).collect::<Vec<_>>());
        let means = ChannelFeatures {
            wss_interval_s: avg(Feature::WssInterval),
            rmsds_ns: avg(Feature::Rmsds),
            multipath_count: avg(Feature::MultipathCount),
            shadow_fading_db: avg(Feature::ShadowFading),
            path_loss_db: avg(Feature::PathLoss),
        };
        categories.insert(
            category,
            CategoryStats {
                n_channels: channels.len(),
                means,
                channels,
                snapshot_rmsds_ns: per_channel.iter().flat_map(|c| c.snapshot_rmsds_ns.iter().copied()).collect(),
                snapshot_multipath_count: per_channel
                    .iter()
                    .flat_map(|c| c.snapshot_multipath_count.iter().copied())
                    .collect(),
            },
        );
    }
    Ok(StatsSummary {
        config: *config,
        noise_floor_db: floor,
        categories,
    })
}

/// Table with one row per statistic and one column per `(name, category)`.
pub fn summary_table_csv(columns: &[(&str, &StatsSummary)]) -> String {
    let mut out = String::from("statistic");
    let mut cols = Vec::new();
    for category in Category::ALL {
        for (name, summary) in columns {
            if let Some(stats) = summary.categories.get(&category) {
                let _ = write!(out, ",{category}/{name}");
                cols.push(stats);
            }
        }
    }
    out.push('\n');
    for f in Feature::ALL {
        out.push_str(f.key());
        for stats in &cols {
            let _ = write!(out, ",{:.6}", stats.means.get(f));
        }
        out.push('\n');
    }
    out.push_str("n_channels");
    for stats in &cols {
        let _ = write!(out, ",{}", stats.n_channels);
    }
    out.push('\n');
    out
}
