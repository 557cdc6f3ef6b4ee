use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::Array2;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Category, ScenarioConfig};
use super::pdp::{Grid, Pdp};
use super::simulate::simulate_dynamic_channel;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Received power in dB.
    PowerDb,
    /// Masked and scaled to [-1, 1] with the recorded bounds.
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub p_min_db: f64,
    pub p_max_db: f64,
    pub threshold_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    /// `[N, T, D]`
    pub shape: [usize; 3],
    pub domain: Domain,
    pub noise_floor_db: f64,
    pub grid: Grid,
    pub labels: Vec<Category>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub master_seed: Option<u64>,
    #[serde(default)]
    pub normalization: Option<Normalization>,
    #[serde(default)]
    pub scenarios: Vec<ScenarioConfig>,
    #[serde(default)]
    pub source: String,
}

impl Manifest {
    pub fn empty(grid: Grid, noise_floor_db: f64, source: impl Into<String>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            shape: [0, grid.n_snapshots(), grid.n_delay_bins()],
            domain: Domain::PowerDb,
            noise_floor_db,
            grid,
            labels: Vec::new(),
            seeds: Vec::new(),
            master_seed: None,
            normalization: None,
            scenarios: Vec::new(),
            source: source.into(),
        }
    }
}

/// Labeled dynamic channels sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDataset {
    pub channels: Vec<Pdp>,
    /// Validity masks, present once the dataset has been preprocessed.
    pub masks: Option<Vec<Array2<bool>>>,
    pub manifest: Manifest,
}

impl ChannelDataset {
    /// Builds a dataset and syncs `shape` and `labels` in the manifest with
    /// the channels. Per-channel seeds are kept if they line up, else zeroed.
    pub fn new(channels: Vec<Pdp>, mut manifest: Manifest) -> Result<Self> {
        let t = manifest.grid.n_snapshots();
        let d = manifest.grid.n_delay_bins();
        for (k, ch) in channels.iter().enumerate() {
            if ch.power_db.dim() != (t, d) {
                return Err(Error::shape(&[t, d], &[ch.power_db.nrows(), ch.power_db.ncols()]));
            }
            if *ch.grid != manifest.grid {
                return Err(Error::GridMismatch("manifest".into(), format!("channel {k}")));
            }
        }
        manifest.shape = [channels.len(), t, d];
        manifest.labels = channels.iter().map(|c| c.label).collect();
        if manifest.seeds.len() != channels.len() {
            manifest.seeds = vec![0; channels.len()];
        }
        Ok(Self {
            channels,
            masks: None,
            manifest,
        })
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn shape(&self) -> [usize; 3] {
        self.manifest.shape
    }

    pub fn grid(&self) -> &Grid {
        &self.manifest.grid
    }

    pub fn shared_grid(&self) -> Arc<Grid> {
        self.channels
            .first()
            .map(|c| Arc::clone(&c.grid))
            .unwrap_or_else(|| Arc::new(self.manifest.grid.clone()))
    }

    pub fn categories(&self) -> Vec<Category> {
        let mut cats: Vec<_> = self.channels.iter().map(|c| c.label).collect();
        cats.sort();
        cats.dedup();
        cats
    }

    /// Channel indices grouped by label, in dataset order.
    pub fn indices_by_category(&self) -> BTreeMap<Category, Vec<usize>> {
        let mut out: BTreeMap<Category, Vec<usize>> = BTreeMap::new();
        for (i, c) in self.channels.iter().enumerate() {
            out.entry(c.label).or_default().push(i);
        }
        out
    }

    /// Channels of one label as a standalone dataset.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let channels = indices.iter().map(|&i| self.channels[i].clone()).collect();
        let mut manifest = self.manifest.clone();
        manifest.seeds = indices.iter().map(|&i| self.manifest.seeds[i]).collect();
        let mut out = Self::new(channels, manifest)?;
        out.masks = self
            .masks
            .as_ref()
            .map(|m| indices.iter().map(|&i| m[i].clone()).collect());
        Ok(out)
    }
}

/// Simulates `n_per_config` channels for every scenario and concatenates
/// them. Per-channel seeds are drawn from `master_seed` in order.
pub fn build_dataset(configs: &[ScenarioConfig], n_per_config: usize, master_seed: u64) -> Result<ChannelDataset> {
    let first = configs
        .first()
        .ok_or_else(|| Error::InvalidConfig("at least one scenario config is required".into()))?;
    if n_per_config == 0 {
        return Err(Error::InvalidConfig("n_per_config must be at least 1".into()));
    }
    for cfg in configs {
        cfg.validate()?;
    }
    let grid = Grid::from_config(first);
    for (k, cfg) in configs.iter().enumerate().skip(1) {
        if Grid::from_config(cfg) != grid || cfg.noise_floor_db != first.noise_floor_db {
            return Err(Error::GridMismatch("config 0".into(), format!("config {k}")));
        }
    }

    let shared = Arc::new(grid.clone());
    let mut seeder = ChaCha8Rng::seed_from_u64(master_seed);
    let mut channels = Vec::with_capacity(configs.len() * n_per_config);
    let mut seeds = Vec::with_capacity(channels.capacity());
    for cfg in configs {
        for _ in 0..n_per_config {
            let seed = seeder.next_u64();
            let run = ScenarioConfig {
                rng_seed: seed,
                ..cfg.clone()
            };
            let mut pdp = simulate_dynamic_channel(&run)?;
            pdp.grid = Arc::clone(&shared);
            channels.push(pdp);
            seeds.push(seed);
        }
    }
    let mut manifest = Manifest::empty(grid, first.noise_floor_db, "simkit");
    manifest.seeds = seeds;
    manifest.master_seed = Some(master_seed);
    manifest.scenarios = configs.to_vec();
    log::info!("simulated {} channels from {} scenario(s)", channels.len(), configs.len());
    ChannelDataset::new(channels, manifest)
}

/// Scenario list for a dataset: `layouts_per_category` distinct streets for
/// each label. With `desk` the reduced 60x64 grid is used.
pub fn standard_scenarios(layouts_per_category: usize, desk: bool, base_layout_seed: u64) -> Vec<ScenarioConfig> {
    let mut out = Vec::new();
    for category in Category::ALL {
        for k in 0..layouts_per_category {
            let base = if desk {
                ScenarioConfig::desk(category)
            } else {
                ScenarioConfig::for_category(category)
            };
            out.push(ScenarioConfig {
                layout_seed: base_layout_seed + (category.index() * 1000 + k) as u64,
                ..base
            });
        }
    }
    out
}

/// Scenario layout preset for a [`DatasetPlan`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 60 snapshots x 64 delay bins.
    Desk,
    /// 300 snapshots x 300 delay bins.
    Full,
}

/// What `simulate` builds: either explicit scenarios or a preset with a
/// number of street layouts per category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetPlan {
    pub channels_per_scenario: usize,
    pub preset: Preset,
    pub layouts_per_category: usize,
    pub base_layout_seed: u64,
    /// Overrides the preset when non-empty.
    pub scenarios: Vec<ScenarioConfig>,
}

impl Default for DatasetPlan {
    fn default() -> Self {
        Self {
            channels_per_scenario: 128,
            preset: Preset::Desk,
            layouts_per_category: 1,
            base_layout_seed: 0,
            scenarios: Vec::new(),
        }
    }
}

impl DatasetPlan {
    pub fn scenarios(&self) -> Vec<ScenarioConfig> {
        if self.scenarios.is_empty() {
            standard_scenarios(self.layouts_per_category, self.preset == Preset::Desk, self.base_layout_seed)
        } else {
            self.scenarios.clone()
        }
    }

    pub fn build(&self, master_seed: u64) -> Result<ChannelDataset> {
        build_dataset(&self.scenarios(), self.channels_per_scenario, master_seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_config_single_channel_shape() {
        let ds = build_dataset(&[ScenarioConfig::weak()], 1, 3).unwrap();
        assert_eq!(ds.shape(), [1, 300, 300]);
    }

    #[test]
    fn full_layout_shape() {
        // Counting only: 3 + 3 layouts x 300 runs gives 1800 channels.
        let scenarios = standard_scenarios(3, false, 0);
        assert_eq!(scenarios.len() * 300, 1800);
        let small = build_dataset(&standard_scenarios(3, true, 0), 2, 1).unwrap();
        assert_eq!(small.shape(), [12, 60, 64]);
        assert_eq!(small.indices_by_category()[&Category::Weak].len(), 6);
    }

    #[test]
    fn same_master_seed_is_bit_identical() {
        let scenarios = standard_scenarios(1, true, 5);
        let a = build_dataset(&scenarios, 3, 99).unwrap();
        let b = build_dataset(&scenarios, 3, 99).unwrap();
        assert_eq!(a, b);
        for (x, y) in a.channels.iter().zip(&b.channels) {
            assert!(x.power_db.iter().zip(y.power_db.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn mixed_grids_rejected() {
        let a = ScenarioConfig::desk(Category::Weak);
        let b = ScenarioConfig::weak();
        assert!(matches!(build_dataset(&[a, b], 1, 0), Err(Error::GridMismatch(..))));
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(build_dataset(&[], 1, 0).is_err());
        assert!(build_dataset(&[ScenarioConfig::weak()], 0, 0).is_err());
    }
}
