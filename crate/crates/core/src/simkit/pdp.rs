use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::config::{Category, ScenarioConfig};

/// Time and delay axes shared by every snapshot of a channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub delay_ns: Vec<f64>,
    pub time_s: Vec<f64>,
    pub los_bin_index: usize,
}

impl Grid {
    pub fn uniform(n_snapshots: usize, snapshot_dt_s: f64, n_delay_bins: usize, delay_spacing_ns: f64, los_bin_index: usize) -> Self {
        Self {
            delay_ns: (0..n_delay_bins).map(|n| n as f64 * delay_spacing_ns).collect(),
            time_s: (0..n_snapshots).map(|k| k as f64 * snapshot_dt_s).collect(),
            los_bin_index,
        }
    }

    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self::uniform(
            cfg.n_snapshots,
            cfg.snapshot_dt_s,
            cfg.n_delay_bins,
            cfg.delay_spacing_ns(),
            cfg.los_bin_index(),
        )
    }

    pub fn n_snapshots(&self) -> usize {
        self.time_s.len()
    }

    pub fn n_delay_bins(&self) -> usize {
        self.delay_ns.len()
    }

    /// Snapshot spacing; falls back to 1 s for single-snapshot grids.
    pub fn snapshot_dt_s(&self) -> f64 {
        match self.time_s.as_slice() {
            [a, b, ..] => b - a,
            _ => 1.0,
        }
    }
}

/// A dynamic channel: received power in dB over (snapshot, delay bin).
#[derive(Debug, Clone, PartialEq)]
pub struct Pdp {
    pub power_db: Array2<f64>,
    pub grid: Arc<Grid>,
    pub label: Category,
}

impl Pdp {
    pub fn new(power_db: Array2<f64>, grid: Arc<Grid>, label: Category) -> Self {
        debug_assert_eq!(power_db.dim(), (grid.n_snapshots(), grid.n_delay_bins()));
        Self { power_db, grid, label }
    }

    pub fn n_snapshots(&self) -> usize {
        self.power_db.nrows()
    }

    pub fn n_delay_bins(&self) -> usize {
        self.power_db.ncols()
    }

    pub fn los_bin_index(&self) -> usize {
        self.grid.los_bin_index
    }

    pub fn snapshot(&self, t: usize) -> ArrayView1<'_, f64> {
        self.power_db.row(t)
    }

    pub fn linear(&self) -> Array2<f64> {
        self.power_db.mapv(db_to_linear)
    }
}

#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn linear_to_db(p: f64) -> f64 {
    10.0 * p.log10()
}
