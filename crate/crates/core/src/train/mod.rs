//! Alternating adversarial training, checkpoints and conditioned sampling.

mod checkpoint;
mod generate;
mod trainer;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use generate::generate;
pub use trainer::{train, train_to_dir, train_with, Trainer};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{LossWeights, TpccNormalization};
use crate::model::ModelConfig;
use crate::nn::AdamConfig;
use crate::simkit::Category;

/// Which real channel each generated channel is compared with in the
/// linear and TPCC losses. Both only ever pair channels of the same label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Generated sample `k` against real sample `k` of the batch.
    Index,
    /// Every real sample against the generated sample of the batch closest
    /// to it in linear loss.
    #[default]
    Nearest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub weights: LossWeights,
    /// When false the TPCC term is dropped (its weight forced to zero).
    pub stationarity_constraint: bool,
    pub tpcc_normalization: TpccNormalization,
    pub pairing: Pairing,
    /// Discriminator updates per generator update.
    pub discriminator_steps: usize,
    pub seed: u64,
    /// Epochs between checkpoints and probe evaluations; 0 disables both.
    pub checkpoint_every: usize,
    /// Channels generated per category for each probe evaluation.
    pub probe_size: usize,
    /// Generated cells within this many dB of the masking threshold are
    /// snapped to it.
    pub floor_snap_db: f64,
    /// Informational; only the CPU is supported.
    pub device: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            optimizer: AdamConfig::default(),
            batch_size: 32,
            epochs: 500,
            weights: LossWeights::default(),
            stationarity_constraint: true,
            tpcc_normalization: TpccNormalization::Snapshots,
            pairing: Pairing::default(),
            discriminator_steps: 1,
            seed: 0,
            checkpoint_every: 50,
            probe_size: 32,
            floor_snap_db: 3.0,
            device: "cpu".into(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.weights.validate()?;
        let o = &self.optimizer;
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(o.learning_rate > 0.0 && o.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", o.learning_rate));
        }
        for (name, b) in [("beta1", o.beta1), ("beta2", o.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        if !(o.eps > 0.0) {
            return bad("optimizer eps must be positive".into());
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2 (batch normalization)".into());
        }
        if self.discriminator_steps == 0 {
            return bad("discriminator_steps must be at least 1".into());
        }
        if !(self.floor_snap_db >= 0.0 && self.floor_snap_db.is_finite()) {
            return bad("floor_snap_db must be non-negative".into());
        }
        Ok(())
    }

    /// Loss weights actually used: `lambda3 = 0` without the constraint.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.weights;
        if !self.stationarity_constraint {
            w.lambda3 = 0.0;
        }
        w
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub l_d: f64,
    pub l_g: f64,
    pub l_linear: f64,
    pub l_tpcc: f64,
    pub l_total: f64,
}

/// Scalar FID between generated and reference per-channel mean delay
/// spreads, per category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub epoch: usize,
    pub step: usize,
    pub fid_rmsds: BTreeMap<Category, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    pub probes: Vec<ProbeRecord>,
    pub wall_clock_s: f64,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "step,L_D,L_G,L_linear,L_TPCC,L_total";

    pub fn log_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.steps {
            let _ = writeln!(s, "{},{},{},{},{},{}", r.step, r.l_d, r.l_g, r.l_linear, r.l_tpcc, r.l_total);
        }
        s
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.steps.last()
    }
}
