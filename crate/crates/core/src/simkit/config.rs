use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Non-stationarity level of a scenario. Doubles as the conditional label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Weak,
    Strong,
}

impl Category {
    pub const ALL: [Category; 2] = [Category::Weak, Category::Strong];

    pub fn index(self) -> usize {
        match self {
            Category::Weak => 0,
            Category::Strong => 1,
        }
    }

    pub fn from_index(index: usize) -> Result<Self> {
        match index {
            0 => Ok(Category::Weak),
            1 => Ok(Category::Strong),
            other => Err(Error::InvalidLabel(other.to_string())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Weak => "weak",
            Category::Strong => "strong",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "weak" | "0" => Ok(Category::Weak),
            "strong" | "1" => Ok(Category::Strong),
            _ => Err(Error::InvalidLabel(s.to_string())),
        }
    }
}

/// One V2V street layout plus the randomness of a single dynamic run.
///
/// Tx and Rx drive in the same lane along +x at `speed_mps`, `tx_rx_distance_m`
/// apart. Static scatterers line both sides of the street; a fixed
/// `layout_seed` reproduces the same street. `rng_seed` drives everything that
/// varies between runs on one street: start position, placement of the
/// co-moving vehicles and the shadowing processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub category: Category,
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub tx_rx_distance_m: f64,
    pub speed_mps: f64,
    pub n_snapshots: usize,
    pub n_delay_bins: usize,
    pub snapshot_dt_s: f64,
    pub n_static_scatterers: usize,
    pub n_dynamic_scatterers: usize,
    /// Along-road distance of the co-moving vehicles behind Tx or ahead of Rx.
    pub dynamic_scatterer_offset_range_m: [f64; 2],
    pub noise_floor_db: f64,
    pub layout_seed: u64,
    pub rng_seed: u64,

    /// Static scatterers are spread over `[-extent, d + extent]` along the road.
    pub street_extent_m: f64,
    /// Lateral distance of static scatterers from the driving lane.
    pub street_side_range_m: [f64; 2],
    pub lane_width_m: f64,
    /// Uniform jitter of the Tx start position, per run.
    pub start_jitter_m: f64,
    pub static_rcs_db: f64,
    pub static_rcs_sigma_db: f64,
    pub dynamic_rcs_db: f64,
    /// Log-normal shadowing standard deviation applied per path.
    pub shadowing_sigma_db: f64,
    /// Travel distance over which path shadowing decorrelates to 1/e.
    pub shadowing_decorrelation_m: f64,
    /// Mean travel distance a static scatterer stays visible (and, equally,
    /// hidden) before toggling; drives path birth and death.
    pub visibility_length_m: f64,
    /// Travel distance over which a toggling scatterer fades in or out.
    pub visibility_ramp_m: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::weak()
    }
}

impl ScenarioConfig {
    /// Sparse street, slow vehicles.
    pub fn weak() -> Self {
        Self {
            category: Category::Weak,
            carrier_freq_hz: 6e9,
            bandwidth_hz: 150e6,
            tx_rx_distance_m: 50.0,
            speed_mps: 0.5,
            n_snapshots: 300,
            n_delay_bins: 300,
            snapshot_dt_s: 0.1,
            n_static_scatterers: 60,
            n_dynamic_scatterers: 2,
            dynamic_scatterer_offset_range_m: [5.0, 25.0],
            noise_floor_db: -150.0,
            layout_seed: 0,
            rng_seed: 0,
            street_extent_m: 250.0,
            street_side_range_m: [8.0, 30.0],
            lane_width_m: 3.5,
            start_jitter_m: 10.0,
            static_rcs_db: 10.0,
            static_rcs_sigma_db: 3.0,
            dynamic_rcs_db: 15.0,
            shadowing_sigma_db: 2.0,
            shadowing_decorrelation_m: 10.0,
            visibility_length_m: 15.0,
            visibility_ramp_m: 1.0,
        }
    }

    /// Dense street, fast vehicles.
    pub fn strong() -> Self {
        Self {
            category: Category::Strong,
            speed_mps: 1.5,
            n_static_scatterers: 320,
            ..Self::weak()
        }
    }

    pub fn for_category(category: Category) -> Self {
        match category {
            Category::Weak => Self::weak(),
            Category::Strong => Self::strong(),
        }
    }

    /// Reduced grid (60 snapshots x 64 delay bins) for CPU-sized experiments.
    /// The record is five times shorter, so visibility turns over faster.
    pub fn desk(category: Category) -> Self {
        let (n_static, extent) = match category {
            Category::Weak => (12, 60.0),
            Category::Strong => (160, 60.0),
        };
        Self {
            n_snapshots: 60,
            n_delay_bins: 64,
            n_static_scatterers: n_static,
            street_extent_m: extent,
            street_side_range_m: [8.0, 20.0],
            visibility_length_m: 4.0,
            visibility_ramp_m: 0.5,
            ..Self::for_category(category)
        }
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    pub fn delay_spacing_ns(&self) -> f64 {
        1e9 / self.bandwidth_hz
    }

    pub fn los_delay_ns(&self) -> f64 {
        self.tx_rx_distance_m / SPEED_OF_LIGHT * 1e9
    }

    pub fn los_bin_index(&self) -> usize {
        (self.los_delay_ns() / self.delay_spacing_ns()).round() as usize
    }

    pub fn delay_span_ns(&self) -> f64 {
        self.n_delay_bins as f64 * self.delay_spacing_ns()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("tx_rx_distance_m", self.tx_rx_distance_m),
            ("speed_mps", self.speed_mps),
            ("snapshot_dt_s", self.snapshot_dt_s),
            ("lane_width_m", self.lane_width_m),
            ("shadowing_decorrelation_m", self.shadowing_decorrelation_m),
            ("visibility_length_m", self.visibility_length_m),
            ("visibility_ramp_m", self.visibility_ramp_m),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {value}")));
            }
        }
        if self.n_snapshots == 0 || self.n_delay_bins == 0 {
            return Err(Error::InvalidConfig("grid dimensions must be positive".into()));
        }
        let [lo, hi] = self.dynamic_scatterer_offset_range_m;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "dynamic scatterer offset range [{lo}, {hi}] must be positive and ordered"
            )));
        }
        let [side_lo, side_hi] = self.street_side_range_m;
        if !(side_lo > 0.0 && side_hi >= side_lo && side_hi.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "street side range [{side_lo}, {side_hi}] must be positive and ordered"
            )));
        }
        let non_negative = [
            ("street_extent_m", self.street_extent_m),
            ("start_jitter_m", self.start_jitter_m),
            ("static_rcs_sigma_db", self.static_rcs_sigma_db),
            ("shadowing_sigma_db", self.shadowing_sigma_db),
        ];
        for (name, value) in non_negative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be non-negative, got {value}")));
            }
        }
        if !self.noise_floor_db.is_finite() {
            return Err(Error::InvalidConfig("noise floor must be finite".into()));
        }
        if self.los_delay_ns() >= self.delay_span_ns() || self.los_bin_index() >= self.n_delay_bins {
            return Err(Error::LosOutsideGrid {
                los_delay_ns: self.los_delay_ns(),
                span_ns: self.delay_span_ns(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delay_spacing_is_reciprocal_bandwidth() {
        let cfg = ScenarioConfig::weak();
        assert!((cfg.delay_spacing_ns() - 6.666_666_666_7).abs() < 1e-9);
    }

    #[test]
    fn los_sits_near_167_ns() {
        let cfg = ScenarioConfig::weak();
        assert!((cfg.los_delay_ns() - 166.782).abs() < 1e-3);
        assert_eq!(cfg.los_bin_index(), 25);
    }

    #[test]
    fn category_speeds() {
        assert_eq!(ScenarioConfig::weak().speed_mps, 0.5);
        assert_eq!(ScenarioConfig::strong().speed_mps, 1.5);
        assert_eq!(ScenarioConfig::desk(Category::Strong).speed_mps, 1.5);
    }

    #[test]
    fn rejects_los_beyond_grid() {
        let cfg = ScenarioConfig {
            n_delay_bins: 20,
            ..ScenarioConfig::weak()
        };
        assert!(matches!(cfg.validate(), Err(Error::LosOutsideGrid { .. })));
    }

    #[test]
    fn rejects_non_positive_speed() {
        let cfg = ScenarioConfig {
            speed_mps: 0.0,
            ..ScenarioConfig::weak()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn category_parses() {
        assert_eq!("weak".parse::<Category>().unwrap(), Category::Weak);
        assert_eq!("Strong".parse::<Category>().unwrap(), Category::Strong);
        assert!("medium".parse::<Category>().is_err());
        assert_eq!(Category::from_index(1).unwrap(), Category::Strong);
        assert!(Category::from_index(2).is_err());
    }
}
