//! Geometric single-bounce V2V multipath simulator.
//!
//! Delays are synthesized directly on the `1/bandwidth` grid. Each snapshot
//! holds a constant LOS tap, one tap per visible static scatterer (its delay
//! drifts as Tx/Rx move) and one tap per co-moving vehicle. Taps that land
//! in the same bin add in power.
//!
//! Static scatterers follow a birth-death visibility process over travelled
//! distance, so faster runs turn their multipath over faster in time.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{ScenarioConfig, SPEED_OF_LIGHT};
use super::pdp::{linear_to_db, Grid, Pdp};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
struct Scatterer {
    x: f64,
    y: f64,
    rcs_linear: f64,
}

/// AR(1) log-normal shadowing in dB, correlated over travelled distance.
struct Shadowing {
    state_db: Vec<f64>,
    rho: f64,
    sigma_db: f64,
}

impl Shadowing {
    fn new(n: usize, sigma_db: f64, rho: f64, rng: &mut ChaCha8Rng) -> Self {
        let state_db = (0..n).map(|_| sigma_db * rng.sample::<f64, _>(StandardNormal)).collect();
        Self { state_db, rho, sigma_db }
    }

    fn advance(&mut self, rng: &mut ChaCha8Rng) {
        let innovation = (1.0 - self.rho * self.rho).sqrt() * self.sigma_db;
        for s in &mut self.state_db {
            *s = self.rho * *s + innovation * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

/// Per-scatterer on/off telegraph process in travelled distance, with a
/// linear fade between states.
struct Visibility {
    on: Vec<bool>,
    gain: Vec<f64>,
    toggle_prob: f64,
    ramp_step: f64,
}

impl Visibility {
    fn new(n: usize, cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Self {
        let step_m = cfg.speed_mps * cfg.snapshot_dt_s;
        let on: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let gain = on.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
        Self {
            on,
            gain,
            toggle_prob: 1.0 - (-step_m / cfg.visibility_length_m).exp(),
            ramp_step: step_m / cfg.visibility_ramp_m,
        }
    }

    fn advance(&mut self, rng: &mut ChaCha8Rng) {
        for (on, gain) in self.on.iter_mut().zip(&mut self.gain) {
            if rng.random_bool(self.toggle_prob) {
                *on = !*on;
            }
            let target = if *on { 1.0 } else { 0.0 };
            *gain = if *gain < target {
                (*gain + self.ramp_step).min(target)
            } else {
                (*gain - self.ramp_step).max(target)
            };
        }
    }
}

fn layout(cfg: &ScenarioConfig) -> Vec<Scatterer> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.layout_seed ^ 0x5eed_1a70_u64);
    let [side_lo, side_hi] = cfg.street_side_range_m;
    (0..cfg.n_static_scatterers)
        .map(|_| {
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let x = rng.random_range(-cfg.street_extent_m..=cfg.tx_rx_distance_m + cfg.street_extent_m);
            let y = side * rng.random_range(side_lo..=side_hi);
            let rcs_db = cfg.static_rcs_db + cfg.static_rcs_sigma_db * rng.sample::<f64, _>(StandardNormal);
            Scatterer {
                x,
                y,
                rcs_linear: 10f64.powf(rcs_db / 10.0),
            }
        })
        .collect()
}

/// Vehicles sit behind Tx or ahead of Rx so they never fall in the LOS region.
/// Coordinates are relative to Tx.
fn vehicles(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<Scatterer> {
    let [lo, hi] = cfg.dynamic_scatterer_offset_range_m;
    (0..cfg.n_dynamic_scatterers)
        .map(|_| {
            let offset = rng.random_range(lo..=hi);
            let x = if rng.random_bool(0.5) {
                -offset
            } else {
                cfg.tx_rx_distance_m + offset
            };
            let lane = if rng.random_bool(0.5) { 1.0 } else { 2.0 };
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            Scatterer {
                x,
                y: side * lane * cfg.lane_width_m,
                rcs_linear: 10f64.powf(cfg.dynamic_rcs_db / 10.0),
            }
        })
        .collect()
}

/// Bistatic single-bounce received power for unit transmit power.
fn bounce_power(wavelength: f64, rcs: f64, d1: f64, d2: f64) -> f64 {
    let g = wavelength / (4.0 * PI);
    g * g * rcs / (4.0 * PI * d1 * d1 * d2 * d2)
}

pub fn simulate_dynamic_channel(cfg: &ScenarioConfig) -> Result<Pdp> {
    cfg.validate()?;
    let grid = Arc::new(Grid::from_config(cfg));
    let n_t = cfg.n_snapshots;
    let n_d = cfg.n_delay_bins;
    let spacing_s = 1.0 / cfg.bandwidth_hz;
    let wavelength = cfg.wavelength_m();
    let los_bin = cfg.los_bin_index();

    let statics = layout(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let x0 = if cfg.start_jitter_m > 0.0 {
        rng.random_range(-cfg.start_jitter_m..=cfg.start_jitter_m)
    } else {
        0.0
    };
    let movers = vehicles(cfg, &mut rng);

    let step_m = cfg.speed_mps * cfg.snapshot_dt_s;
    let rho = (-step_m / cfg.shadowing_decorrelation_m).exp();
    let los_shadow_db = cfg.shadowing_sigma_db * rng.sample::<f64, _>(StandardNormal);
    let mut static_shadow = Shadowing::new(statics.len(), cfg.shadowing_sigma_db, rho, &mut rng);
    let mut visibility = Visibility::new(statics.len(), cfg, &mut rng);
    // co-moving vehicles keep their geometry relative to Tx/Rx, so their
    // shadowing does not decorrelate
    let mover_shadow = Shadowing::new(movers.len(), cfg.shadowing_sigma_db, 1.0, &mut rng);

    let g = wavelength / (4.0 * PI * cfg.tx_rx_distance_m);
    let los_power = g * g * 10f64.powf(los_shadow_db / 10.0);

    let floor_linear = 10f64.powf(cfg.noise_floor_db / 10.0);
    let mut power = Array2::<f64>::zeros((n_t, n_d));
    let mut bins = vec![0.0; n_d];
    for t in 0..n_t {
        bins.iter_mut().for_each(|b| *b = 0.0);
        bins[los_bin] += los_power;

        let tx_x = x0 + step_m * t as f64;
        let rx_x = tx_x + cfg.tx_rx_distance_m;
        // power is split linearly between the two bins around the true delay
        let mut deposit = |d1: f64, d2: f64, rcs: f64, gain: f64| {
            let pos = (d1 + d2) / SPEED_OF_LIGHT / spacing_s;
            let lower = pos.floor() as usize;
            let frac = pos - lower as f64;
            let p = bounce_power(wavelength, rcs, d1, d2) * gain;
            if lower < n_d {
                bins[lower] += p * (1.0 - frac);
            }
            if lower + 1 < n_d {
                bins[lower + 1] += p * frac;
            }
        };
        for ((s, &shadow), &vis) in statics.iter().zip(&static_shadow.state_db).zip(&visibility.gain) {
            if vis > 0.0 {
                let d1 = (s.x - tx_x).hypot(s.y);
                let d2 = (s.x - rx_x).hypot(s.y);
                deposit(d1, d2, s.rcs_linear, vis * 10f64.powf(shadow / 10.0));
            }
        }
        for (v, &shadow) in movers.iter().zip(&mover_shadow.state_db) {
            let d1 = v.x.hypot(v.y);
            let d2 = (v.x - cfg.tx_rx_distance_m).hypot(v.y);
            deposit(d1, d2, v.rcs_linear, 10f64.powf(shadow / 10.0));
        }

        for (out, &p) in power.row_mut(t).iter_mut().zip(&bins) {
            *out = if p > floor_linear {
                linear_to_db(p)
            } else {
                cfg.noise_floor_db
            };
        }
        static_shadow.advance(&mut rng);
        visibility.advance(&mut rng);
    }
    Ok(Pdp::new(power, grid, cfg.category))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simkit::Category;

    fn free_space_loss_db(freq_hz: f64, d: f64) -> f64 {
        20.0 * (4.0 * PI * d * freq_hz / SPEED_OF_LIGHT).log10()
    }

    #[test]
    fn friis_oracle_at_6ghz_50m() {
        let fspl = free_space_loss_db(6e9, 50.0);
        assert!((fspl - 81.99).abs() < 0.01, "{fspl}");
    }

    #[test]
    fn los_only_has_single_bin_above_floor() {
        let cfg = ScenarioConfig {
            n_static_scatterers: 0,
            n_dynamic_scatterers: 0,
            shadowing_sigma_db: 0.0,
            ..ScenarioConfig::desk(Category::Weak)
        };
        let pdp = simulate_dynamic_channel(&cfg).unwrap();
        for row in pdp.power_db.rows() {
            assert_eq!(row.iter().filter(|&&p| p > cfg.noise_floor_db).count(), 1);
            let los = row[cfg.los_bin_index()];
            assert!((-los - free_space_loss_db(6e9, 50.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = ScenarioConfig {
            rng_seed: 42,
            ..ScenarioConfig::desk(Category::Strong)
        };
        let a = simulate_dynamic_channel(&cfg).unwrap();
        let b = simulate_dynamic_channel(&cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate_dynamic_channel(&ScenarioConfig { rng_seed: 43, ..cfg }).unwrap();
        assert_ne!(a.power_db, c.power_db);
    }

    #[test]
    fn values_respect_floor_and_los_is_preserved() {
        for category in Category::ALL {
            let cfg = ScenarioConfig {
                rng_seed: 7,
                ..ScenarioConfig::desk(category)
            };
            let pdp = simulate_dynamic_channel(&cfg).unwrap();
            assert_eq!(pdp.power_db.dim(), (60, 64));
            assert!(pdp.power_db.iter().all(|&p| p >= cfg.noise_floor_db));
            assert!(pdp.power_db.column(cfg.los_bin_index()).iter().all(|&p| p > cfg.noise_floor_db));
        }
    }

    #[test]
    fn vehicles_stay_out_of_los_region() {
        let cfg = ScenarioConfig::desk(Category::Weak);
        let los = cfg.los_bin_index();
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for v in vehicles(&cfg, &mut rng) {
                let d1 = v.x.hypot(v.y);
                let d2 = (v.x - cfg.tx_rx_distance_m).hypot(v.y);
                let bin = ((d1 + d2) / SPEED_OF_LIGHT * cfg.bandwidth_hz).round() as usize;
                assert!(bin > los + 1, "vehicle tap in bin {bin}, LOS {los}");
            }
        }
    }

    #[test]
    fn rejects_grid_too_short_for_los() {
        let cfg = ScenarioConfig {
            n_delay_bins: 10,
            ..ScenarioConfig::desk(Category::Weak)
        };
        assert!(simulate_dynamic_channel(&cfg).is_err());
    }
}
