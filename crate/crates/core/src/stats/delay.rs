use crate::error::{Error, Result};
use crate::simkit::db_to_linear;

/// RMS delay spread (ns) of one linear-power snapshot. Bins at or below the
/// noise floor are ignored.
pub fn rmsds(power: &[f64], delay_ns: &[f64], noise_floor_db: f64) -> Result<f64> {
    if power.len() != delay_ns.len() {
        return Err(Error::shape(&[delay_ns.len()], &[power.len()]));
    }
    let floor = db_to_linear(noise_floor_db);
    let taps = || power.iter().zip(delay_ns).filter(|(&p, _)| p > floor);
    let total: f64 = taps().map(|(p, _)| p).sum();
    if total <= 0.0 {
        return Err(Error::UndefinedSpread);
    }
    let mean = taps().map(|(p, tau)| p * tau).sum::<f64>() / total;
    let var = taps().map(|(p, tau)| p * (tau - mean) * (tau - mean)).sum::<f64>() / total;
    Ok(var.max(0.0).sqrt())
}

/// Number of delay bins strictly above the noise floor.
pub fn multipath_count(power: &[f64], noise_floor_db: f64) -> usize {
    let floor = db_to_linear(noise_floor_db);
    power.iter().filter(|&&p| p > floor).count()
}

/// Path loss (dB) of one snapshot for unit transmit power, from the total
/// power of the bins above the noise floor.
pub fn path_loss(power: &[f64], noise_floor_db: f64) -> Result<f64> {
    let floor = db_to_linear(noise_floor_db);
    let total: f64 = power.iter().filter(|&&p| p > floor).sum();
    if total <= 0.0 {
        return Err(Error::ZeroPower);
    }
    Ok(-10.0 * total.log10())
}

/// Deviation of each channel's mean path loss from the mean over the group.
pub fn shadow_fading(channel_path_loss_db: &[f64]) -> Vec<f64> {
    if channel_path_loss_db.is_empty() {
        return Vec::new();
    }
    let mean = channel_path_loss_db.iter().sum::<f64>() / channel_path_loss_db.len() as f64;
    channel_path_loss_db.iter().map(|pl| pl - mean).collect()
}
