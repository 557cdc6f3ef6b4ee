//! Masking and [-1, 1] scaling of dB power grids, and the inverse mapping used
//! to bring generated samples back to physical units.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simkit::{ChannelDataset, Domain, Normalization, Pdp};

pub const DEFAULT_THRESHOLD_DB: f64 = -150.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub p_min: f64,
    pub p_max: f64,
}

impl Bounds {
    pub fn new(p_min: f64, p_max: f64) -> Result<Self> {
        let b = Self { p_min, p_max };
        b.check()?;
        Ok(b)
    }

    fn check(&self) -> Result<()> {
        if !(self.p_min.is_finite() && self.p_max.is_finite()) {
            return Err(Error::NonFinite("normalization bounds".into()));
        }
        if self.p_max <= self.p_min {
            return Err(Error::Degenerate(format!(
                "normalization bounds need p_max > p_min (got {} <= {})",
                self.p_max, self.p_min
            )));
        }
        Ok(())
    }

    pub fn of(p: &Array2<f64>) -> Result<Self> {
        let (lo, hi) = p
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if lo == hi {
            return Err(Error::Degenerate("constant matrix cannot be normalized".into()));
        }
        Self::new(lo, hi)
    }

    pub fn span(&self) -> f64 {
        self.p_max - self.p_min
    }
}

impl From<Normalization> for Bounds {
    fn from(n: Normalization) -> Self {
        Self {
            p_min: n.p_min_db,
            p_max: n.p_max_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedNormalized {
    pub data: Array2<f64>,
    pub mask: Array2<bool>,
    pub bounds: Bounds,
    pub threshold: f64,
}

/// Cells below `threshold` are replaced by the threshold and flagged 0.
pub fn mask(p: &Array2<f64>, threshold: f64) -> (Array2<f64>, Array2<bool>) {
    let valid = p.mapv(|v| v >= threshold);
    let masked = Zip::from(p).and(&valid).map_collect(|&v, &ok| if ok { v } else { threshold });
    (masked, valid)
}

/// Scales with bounds taken from `p` itself.
pub fn normalize(p: &Array2<f64>) -> Result<(Array2<f64>, Bounds)> {
    let bounds = Bounds::of(p)?;
    Ok((normalize_with(p, bounds)?, bounds))
}

pub fn normalize_with(p: &Array2<f64>, bounds: Bounds) -> Result<Array2<f64>> {
    bounds.check()?;
    let span = bounds.span();
    Ok(p.mapv(|v| 2.0 * (v - bounds.p_min) / span - 1.0))
}

pub fn apply_mask(p_norm: &Array2<f64>, mask: &Array2<bool>) -> Result<Array2<f64>> {
    if p_norm.dim() != mask.dim() {
        return Err(Error::shape(p_norm.shape(), mask.shape()));
    }
    Ok(Zip::from(p_norm).and(mask).map_collect(|&v, &ok| if ok { v } else { -1.0 }))
}

pub fn denormalize(p_norm: &Array2<f64>, bounds: Bounds) -> Result<Array2<f64>> {
    bounds.check()?;
    let span = bounds.span();
    Ok(p_norm.mapv(|v| (v + 1.0) * 0.5 * span + bounds.p_min))
}

/// Mask, then scale with externally supplied (dataset-global) bounds.
pub fn mask_and_normalize(p: &Array2<f64>, threshold: f64, bounds: Bounds) -> Result<MaskedNormalized> {
    let (masked, valid) = mask(p, threshold);
    let data = apply_mask(&normalize_with(&masked, bounds)?, &valid)?;
    Ok(MaskedNormalized {
        data,
        mask: valid,
        bounds,
        threshold,
    })
}

/// Masks every channel, computes one pair of bounds over the whole masked
/// dataset, and returns the normalized dataset with its masks attached and
/// bounds recorded in the manifest.
pub fn preprocess_dataset(ds: &ChannelDataset, threshold: f64) -> Result<ChannelDataset> {
    if ds.manifest.domain != Domain::PowerDb {
        return Err(Error::InvalidConfig("dataset is already normalized".into()));
    }
    if ds.is_empty() {
        return Err(Error::Degenerate("empty dataset".into()));
    }
    let masked: Vec<_> = ds.channels.iter().map(|c| mask(&c.power_db, threshold)).collect();
    let (lo, hi) = masked.iter().flat_map(|(m, _)| m.iter()).fold(
        (f64::INFINITY, f64::NEG_INFINITY),
        |(lo, hi), &v| (lo.min(v), hi.max(v)),
    );
    let bounds = Bounds::new(lo, hi)?;

    let mut channels = Vec::with_capacity(ds.len());
    let mut masks = Vec::with_capacity(ds.len());
    for ((m, valid), src) in masked.into_iter().zip(&ds.channels) {
        let data = apply_mask(&normalize_with(&m, bounds)?, &valid)?;
        channels.push(Pdp::new(data, src.grid.clone(), src.label));
        masks.push(valid);
    }
    let mut manifest = ds.manifest.clone();
    manifest.domain = Domain::Normalized;
    manifest.normalization = Some(Normalization {
        p_min_db: bounds.p_min,
        p_max_db: bounds.p_max,
        threshold_db: threshold,
    });
    let mut out = ChannelDataset::new(channels, manifest)?;
    out.masks = Some(masks);
    Ok(out)
}

/// Maps a normalized dataset back to dB. Masked cells (when masks are
/// present) come back at the masking threshold.
pub fn recover_dataset(ds: &ChannelDataset) -> Result<ChannelDataset> {
    let norm = ds
        .manifest
        .normalization
        .ok_or_else(|| Error::InvalidConfig("dataset has no normalization bounds".into()))?;
    if ds.manifest.domain != Domain::Normalized {
        return Err(Error::InvalidConfig("dataset is not normalized".into()));
    }
    let bounds = Bounds::from(norm);
    let mut channels = Vec::with_capacity(ds.len());
    for (k, c) in ds.channels.iter().enumerate() {
        let mut db = denormalize(&c.power_db, bounds)?;
        if let Some(masks) = &ds.masks {
            Zip::from(&mut db).and(&masks[k]).for_each(|v, &ok| {
                if !ok {
                    *v = norm.threshold_db;
                }
            });
        }
        channels.push(Pdp::new(db, c.grid.clone(), c.label));
    }
    let mut manifest = ds.manifest.clone();
    manifest.domain = Domain::PowerDb;
    ChannelDataset::new(channels, manifest)
}
