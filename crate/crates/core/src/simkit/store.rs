//! On-disk dataset layout: `channels.f32` holds the `[N, T, D]` tensor as
//! row-major little-endian `f32`; `manifest.json` holds grids, labels, seeds
//! and normalization bounds; `mask.u8` (preprocessed datasets only) holds
//! one byte per cell.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;

use super::dataset::{ChannelDataset, Manifest, FORMAT_VERSION};
use super::pdp::Pdp;
use crate::error::{Error, Result};

pub const TENSOR_FILE: &str = "channels.f32";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MASK_FILE: &str = "mask.u8";

pub fn write_dataset(dir: &Path, ds: &ChannelDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join(TENSOR_FILE);
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    for ch in &ds.channels {
        for &v in ch.power_db.iter() {
            w.write_all(&(v as f32).to_le_bytes()).map_err(|e| Error::io(&path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let mask_path = dir.join(MASK_FILE);
    match &ds.masks {
        Some(masks) => {
            let bytes: Vec<u8> = masks.iter().flat_map(|m| m.iter().map(|&b| b as u8)).collect();
            fs::write(&mask_path, bytes).map_err(|e| Error::io(&mask_path, e))?;
        }
        None if mask_path.exists() => {
            fs::remove_file(&mask_path).map_err(|e| Error::io(&mask_path, e))?;
        }
        None => {}
    }

    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&ds.manifest)?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format {
            path,
            reason: format!("unsupported format version {}", manifest.format_version),
        });
    }
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> Result<ChannelDataset> {
    let manifest = read_manifest(dir)?;
    let [n, t, d] = manifest.shape;
    if manifest.labels.len() != n || t != manifest.grid.n_snapshots() || d != manifest.grid.n_delay_bins() {
        return Err(Error::Format {
            path: dir.join(MANIFEST_FILE),
            reason: "shape disagrees with labels or grid".into(),
        });
    }

    let path = dir.join(TENSOR_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() != n * t * d * 4 {
        return Err(Error::Format {
            path,
            reason: format!("expected {} bytes, found {}", n * t * d * 4, bytes.len()),
        });
    }
    let grid = Arc::new(manifest.grid.clone());
    let channels = bytes
        .chunks_exact(t * d * 4)
        .zip(&manifest.labels)
        .map(|(chunk, &label)| {
            let values: Vec<f64> = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            let power = Array2::from_shape_vec((t, d), values).expect("chunk length matches shape");
            Pdp::new(power, Arc::clone(&grid), label)
        })
        .collect();

    let mask_path = dir.join(MASK_FILE);
    let masks = if mask_path.exists() {
        let bytes = fs::read(&mask_path).map_err(|e| Error::io(&mask_path, e))?;
        if bytes.len() != n * t * d {
            return Err(Error::Format {
                path: mask_path,
                reason: "mask size disagrees with shape".into(),
            });
        }
        Some(
            bytes
                .chunks_exact(t * d)
                .map(|c| Array2::from_shape_vec((t, d), c.iter().map(|&b| b != 0).collect()).unwrap())
                .collect(),
        )
    } else {
        None
    };

    let mut ds = ChannelDataset::new(channels, manifest)?;
    ds.masks = masks;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simkit::{build_dataset, standard_scenarios};

    #[test]
    fn round_trip_through_f32_tensor() {
        let ds = build_dataset(&standard_scenarios(1, true, 0), 2, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &ds).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.manifest, ds.manifest);
        let bytes = fs::read(dir.path().join(TENSOR_FILE)).unwrap();
        assert_eq!(bytes.len(), 4 * 4 * 60 * 64);
        for (a, b) in ds.channels.iter().zip(&back.channels) {
            for (x, y) in a.power_db.iter().zip(b.power_db.iter()) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
        // the first value on disk is channel 0, snapshot 0, bin 0
        let first = f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
        assert_eq!(first, ds.channels[0].power_db[[0, 0]] as f32);
    }

    #[test]
    fn truncated_tensor_is_rejected() {
        let ds = build_dataset(&standard_scenarios(1, true, 0), 1, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &ds).unwrap();
        let path = dir.path().join(TENSOR_FILE);
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Format { .. })));
    }
}
