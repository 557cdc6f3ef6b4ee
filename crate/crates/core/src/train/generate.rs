use std::sync::Arc;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Checkpoint;
use crate::error::Result;
use crate::model::Generator;
use crate::nn::{standard_normal, Mode};
use crate::preprocess::{denormalize, Bounds};
use crate::simkit::{Category, ChannelDataset, Domain, Manifest, Pdp};

const BATCH: usize = 64;

/// Samples `n` channels of one category from a checkpoint, in dB on the
/// training grid.
pub fn generate(ckpt: &Checkpoint, label: Category, n: usize, seed: u64) -> Result<ChannelDataset> {
    let mut g = ckpt.generator.clone();
    sample(&mut g, &ckpt.manifest, ckpt.bounds()?, ckpt.config.floor_snap_db, label, n, seed)
}

pub(crate) fn sample(
    g: &mut Generator<f32>,
    train_manifest: &Manifest,
    bounds: Bounds,
    snap_db: f64,
    label: Category,
    n: usize,
    seed: u64,
) -> Result<ChannelDataset> {
    let threshold = train_manifest
        .normalization
        .map(|n| n.threshold_db)
        .unwrap_or(train_manifest.noise_floor_db);
    let grid = Arc::new(train_manifest.grid.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut channels = Vec::with_capacity(n);
    let mut done = 0;
    while done < n {
        let b = BATCH.min(n - done);
        let z: Array2<f32> = standard_normal(b, g.latent_dim(), &mut rng);
        let out = g.forward(&z, &vec![label.index(); b], Mode::Eval)?;
        for x in out.axis_iter(Axis(0)) {
            let mut db = denormalize(&x.mapv(f64::from), bounds)?;
            db.mapv_inplace(|v| if v < threshold + snap_db { threshold } else { v });
            channels.push(Pdp::new(db, grid.clone(), label));
        }
        done += b;
    }
    let mut manifest = Manifest::empty(train_manifest.grid.clone(), train_manifest.noise_floor_db, "generated");
    manifest.domain = Domain::PowerDb;
    manifest.master_seed = Some(seed);
    manifest.seeds = vec![seed; n];
    ChannelDataset::new(channels, manifest)
}
