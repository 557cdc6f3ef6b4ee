use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, Array3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::generate::sample;
use super::{Checkpoint, Pairing, ProbeRecord, StepRecord, TrainConfig, TrainHistory};
use crate::error::{Error, Result};
use crate::losses::{
    loss_discriminator_logits, loss_generator_adv_logits, loss_linear, loss_linear_grad, loss_tpcc_grad, loss_total, relative_power,
    relative_power_slope, tpcc_matrix, LossWeights,
};
use crate::model::{Discriminator, Generator};
use crate::nn::{standard_normal, Adam, Mode, Module};
use crate::preprocess::{recover_dataset, Bounds};
use crate::simkit::{Category, ChannelDataset, Domain, Manifest};
use crate::stats::{fid_scalar, stats_summary, Feature, StatsConfig};

const PROBE_SEED_SALT: u64 = 0x5052_4f42_4553_4545;

/// Per-sample tensors precomputed from the preprocessed dataset.
struct TrainData {
    /// Normalized channels flattened to `T * D`, one row per channel.
    x: Array2<f32>,
    labels: Vec<usize>,
    /// Linear power relative to `p_max`.
    power: Vec<Array2<f32>>,
    tpcc: Vec<Array2<f32>>,
    los_bin: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub l_d: f64,
    pub l_g: f64,
    pub l_linear: f64,
    pub l_tpcc: f64,
    pub l_total: f64,
}

/// Owns both networks, their optimizers and the training RNG.
pub struct Trainer {
    pub config: TrainConfig,
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    opt_g: Adam<f32>,
    opt_d: Adam<f32>,
    rng: ChaCha8Rng,
    data: TrainData,
    manifest: Manifest,
    bounds: Bounds,
    weights: LossWeights,
    reference_rmsds: BTreeMap<Category, Vec<f64>>,
    step: usize,
    epoch: usize,
}

impl Trainer {
    pub fn new(dataset: &ChannelDataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if dataset.manifest.domain != Domain::Normalized {
            return Err(Error::InvalidConfig("training needs a preprocessed (normalized) dataset".into()));
        }
        let norm = dataset
            .manifest
            .normalization
            .ok_or_else(|| Error::InvalidConfig("dataset manifest has no normalization bounds".into()))?;
        if dataset.is_empty() {
            return Err(Error::Degenerate("empty training set".into()));
        }
        let bounds = Bounds::from(norm);
        let [n, t, d] = dataset.shape();
        let los_bin = dataset.grid().los_bin_index;

        let mut x = Array2::<f32>::zeros((n, t * d));
        let mut power = Vec::with_capacity(n);
        let mut tpcc = Vec::with_capacity(n);
        for (k, ch) in dataset.channels.iter().enumerate() {
            let xn = ch.power_db.mapv(|v| v as f32);
            x.row_mut(k).assign(&xn.view().into_shape_with_order(t * d).expect("standard layout"));
            let p64 = relative_power(ch.power_db.view(), bounds);
            tpcc.push(tpcc_matrix(p64.view(), Some(los_bin))?.mapv(|v| v as f32));
            power.push(p64.mapv(|v| v as f32));
        }
        let data = TrainData {
            x,
            labels: dataset.channels.iter().map(|c| c.label.index()).collect(),
            power,
            tpcc,
            los_bin,
        };

        let recovered = recover_dataset(dataset)?;
        let summary = stats_summary(&recovered, &StatsConfig::default())?;
        let reference_rmsds = summary
            .categories
            .iter()
            .map(|(&c, stats)| (c, stats.feature_column(Feature::Rmsds)))
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let generator = Generator::new(&config.model, t, d, &mut rng)?;
        let discriminator = Discriminator::new(&config.model, t, d, &mut rng)?;
        let opt_g = Adam::new(config.optimizer, &generator);
        let opt_d = Adam::new(config.optimizer, &discriminator);
        Ok(Self {
            weights: config.effective_weights(),
            config,
            generator,
            discriminator,
            opt_g,
            opt_d,
            rng,
            data,
            manifest: dataset.manifest.clone(),
            bounds,
            reference_rmsds,
            step: 0,
            epoch: 0,
        })
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn n_channels(&self) -> usize {
        self.data.labels.len()
    }

    fn gather(&self, batch: &[usize]) -> (Array2<f32>, Vec<usize>) {
        let x = self.data.x.select(Axis(0), batch);
        let labels = batch.iter().map(|&k| self.data.labels[k]).collect();
        (x, labels)
    }

    fn fakes(&mut self, labels: &[usize]) -> Result<Array3<f32>> {
        let z: Array2<f32> = standard_normal(labels.len(), self.generator.latent_dim(), &mut self.rng);
        self.generator.forward(&z, labels, Mode::Train)
    }

    fn flat(x: &Array3<f32>) -> Array2<f32> {
        let (b, t, d) = x.dim();
        x.as_standard_layout()
            .into_owned()
            .into_shape_with_order((b, t * d))
            .expect("standard layout")
    }

    /// One discriminator update (or several, per `discriminator_steps`)
    /// followed by one generator update on the batch `batch`.
    pub fn step(&mut self, batch: &[usize]) -> Result<StepLosses> {
        if batch.len() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: batch.len(),
            });
        }
        let (real, labels) = self.gather(batch);
        let b = batch.len();
        let mut l_d = 0.0;
        let mut fake = self.fakes(&labels)?;
        for k in 0..self.config.discriminator_steps {
            if k > 0 {
                fake = self.fakes(&labels)?;
            }
            let both = ndarray::concatenate![Axis(0), real, Self::flat(&fake)];
            let both_labels: Vec<usize> = labels.iter().chain(&labels).copied().collect();
            let logits = self.discriminator.forward(&both, &both_labels, Mode::Train, &mut self.rng)?;
            let logits = logits.to_vec();
            let (loss, gr, gf) = loss_discriminator_logits(&logits[..b], &logits[b..])?;
            l_d = f64::from(loss);
            let grad = ndarray::Array1::from_iter(gr.into_iter().chain(gf));
            self.discriminator.backward(&grad, true, false);
            self.opt_d.step(&mut self.discriminator);
        }

        let w = self.weights;
        let flat_fake = Self::flat(&fake);
        let logits = self.discriminator.forward(&flat_fake, &labels, Mode::Train, &mut self.rng)?;
        let (l_g, g_logits) = loss_generator_adv_logits(logits.as_slice().expect("contiguous"))?;
        let g_logits = ndarray::Array1::from(g_logits) * (w.lambda1 as f32);
        let d_adv = self.discriminator.backward(&g_logits, false, true).expect("input grad");
        let (_, t, d) = fake.dim();
        let mut d_out = d_adv.as_standard_layout().into_owned().into_shape_with_order((b, t, d)).expect("standard layout");

        let slope = relative_power_slope(self.bounds) as f32;
        let q: Vec<Array2<f32>> = fake.axis_iter(Axis(0)).map(|x| relative_power(x, self.bounds)).collect();
        let pairs = self.pairs(batch, &labels, &q)?;
        let mut dq: Vec<Array2<f32>> = q.iter().map(|x| Array2::zeros(x.raw_dim())).collect();
        let (mut l_lin, mut l_tp) = (0.0f64, 0.0f64);
        for &(k, j) in &pairs {
            let idx = batch[k];
            let (lin, g_lin) = loss_linear_grad(self.data.power[idx].view(), q[j].view())?;
            l_lin += f64::from(lin);
            dq[j].scaled_add(w.lambda2 as f32, &g_lin);
            let (tp, g_tp) = loss_tpcc_grad(&self.data.tpcc[idx], q[j].view(), Some(self.data.los_bin), self.config.tpcc_normalization)?;
            l_tp += f64::from(tp);
            if w.lambda3 > 0.0 {
                dq[j].scaled_add(w.lambda3 as f32, &g_tp);
            }
        }
        let inv_b = 1.0 / pairs.len() as f32;
        for (j, (g, q)) in dq.iter().zip(&q).enumerate() {
            let mut dj = d_out.index_axis_mut(Axis(0), j);
            ndarray::Zip::from(&mut dj)
                .and(g)
                .and(q)
                .for_each(|o, &g, &p| *o += g * p * slope * inv_b);
        }
        let l_lin = l_lin / pairs.len() as f64;
        let l_tp = l_tp / pairs.len() as f64;
        self.generator.backward(&d_out);
        self.discriminator.zero_grad();
        self.opt_g.step(&mut self.generator);

        let l_g = f64::from(l_g);
        let losses = StepLosses {
            l_d,
            l_g,
            l_linear: l_lin,
            l_tpcc: l_tp,
            l_total: loss_total(l_g, l_lin, l_tp, &w),
        };
        for (name, v) in [
            ("L_D", losses.l_d),
            ("L_G", losses.l_g),
            ("L_linear", losses.l_linear),
            ("L_TPCC", losses.l_tpcc),
        ] {
            if !v.is_finite() {
                return Err(Error::Diverged { step: self.step, loss: name });
            }
        }
        self.step += 1;
        Ok(losses)
    }

    /// `(real, generated)` positions in the batch that the linear and TPCC
    /// losses compare.
    fn pairs(&self, batch: &[usize], labels: &[usize], q: &[Array2<f32>]) -> Result<Vec<(usize, usize)>> {
        match self.config.pairing {
            Pairing::Index => Ok((0..batch.len()).map(|k| (k, k)).collect()),
            Pairing::Nearest => {
                let mut out = Vec::with_capacity(batch.len());
                for (k, &idx) in batch.iter().enumerate() {
                    let mut best = (k, f32::INFINITY);
                    for (j, qj) in q.iter().enumerate() {
                        if labels[j] != labels[k] {
                            continue;
                        }
                        let l = loss_linear(self.data.power[idx].view(), qj.view())?;
                        if l < best.1 {
                            best = (j, l);
                        }
                    }
                    out.push((k, best.0));
                }
                Ok(out)
            }
        }
    }

    /// Batches for one epoch: a fresh permutation cut into full batches,
    /// wrapping around when the dataset is smaller than a batch.
    fn epoch_batches(&mut self) -> Vec<Vec<usize>> {
        let n = self.n_channels();
        let bs = self.config.batch_size;
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut self.rng);
        (0..n.div_ceil(bs))
            .map(|k| (0..bs).map(|j| perm[(k * bs + j) % n]).collect())
            .collect()
    }

    pub fn run_epoch(&mut self) -> Result<Vec<StepRecord>> {
        let mut out = Vec::new();
        for batch in self.epoch_batches() {
            let l = self.step(&batch)?;
            out.push(StepRecord {
                step: self.step,
                epoch: self.epoch + 1,
                l_d: l.l_d,
                l_g: l.l_g,
                l_linear: l.l_linear,
                l_tpcc: l.l_tpcc,
                l_total: l.l_total,
            });
        }
        self.epoch += 1;
        Ok(out)
    }

    /// Scalar FID of per-channel mean RMSDS between probe samples and the
    /// training channels, per category.
    pub fn probe(&mut self) -> Result<ProbeRecord> {
        let mut fid_rmsds = BTreeMap::new();
        let categories: Vec<Category> = self.reference_rmsds.keys().copied().collect();
        for c in categories {
            let ds = sample(
                &mut self.generator,
                &self.manifest,
                self.bounds,
                self.config.floor_snap_db,
                c,
                self.config.probe_size.max(2),
                self.config.seed ^ PROBE_SEED_SALT,
            )?;
            let fid = stats_summary(&ds, &StatsConfig::default())
                .and_then(|s| fid_scalar(&self.reference_rmsds[&c], &s.category(c)?.feature_column(Feature::Rmsds)));
            let fid = match fid {
                Ok(v) => v,
                Err(e) => {
                    log::warn!("probe FID for {c} undefined at epoch {}: {e}", self.epoch);
                    f64::NAN
                }
            };
            fid_rmsds.insert(c, fid);
        }
        Ok(ProbeRecord {
            epoch: self.epoch,
            step: self.step,
            fid_rmsds,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            manifest: self.manifest.clone(),
            epoch: self.epoch,
            step: self.step,
            generator: self.generator.clone(),
            discriminator: self.discriminator.clone(),
        }
    }
}

/// Trains for `config.epochs` epochs, calling `on_checkpoint` every
/// `checkpoint_every` epochs and once at the end.
pub fn train_with(
    dataset: &ChannelDataset,
    config: TrainConfig,
    mut on_checkpoint: impl FnMut(&Checkpoint, &TrainHistory) -> Result<()>,
) -> Result<(Checkpoint, TrainHistory)> {
    let start = Instant::now();
    let by_cat = dataset.indices_by_category();
    for c in Category::ALL {
        if by_cat.get(&c).is_none_or(|v| v.is_empty()) {
            return Err(Error::EmptyCategory(c.to_string()));
        }
    }
    let mut trainer = Trainer::new(dataset, config)?;
    let mut history = TrainHistory::default();
    let every = trainer.config.checkpoint_every;
    for _ in 0..trainer.config.epochs {
        history.steps.extend(trainer.run_epoch()?);
        let epoch = trainer.epochs_done();
        if let Some(last) = history.last() {
            log::info!(
                "epoch {epoch} step {}: L_D {:.4} L_G {:.4} L_linear {:.4} L_TPCC {:.4}",
                last.step,
                last.l_d,
                last.l_g,
                last.l_linear,
                last.l_tpcc
            );
        }
        if every > 0 && epoch % every == 0 && epoch < trainer.config.epochs {
            history.probes.push(trainer.probe()?);
            history.wall_clock_s = start.elapsed().as_secs_f64();
            on_checkpoint(&trainer.checkpoint(), &history)?;
        }
    }
    if every > 0 {
        history.probes.push(trainer.probe()?);
    }
    history.wall_clock_s = start.elapsed().as_secs_f64();
    let ckpt = trainer.checkpoint();
    on_checkpoint(&ckpt, &history)?;
    Ok((ckpt, history))
}

pub fn train(dataset: &ChannelDataset, config: TrainConfig) -> Result<(Checkpoint, TrainHistory)> {
    train_with(dataset, config, |_, _| Ok(()))
}

/// Trains and writes `config.json`, `checkpoints/epoch_NNNN.ckpt`,
/// `model.ckpt`, `train_log.csv` and `history.json` under `out`.
pub fn train_to_dir(dataset: &ChannelDataset, config: TrainConfig, out: &Path) -> Result<(Checkpoint, TrainHistory)> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let cfg_path = out.join("config.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&config)?).map_err(|e| Error::io(&cfg_path, e))?;
    let write_logs = |history: &TrainHistory| -> Result<()> {
        let log = out.join("train_log.csv");
        std::fs::write(&log, history.log_csv()).map_err(|e| Error::io(&log, e))?;
        let hist = out.join("history.json");
        std::fs::write(&hist, serde_json::to_string_pretty(history)?).map_err(|e| Error::io(&hist, e))
    };
    let (ckpt, history) = train_with(dataset, config, |ckpt, history| {
        ckpt.save(&out.join("checkpoints").join(format!("epoch_{:04}.ckpt", ckpt.epoch)))?;
        write_logs(history)
    })?;
    ckpt.save(&out.join("model.ckpt"))?;
    write_logs(&history)?;
    Ok((ckpt, history))
}
