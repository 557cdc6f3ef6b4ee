//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `CHFGCKPT`, a little-endian `u32` format
//! version, a little-endian `u64` header length, the JSON header, then every
//! tensor as little-endian `f32` in the order the header lists them.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{Discriminator, Generator};
use crate::nn::Module;
use crate::preprocess::Bounds;
use crate::simkit::Manifest;

const MAGIC: &[u8; 8] = b"CHFGCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    /// Offset in `f32` elements from the start of the data section.
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    manifest: Manifest,
    epoch: usize,
    step: usize,
    tensors: Vec<TensorEntry>,
}

/// Trained networks plus everything needed to generate without the
/// training data: the configuration and the dataset manifest (grid,
/// normalization bounds, threshold).
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub manifest: Manifest,
    pub epoch: usize,
    pub step: usize,
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
}

impl Checkpoint {
    pub fn bounds(&self) -> Result<Bounds> {
        let n = self
            .manifest
            .normalization
            .ok_or_else(|| Error::InvalidConfig("checkpoint manifest has no normalization bounds".into()))?;
        Bounds::new(n.p_min_db, n.p_max_db)
    }

    pub fn threshold_db(&self) -> Option<f64> {
        self.manifest.normalization.map(|n| n.threshold_db)
    }

    fn tensors(&self) -> Vec<(String, &ndarray::Array2<f32>)> {
        let g = self.generator.params().into_iter().map(|(n, p)| (format!("generator.{n}"), &p.value));
        let d = self.discriminator.params().into_iter().map(|(n, p)| (format!("discriminator.{n}"), &p.value));
        g.chain(d).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let tensors = self.tensors();
        let mut offset = 0;
        let entries = tensors
            .iter()
            .map(|(name, v)| {
                let e = TensorEntry {
                    name: name.clone(),
                    shape: [v.nrows(), v.ncols()],
                    offset,
                };
                offset += v.len();
                e
            })
            .collect();
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            manifest: self.manifest.clone(),
            epoch: self.epoch,
            step: self.step,
            tensors: entries,
        })?;
        let mut out = Vec::with_capacity(20 + header.len() + 4 * offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, v) in tensors {
            for x in v.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::Format {
            path: origin.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported checkpoint version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let data_start = 20usize.checked_add(header_len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[20..data_start])?;
        let data = &bytes[data_start..];

        let [_, t, d] = header.manifest.shape;
        // weights are overwritten below; the seed only fixes the layout
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut generator = Generator::new(&header.config.model, t, d, &mut rng)?;
        let mut discriminator = Discriminator::new(&header.config.model, t, d, &mut rng)?;
        let mut targets: Vec<(String, &mut crate::nn::Param<f32>)> = generator
            .params_mut()
            .into_iter()
            .map(|(n, p)| (format!("generator.{n}"), p))
            .chain(discriminator.params_mut().into_iter().map(|(n, p)| (format!("discriminator.{n}"), p)))
            .collect();
        if targets.len() != header.tensors.len() {
            return Err(bad(&format!(
                "expected {} tensors, header lists {}",
                targets.len(),
                header.tensors.len()
            )));
        }
        for ((name, param), entry) in targets.iter_mut().zip(&header.tensors) {
            if *name != entry.name {
                return Err(bad(&format!("tensor '{}' found where '{name}' was expected", entry.name)));
            }
            let (r, c) = param.value.dim();
            if entry.shape != [r, c] {
                return Err(bad(&format!("tensor '{name}' has shape {:?}, expected [{r}, {c}]", entry.shape)));
            }
            let start = entry.offset * 4;
            let end = start + r * c * 4;
            let raw = data.get(start..end).ok_or_else(|| bad(&format!("tensor '{name}' is truncated")))?;
            for (v, chunk) in param.value.iter_mut().zip(raw.chunks_exact(4)) {
                *v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            }
        }
        let expected_len: usize = header.tensors.iter().map(|e| e.shape[0] * e.shape[1] * 4).sum();
        if data.len() != expected_len {
            return Err(bad("trailing bytes after tensor data"));
        }
        Ok(Self {
            config: header.config,
            manifest: header.manifest,
            epoch: header.epoch,
            step: header.step,
            generator,
            discriminator,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
