//! Stacked RBMs trained greedily layer by layer, with deterministic
//! mean-field up/down passes and a checksummed binary model file.
//!
//! Reconstruction treats the stack as a deterministic autoencoder: probe
//! probabilities are propagated up through every layer and back down, with
//! no sampling anywhere.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rbm::{self, mix_seed, RbmParams, TrainConfig, TrainLog};

/// Stack of RBM layers. `layer_sizes` lists unit counts visible first, so a
/// model with sizes [784, 128, 64] has two RBM layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DbnModel {
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<RbmParams>,
    pub trained: Vec<bool>,
}

/// Mean-field activations of the last hidden layer for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct TopRepresentation {
    pub activations: Matrix,
}

impl DbnModel {
    pub fn n_top(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn is_trained(&self) -> bool {
        self.trained.iter().all(|&t| t)
    }

    fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(
                "layer_sizes needs at least a visible and one hidden size".into(),
            ));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config("layer sizes must be >= 1".into()));
        }
        Ok(())
    }
}

/// Train each layer on the mean-field hidden probabilities of the one below.
/// Layer i trains with seed `mix_seed(cfg.seed, i)`, so a two-element stack
/// reproduces `rbm::train` with that derived seed exactly.
pub fn greedy_train(
    data: &Matrix,
    layer_sizes: &[usize],
    cfg: &TrainConfig,
) -> Result<(DbnModel, Vec<TrainLog>)> {
    DbnModel::check_sizes(layer_sizes)?;
    if data.cols() != layer_sizes[0] {
        return Err(Error::Config(format!(
            "data has {} columns but the visible layer has {} units",
            data.cols(),
            layer_sizes[0]
        )));
    }
    let mut layers = Vec::with_capacity(layer_sizes.len() - 1);
    let mut logs = Vec::with_capacity(layer_sizes.len() - 1);
    let mut current = data.clone();
    for (i, pair) in layer_sizes.windows(2).enumerate() {
        let layer_cfg = TrainConfig {
            seed: mix_seed(cfg.seed, i as u64),
            ..cfg.clone()
        };
        let (params, log) = rbm::train(&current, pair[1], &layer_cfg)?;
        current = rbm::hidden_probs(&params, &current)?;
        layers.push(params);
        logs.push(log);
    }
    let trained = vec![true; layers.len()];
    Ok((
        DbnModel {
            layer_sizes: layer_sizes.to_vec(),
            layers,
            trained,
        },
        logs,
    ))
}

/// Compose hidden_probs through every layer; deterministic.
pub fn up_pass(m: &DbnModel, v: &Matrix) -> Result<TopRepresentation> {
    if !m.is_trained() {
        return Err(Error::Untrained);
    }
    let mut acts = v.clone();
    for layer in &m.layers {
        acts = rbm::hidden_probs(layer, &acts)?;
    }
    Ok(TopRepresentation { activations: acts })
}

/// Compose visible_probs from the top representation down to pixels.
pub fn down_pass(m: &DbnModel, top: &TopRepresentation) -> Result<Matrix> {
    if !m.is_trained() {
        return Err(Error::Untrained);
    }
    let mut acts = top.activations.clone();
    for layer in m.layers.iter().rev() {
        acts = rbm::visible_probs(layer, &acts)?;
    }
    Ok(acts)
}

/// down_pass(up_pass(v)).
pub fn reconstruct(m: &DbnModel, v: &Matrix) -> Result<Matrix> {
    down_pass(m, &up_pass(m, v)?)
}

const MAGIC: &[u8; 4] = b"DBNS";
const FORMAT_VERSION: u32 = 1;

/// CRC-32 (IEEE 802.3, reflected, polynomial 0xEDB88320), the checksum used
/// by the model file format.
pub fn crc32(bytes: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (0xEDB8_8320 & mask);
        }
    }
    !crc
}

fn push_matrix(buf: &mut Vec<u8>, m: &Matrix) {
    for &x in m.data() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

/// Serialize a model:
/// magic "DBNS", version u32 LE, layer-size count u32 LE, each layer size
/// u32 LE, then per RBM layer W (row-major), a, b as f64 LE, then a CRC-32
/// of all preceding bytes.
pub fn save_model(m: &DbnModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(m.layer_sizes.len() as u32).to_le_bytes());
    for &s in &m.layer_sizes {
        buf.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for layer in &m.layers {
        push_matrix(&mut buf, &layer.weights);
        push_matrix(&mut buf, &layer.visible_bias);
        push_matrix(&mut buf, &layer.hidden_bias);
    }
    let crc = crc32(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    fs::write(path, buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated {
                expected: self.pos + n,
                actual: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let raw = self.take(rows * cols * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Matrix::new(rows, cols, data)
    }
}

pub fn load_model(path: &Path) -> Result<DbnModel> {
    let bytes = fs::read(path)?;
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            expected: 4,
            actual: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic bytes {:02x?}, expected \"DBNS\"",
            &bytes[..4]
        )));
    }
    if bytes.len() < 8 {
        return Err(Error::Truncated {
            expected: 8,
            actual: bytes.len(),
        });
    }
    // checksum covers everything before the trailing 4 bytes
    let body_len = bytes.len().checked_sub(4).ok_or(Error::Truncated {
        expected: 12,
        actual: bytes.len(),
    })?;
    let stored = u32::from_le_bytes(bytes[body_len..].try_into().unwrap());
    let computed = crc32(&bytes[..body_len]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut r = Reader {
        bytes: &bytes[..body_len],
        pos: 4,
    };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let count = r.u32()? as usize;
    if count < 2 {
        return Err(Error::Format(format!("layer-size count {count} < 2")));
    }
    let mut layer_sizes = Vec::with_capacity(count);
    for _ in 0..count {
        layer_sizes.push(r.u32()? as usize);
    }
    DbnModel::check_sizes(&layer_sizes)?;
    let mut layers = Vec::with_capacity(count - 1);
    for pair in layer_sizes.windows(2) {
        let (nv, nh) = (pair[0], pair[1]);
        let weights = r.matrix(nv, nh)?;
        let visible_bias = r.matrix(1, nv)?;
        let hidden_bias = r.matrix(1, nh)?;
        layers.push(RbmParams {
            weights,
            visible_bias,
            hidden_bias,
        });
    }
    if r.pos != body_len {
        return Err(Error::Format(format!(
            "{} trailing bytes after the last layer",
            body_len - r.pos
        )));
    }
    let trained = vec![true; layers.len()];
    Ok(DbnModel {
        layer_sizes,
        layers,
        trained,
    })
}
