//! Run configurations, loadable from JSON with per-field defaults.
//!
//! The defaults are the desk-scale profile (small dims, aggressive
//! learning rate, dozens of epochs) so the whole pipeline finishes in
//! seconds on synthetic corpora. The published protocol — 512-d
//! embeddings and projections, lr 1e-4 over 200 epochs — is reachable by
//! setting the corresponding fields (`model = ModelConfig::full_scale()`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::corpus::CropTable;
use crate::error::{Error, Result};
use crate::nn::ModelConfig;

pub const SEED_ENV: &str = "AUSCULTA_SEED";

fn d_batch_size() -> usize {
    4
}
fn d_epochs() -> usize {
    40
}
fn d_lr() -> f64 {
    1e-3
}
fn d_lr_decay() -> f64 {
    0.99
}
fn d_seed() -> u64 {
    42
}
fn d_probe_epochs() -> usize {
    64
}
fn d_probe_lr() -> f64 {
    1e-4
}
fn d_probe_batch() -> usize {
    16
}

/// Contrastive pretraining configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// JSONL corpus manifest.
    pub manifest: PathBuf,
    /// Directory holding `audio/` and `features/` from preprocessing.
    pub data_dir: PathBuf,
    /// Where the checkpoint and training log land.
    pub out_dir: PathBuf,
    #[serde(default = "d_batch_size")]
    pub batch_size: usize,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_lr_decay")]
    pub lr_decay: f64,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub crop_table: CropTable,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default = "d_seed")]
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(manifest: PathBuf, data_dir: PathBuf, out_dir: PathBuf) -> TrainConfig {
        TrainConfig {
            manifest,
            data_dir,
            out_dir,
            batch_size: d_batch_size(),
            epochs: d_epochs(),
            lr: d_lr(),
            lr_decay: d_lr_decay(),
            model: ModelConfig::default(),
            crop_table: CropTable::default(),
            augment: AugmentConfig::default(),
            seed: d_seed(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::config("batch_size must be >= 2"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr must be positive and finite"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::config("lr_decay must be in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProbeMode {
    /// Freeze the encoder, train only the task head on precomputed
    /// embeddings.
    #[default]
    Linear,
    /// Backpropagate through the encoder as well.
    Full,
}

/// Downstream probe configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub manifest: PathBuf,
    pub data_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub out_dir: PathBuf,
    /// Task id from the benchmark registry (`T1` .. `T16`).
    pub task: String,
    #[serde(default)]
    pub mode: ProbeMode,
    #[serde(default = "d_probe_epochs")]
    pub epochs: usize,
    #[serde(default = "d_probe_lr")]
    pub lr: f64,
    #[serde(default = "d_lr_decay")]
    pub lr_decay: f64,
    #[serde(default = "d_probe_batch")]
    pub batch_size: usize,
    /// Override the task's default segment length.
    #[serde(default)]
    pub chunk_secs: Option<u32>,
    #[serde(default = "d_seed")]
    pub seed: u64,
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("probe epochs and batch_size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr must be positive and finite"));
        }
        if self.chunk_secs == Some(0) {
            return Err(Error::config("chunk_secs must be positive"));
        }
        Ok(())
    }
}

pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
}

/// Seed precedence: `AUSCULTA_SEED` env var > configured value.
pub fn effective_seed(configured: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .parse::<u64>()
            .map_err(|_| Error::config(format!("{SEED_ENV} must be an unsigned integer, got {s:?}"))),
        Err(_) => Ok(configured),
    }
}
