//! Shared training-loop settings and per-epoch bookkeeping.

use crate::config::{fmt_f64, parse_value, KvConfig};
use crate::error::{Error, Result};
use crate::nn::AdamConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 20, batch_size: 256, lr: 1e-3, seed: 0 }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, ..AdamConfig::default() }
    }
}

impl KvConfig for TrainConfig {
    const KEYS: &'static [&'static str] = &["epochs", "batch_size", "lr", "train_seed"];

    fn set_kv(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "lr" => self.lr = parse_value(key, value)?,
            "train_seed" => self.seed = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", fmt_f64(self.lr)),
            ("train_seed", self.seed.to_string()),
        ]
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", "must be positive"));
        }
        Ok(())
    }
}

/// Fails with a numeric error naming the batch if `loss` is not finite.
pub fn check_loss(loss: f64, what: &str, batch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} loss is {loss} at batch {batch}")))
    }
}

/// Running mean of per-sample losses weighted by batch size.
#[derive(Debug, Default, Clone, Copy)]
pub struct LossMeter {
    sum: f64,
    count: usize,
}

impl LossMeter {
    pub fn add(&mut self, mean_loss: f64, batch_size: usize) {
        self.sum += mean_loss * batch_size as f64;
        self.count += batch_size;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}
