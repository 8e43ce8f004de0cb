use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{fmt_f64, parse_value, KvConfig};
use crate::error::{Error, Result};

/// Distribution of the fake actions contrasted against each demonstration.
///
/// Steering follows a normal truncated to `[0, 1]`. Throttle mixes a uniform
/// draw with an exponential that decays downward from full throttle, which
/// mimics how triggers are usually held.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeSamplerConfig {
    pub n_fake: usize,
    pub steer_mean: f64,
    pub steer_std: f64,
    pub throttle_rate: f64,
    pub throttle_uniform_weight: f64,
}

impl Default for NegativeSamplerConfig {
    fn default() -> Self {
        Self { n_fake: 64, steer_mean: 0.5, steer_std: 0.25, throttle_rate: 3.0, throttle_uniform_weight: 0.5 }
    }
}

impl KvConfig for NegativeSamplerConfig {
    const KEYS: &'static [&'static str] =
        &["n_fake", "steer_mean", "steer_std", "throttle_rate", "throttle_uniform_weight"];

    fn set_kv(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "n_fake" => self.n_fake = parse_value(key, value)?,
            "steer_mean" => self.steer_mean = parse_value(key, value)?,
            "steer_std" => self.steer_std = parse_value(key, value)?,
            "throttle_rate" => self.throttle_rate = parse_value(key, value)?,
            "throttle_uniform_weight" => self.throttle_uniform_weight = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n_fake", self.n_fake.to_string()),
            ("steer_mean", fmt_f64(self.steer_mean)),
            ("steer_std", fmt_f64(self.steer_std)),
            ("throttle_rate", fmt_f64(self.throttle_rate)),
            ("throttle_uniform_weight", fmt_f64(self.throttle_uniform_weight)),
        ]
    }

    fn validate(&self) -> Result<()> {
        if self.n_fake == 0 {
            return Err(Error::config("n_fake", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.steer_mean) {
            return Err(Error::config("steer_mean", "must lie in [0, 1]"));
        }
        if !(self.steer_std > 0.0 && self.steer_std.is_finite()) {
            return Err(Error::config("steer_std", "must be positive"));
        }
        if !(self.throttle_rate > 0.0 && self.throttle_rate.is_finite()) {
            return Err(Error::config("throttle_rate", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.throttle_uniform_weight) {
            return Err(Error::config("throttle_uniform_weight", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

const MAX_REJECTIONS: usize = 1000;

impl NegativeSamplerConfig {
    pub fn sample_steering<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let normal = Normal::new(self.steer_mean, self.steer_std).expect("validated std");
        for _ in 0..MAX_REJECTIONS {
            let x = normal.sample(rng);
            if (0.0..=1.0).contains(&x) {
                return x;
            }
        }
        self.steer_mean
    }

    pub fn sample_throttle<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        if rng.random::<f64>() < self.throttle_uniform_weight {
            return u;
        }
        // inverse CDF of an exponential truncated to [0, 1]
        let lam = self.throttle_rate;
        let x = -(1.0 - u * (1.0 - (-lam).exp())).ln() / lam;
        (1.0 - x).clamp(0.0, 1.0)
    }
}

/// `n_fake` candidates for each of `batch_size` samples, as a
/// `(batch_size * n_fake) x 2` matrix of (throttle, steering) rows grouped by
/// sample. Fake actions do not depend on the demonstrated ones.
pub fn sample_negatives<R: Rng + ?Sized>(
    cfg: &NegativeSamplerConfig,
    batch_size: usize,
    rng: &mut R,
) -> Array2<f64> {
    let mut out = Array2::zeros((batch_size * cfg.n_fake, 2));
    for mut row in out.rows_mut() {
        row[0] = cfg.sample_throttle(rng);
        row[1] = cfg.sample_steering(rng);
    }
    out
}
