use std::path::Path;

use evolute_core::config::{fmt_f64, parse_value, ConfigMap, KvConfig};
use evolute_core::ebm::{InferenceConfig, NegativeSamplerConfig};
use evolute_core::encoders::ArchConfig;
use evolute_core::expert::ExpertConfig;
use evolute_core::metrics::DEFAULT_RESOLUTION;
use evolute_core::training::TrainConfig;
use evolute_core::{Error, Result, SimConfig};

/// Every tunable of the pipeline, read from one flat `key=value` namespace.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    pub sim: SimConfig,
    pub expert: ExpertConfig,
    pub train: TrainConfig,
    pub arch: ArchConfig,
    pub sampler: NegativeSamplerConfig,
    pub inference: InferenceConfig,
    pub extra: Extra,
}

#[derive(Debug, Clone)]
pub struct Extra {
    pub ff_epochs: Option<usize>,
    pub ebm_epochs: Option<usize>,
    pub val_fraction: f64,
    pub density_resolution: usize,
}

impl Default for Extra {
    fn default() -> Self {
        Self { ff_epochs: None, ebm_epochs: None, val_fraction: 0.0, density_resolution: DEFAULT_RESOLUTION }
    }
}

impl KvConfig for Extra {
    const KEYS: &'static [&'static str] = &["ff_epochs", "ebm_epochs", "val_fraction", "density_resolution"];

    fn set_kv(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "ff_epochs" => self.ff_epochs = Some(parse_value(key, value)?),
            "ebm_epochs" => self.ebm_epochs = Some(parse_value(key, value)?),
            "val_fraction" => self.val_fraction = parse_value(key, value)?,
            "density_resolution" => self.density_resolution = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn to_kv(&self) -> Vec<(&'static str, String)> {
        let mut v = vec![
            ("val_fraction", fmt_f64(self.val_fraction)),
            ("density_resolution", self.density_resolution.to_string()),
        ];
        if let Some(e) = self.ff_epochs {
            v.push(("ff_epochs", e.to_string()));
        }
        if let Some(e) = self.ebm_epochs {
            v.push(("ebm_epochs", e.to_string()));
        }
        v
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::config("val_fraction", "must lie in [0, 1)"));
        }
        if self.density_resolution == 0 {
            return Err(Error::config("density_resolution", "must be >= 1"));
        }
        Ok(())
    }
}

impl Settings {
    /// Defaults, then `file`, then `overrides` in order.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut map = match file {
            Some(p) => ConfigMap::from_file(p)?,
            None => ConfigMap::new(),
        };
        for o in overrides {
            map.set_pair(o)?;
        }
        let mut s = Settings::default();
        for (k, v) in map.iter() {
            let known = s.sim.set_kv(k, v)?
                || s.expert.set_kv(k, v)?
                || s.train.set_kv(k, v)?
                || s.arch.set_kv(k, v)?
                || s.sampler.set_kv(k, v)?
                || s.inference.set_kv(k, v)?
                || s.extra.set_kv(k, v)?;
            if !known {
                return Err(Error::config(k, "unknown configuration key"));
            }
        }
        s.sim.validate()?;
        s.expert.validate()?;
        s.train.validate()?;
        s.arch.validate()?;
        s.sampler.validate()?;
        s.inference.validate()?;
        s.extra.validate()?;
        Ok(s)
    }

    /// Full snapshot of the effective settings.
    pub fn snapshot(&self) -> ConfigMap {
        let mut m = self.sim.to_map();
        for part in [
            self.expert.to_map(),
            self.train.to_map(),
            self.arch.to_map(),
            self.sampler.to_map(),
            self.inference.to_map(),
            self.extra.to_map(),
        ] {
            m.merge(&part);
        }
        m
    }
}
