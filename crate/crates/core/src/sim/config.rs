use crate::config::{fmt_f64, parse_value, KvConfig};
use crate::error::{Error, Result};

/// Arena and episode parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Side of the square arena in meters.
    pub arena_size: f64,
    /// Simulation ticks per second.
    pub tick_rate: f64,
    /// Episode length in seconds.
    pub episode_length: f64,
    pub n_obstacles: usize,
    pub n_enemies: usize,
    pub n_rays: usize,
    /// Occupancy cells per side.
    pub grid_res: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            arena_size: 200.0,
            tick_rate: 20.0,
            episode_length: 120.0,
            n_obstacles: 12,
            n_enemies: 3,
            n_rays: 32,
            grid_res: 16,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.tick_rate
    }

    pub fn episode_ticks(&self) -> u64 {
        (self.episode_length * self.tick_rate).round() as u64
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Stable 64-bit hash of every field except the seed.
    pub fn layout_hash(&self) -> u64 {
        let mut map = self.to_map();
        map.set("seed", 0);
        crate::hashing::hash64(map.to_text().as_bytes())
    }
}

impl KvConfig for SimConfig {
    const KEYS: &'static [&'static str] = &[
        "arena_size",
        "tick_rate",
        "episode_length",
        "n_obstacles",
        "n_enemies",
        "n_rays",
        "grid_res",
        "seed",
    ];

    fn set_kv(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "arena_size" => self.arena_size = parse_value(key, value)?,
            "tick_rate" => self.tick_rate = parse_value(key, value)?,
            "episode_length" => self.episode_length = parse_value(key, value)?,
            "n_obstacles" => self.n_obstacles = parse_value(key, value)?,
            "n_enemies" => self.n_enemies = parse_value(key, value)?,
            "n_rays" => self.n_rays = parse_value(key, value)?,
            "grid_res" => self.grid_res = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("arena_size", fmt_f64(self.arena_size)),
            ("tick_rate", fmt_f64(self.tick_rate)),
            ("episode_length", fmt_f64(self.episode_length)),
            ("n_obstacles", self.n_obstacles.to_string()),
            ("n_enemies", self.n_enemies.to_string()),
            ("n_rays", self.n_rays.to_string()),
            ("grid_res", self.grid_res.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    fn validate(&self) -> Result<()> {
        if !(self.arena_size.is_finite() && self.arena_size >= 80.0) {
            return Err(Error::config("arena_size", "must be at least 80 m"));
        }
        if !(self.tick_rate.is_finite() && self.tick_rate > 0.0) {
            return Err(Error::config("tick_rate", "must be > 0"));
        }
        if !(self.episode_length.is_finite() && self.episode_length > 0.0) {
            return Err(Error::config("episode_length", "must be > 0"));
        }
        if self.episode_ticks() == 0 {
            return Err(Error::config("episode_length", "shorter than one tick"));
        }
        if self.n_rays < 4 {
            return Err(Error::config("n_rays", "must be >= 4"));
        }
        if self.grid_res < 4 {
            return Err(Error::config("grid_res", "must be >= 4"));
        }
        Ok(())
    }
}
