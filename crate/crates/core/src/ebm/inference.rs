use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::loss::softmax_neg;
use crate::config::{fmt_f64, parse_value, KvConfig};
use crate::error::{Error, Result};

pub const ACTION_MIN: f64 = 0.0;
pub const ACTION_MAX: f64 = 1.0;

/// Energies of a batch of candidate actions for one fixed observation.
pub trait EnergySurface {
    fn energies(&mut self, actions: &[[f64; 2]]) -> Result<Vec<f64>>;
}

/// Adapts a pointwise energy function.
pub struct FnSurface<F>(pub F);

impl<F: FnMut([f64; 2]) -> f64> EnergySurface for FnSurface<F> {
    fn energies(&mut self, actions: &[[f64; 2]]) -> Result<Vec<f64>> {
        Ok(actions.iter().map(|&a| (self.0)(a)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InferenceMode {
    Grid,
    NoGrad,
}

impl InferenceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Grid => "grid",
            Self::NoGrad => "nograd",
        }
    }
}

impl std::str::FromStr for InferenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(Self::Grid),
            "nograd" => Ok(Self::NoGrad),
            _ => Err(Error::config("infer_mode", format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceConfig {
    pub mode: InferenceMode,
    pub n_pin: usize,
    pub n_infer: usize,
    pub n_iter: usize,
    pub sigma: f64,
    pub eta: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { mode: InferenceMode::Grid, n_pin: 33, n_infer: 256, n_iter: 3, sigma: 0.33, eta: 0.5 }
    }
}

impl KvConfig for InferenceConfig {
    const KEYS: &'static [&'static str] = &["infer_mode", "n_pin", "n_infer", "n_iter", "infer_sigma", "infer_eta"];

    fn set_kv(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "infer_mode" => self.mode = value.parse()?,
            "n_pin" => self.n_pin = parse_value(key, value)?,
            "n_infer" => self.n_infer = parse_value(key, value)?,
            "n_iter" => self.n_iter = parse_value(key, value)?,
            "infer_sigma" => self.sigma = parse_value(key, value)?,
            "infer_eta" => self.eta = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("infer_mode", self.mode.as_str().into()),
            ("n_pin", self.n_pin.to_string()),
            ("n_infer", self.n_infer.to_string()),
            ("n_iter", self.n_iter.to_string()),
            ("infer_sigma", fmt_f64(self.sigma)),
            ("infer_eta", fmt_f64(self.eta)),
        ]
    }

    fn validate(&self) -> Result<()> {
        if self.n_pin < 2 {
            return Err(Error::config("n_pin", "must be >= 2"));
        }
        if self.n_infer < 2 {
            return Err(Error::config("n_infer", "must be >= 2"));
        }
        if self.n_iter < 1 {
            return Err(Error::config("n_iter", "must be >= 1"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("infer_sigma", "must be positive"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::config("infer_eta", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// `n_pin` evenly spaced values over the action bounds, endpoints included.
pub fn pins(n_pin: usize) -> Vec<f64> {
    let span = ACTION_MAX - ACTION_MIN;
    (0..n_pin).map(|i| ACTION_MIN + span * i as f64 / (n_pin - 1) as f64).collect()
}

/// The full grid in lexicographic order (throttle major).
pub fn grid_candidates(n_pin: usize) -> Vec<[f64; 2]> {
    let p = pins(n_pin);
    p.iter().flat_map(|&t| p.iter().map(move |&s| [t, s])).collect()
}

/// Exhaustive search over the pin grid. Returns the lowest-energy action and
/// its energy; ties go to the lexicographically smallest action.
pub fn infer_grid<E: EnergySurface + ?Sized>(surface: &mut E, n_pin: usize) -> Result<([f64; 2], f64)> {
    if n_pin < 2 {
        return Err(Error::InvalidArgument("n_pin must be >= 2".into()));
    }
    let cands = grid_candidates(n_pin);
    let e = surface.energies(&cands)?;
    let mut best = 0;
    for i in 1..e.len() {
        if e[i] < e[best] {
            best = i;
        }
    }
    Ok((cands[best], e[best]))
}

/// Derivative-free sampler: start from uniform samples, then repeatedly
/// weight by `softmax(-E)`, resample with replacement, perturb with shrinking
/// Gaussian noise and clip. The softmax of every iteration is returned along
/// with the most probable sample of the last one.
pub fn infer_nograd_traced<E, R>(
    surface: &mut E,
    cfg: &InferenceConfig,
    rng: &mut R,
) -> Result<([f64; 2], Vec<Vec<f64>>)>
where
    E: EnergySurface + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let mut samples: Vec<[f64; 2]> = (0..cfg.n_infer)
        .map(|_| [rng.random_range(ACTION_MIN..=ACTION_MAX), rng.random_range(ACTION_MIN..=ACTION_MAX)])
        .collect();
    let mut sigma = cfg.sigma;
    let mut trace = Vec::with_capacity(cfg.n_iter);
    for it in 0..cfg.n_iter {
        let e = surface.energies(&samples)?;
        if let Some(bad) = e.iter().find(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("non-finite energy {bad} during inference")));
        }
        let probs = softmax_neg(&e);
        if it + 1 < cfg.n_iter {
            let idx = WeightedIndex::new(&probs).map_err(|e| Error::Numeric(e.to_string()))?;
            let noise = Normal::new(0.0, sigma).map_err(|e| Error::Numeric(e.to_string()))?;
            samples = (0..cfg.n_infer)
                .map(|_| {
                    let s = samples[idx.sample(rng)];
                    [
                        (s[0] + noise.sample(rng)).clamp(ACTION_MIN, ACTION_MAX),
                        (s[1] + noise.sample(rng)).clamp(ACTION_MIN, ACTION_MAX),
                    ]
                })
                .collect();
            sigma *= cfg.eta;
        }
        trace.push(probs);
    }
    let last = trace.last().expect("n_iter >= 1");
    let mut best = 0;
    for i in 1..last.len() {
        if last[i] > last[best] {
            best = i;
        }
    }
    Ok((samples[best], trace))
}

pub fn infer_nograd<E, R>(surface: &mut E, cfg: &InferenceConfig, rng: &mut R) -> Result<[f64; 2]>
where
    E: EnergySurface + ?Sized,
    R: Rng + ?Sized,
{
    Ok(infer_nograd_traced(surface, cfg, rng)?.0)
}

/// Dispatches on `cfg.mode`.
pub fn infer<E, R>(surface: &mut E, cfg: &InferenceConfig, rng: &mut R) -> Result<[f64; 2]>
where
    E: EnergySurface + ?Sized,
    R: Rng + ?Sized,
{
    match cfg.mode {
        InferenceMode::Grid => Ok(infer_grid(surface, cfg.n_pin)?.0),
        InferenceMode::NoGrad => infer_nograd(surface, cfg, rng),
    }
}
