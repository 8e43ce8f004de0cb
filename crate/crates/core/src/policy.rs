//! Controllers that can drive the arena: the two-stream ensemble, the
//! single-network baseline and the scripted expert, plus closed-loop rollouts.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ConfigMap, KvConfig};
use crate::dataset::{ObsLayout, Sample, Source, Trajectory, TrajectoryMeta};
use crate::ebm::{infer, EbmModel, InferenceConfig};
use crate::error::{Error, Result};
use crate::expert::{Expert, ExpertConfig};
use crate::ffbc::FfBcModel;
use crate::hashing::{file_sha256, mix_seed};
use crate::nn::read_checkpoint;
use crate::sim::{self, ActionPair, Observation, SimConfig, StepEvents, WorldState};

pub const DISCRETE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Evolute,
    FfbcBaseline,
    Expert,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Evolute => "evolute",
            Self::FfbcBaseline => "ffbc-baseline",
            Self::Expert => "expert",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "evolute" => Ok(Self::Evolute),
            "ffbc-baseline" => Ok(Self::FfbcBaseline),
            "expert" => Ok(Self::Expert),
            _ => Err(Error::config("kind", format!("unknown policy kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PolicyBundle {
    pub kind: PolicyKind,
    pub ff: Option<FfBcModel>,
    pub ebm: Option<EbmModel>,
    pub inference: InferenceConfig,
    pub expert: ExpertConfig,
}

impl PolicyBundle {
    pub fn evolute(ff: FfBcModel, ebm: EbmModel, inference: InferenceConfig) -> Result<Self> {
        if ff.layout() != ebm.layout() {
            return Err(Error::Shape("ff-bc and ec-bc were trained on different observation layouts".into()));
        }
        inference.validate()?;
        Ok(Self { kind: PolicyKind::Evolute, ff: Some(ff), ebm: Some(ebm), inference, expert: ExpertConfig::default() })
    }

    pub fn baseline(ff: FfBcModel) -> Result<Self> {
        if !ff.has_continuous_head() {
            return Err(Error::InvalidArgument("baseline policy needs an ff-bc model with a continuous head".into()));
        }
        Ok(Self {
            kind: PolicyKind::FfbcBaseline,
            ff: Some(ff),
            ebm: None,
            inference: InferenceConfig::default(),
            expert: ExpertConfig::default(),
        })
    }

    pub fn expert(cfg: ExpertConfig) -> Self {
        Self { kind: PolicyKind::Expert, ff: None, ebm: None, inference: InferenceConfig::default(), expert: cfg }
    }

    pub fn layout(&self) -> Option<ObsLayout> {
        self.ff.as_ref().map(FfBcModel::layout)
    }

    fn ff(&self) -> Result<&FfBcModel> {
        self.ff.as_ref().ok_or_else(|| Error::InvalidArgument("bundle has no ff-bc model".into()))
    }

    /// Action of a learned policy for one observation.
    pub fn act(&self, obs: &Observation, rng: &mut ChaCha8Rng) -> Result<ActionPair> {
        let pred = self.ff()?.predict(obs)?;
        let discrete = pred.discrete.map(|p| p >= DISCRETE_THRESHOLD);
        let continuous = match self.kind {
            PolicyKind::Evolute => {
                let ebm = self.ebm.as_ref().ok_or_else(|| Error::InvalidArgument("bundle has no ec-bc model".into()))?;
                infer(&mut ebm.surface(obs)?, &self.inference, rng)?
            }
            PolicyKind::FfbcBaseline => pred
                .continuous
                .ok_or_else(|| Error::InvalidArgument("ff-bc model has no continuous head".into()))?,
            PolicyKind::Expert => {
                return Err(Error::InvalidArgument("the scripted expert acts on world state; use an Agent".into()))
            }
        };
        Ok(ActionPair::new(continuous[0], continuous[1], discrete[0], discrete[1]))
    }

    /// A per-episode controller. `seed` drives any stochastic inference.
    pub fn agent(&self, seed: u64) -> Agent<'_> {
        let expert = (self.kind == PolicyKind::Expert).then(|| Expert::new(self.expert.clone(), seed));
        Agent { bundle: self, expert, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

pub struct Agent<'a> {
    bundle: &'a PolicyBundle,
    expert: Option<Expert>,
    rng: ChaCha8Rng,
}

impl Agent<'_> {
    /// Learned policies only read `obs`; the expert reads `state`.
    pub fn act(&mut self, state: &WorldState, obs: &Observation) -> Result<ActionPair> {
        match &mut self.expert {
            Some(e) => Ok(e.act(state)),
            None => self.bundle.act(obs, &mut self.rng),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub trajectory: Trajectory,
    pub events: Vec<StepEvents>,
    pub max_ticks: u64,
}

/// Runs one closed-loop episode. The arena layout comes from `seed` and the
/// policy's own randomness from a stream derived from it.
pub fn rollout(bundle: &PolicyBundle, sim_cfg: &SimConfig, episode_id: u64, seed: u64) -> Result<Rollout> {
    let sim_cfg = sim_cfg.with_seed(seed);
    let mut state = sim::reset(&sim_cfg)?;
    let mut agent = bundle.agent(mix_seed(seed, 0xa9e7));
    let max_ticks = sim_cfg.episode_ticks();
    let mut samples = Vec::with_capacity(max_ticks as usize);
    let mut events = Vec::with_capacity(max_ticks as usize);
    loop {
        let observation = sim::observe(&state);
        let action = agent.act(&state, &observation)?;
        samples.push(Sample { tick: state.tick, observation, action });
        let (next, ev) = sim::step(&state, &action)?;
        events.push(ev);
        state = next;
        if ev.episode_over {
            break;
        }
    }
    let source = if bundle.kind == PolicyKind::Expert { Source::Scripted } else { Source::Policy };
    let meta = TrajectoryMeta { config_hash: sim_cfg.layout_hash(), source, seed };
    Ok(Rollout { trajectory: Trajectory { episode_id, samples, meta }, events, max_ticks })
}

/// Seed of evaluation match `i`.
pub fn match_seed(seed: u64, i: u64) -> u64 {
    mix_seed(seed, 0x6d61_7463_6800 + i)
}

/// Runs `matches` rollouts on up to `jobs` threads. Results are ordered by
/// match index regardless of scheduling.
pub fn evaluate(bundle: &PolicyBundle, sim_cfg: &SimConfig, matches: usize, seed: u64, jobs: usize) -> Result<Vec<Rollout>> {
    let jobs = jobs.clamp(1, matches.max(1));
    let mut slots: Vec<Option<Result<Rollout>>> = (0..matches).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<_> = slots.chunks_mut(matches.div_ceil(jobs).max(1)).enumerate().collect();
        let per = matches.div_ceil(jobs).max(1);
        for (c, chunk) in chunks {
            scope.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    let i = (c * per + k) as u64;
                    *slot = Some(rollout(bundle, sim_cfg, i, match_seed(seed, i)));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every slot filled")).collect()
}

/// `key=value` manifest naming the checkpoints of a bundle by path and hash.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleManifest {
    pub kind: PolicyKind,
    pub ff_checkpoint: Option<PathBuf>,
    pub ebm_checkpoint: Option<PathBuf>,
    pub ff_sha256: Option<String>,
    pub ebm_sha256: Option<String>,
    pub inference: InferenceConfig,
    pub expert: ExpertConfig,
}

impl BundleManifest {
    pub fn to_map(&self) -> ConfigMap {
        let mut m = ConfigMap::new();
        m.set("kind", self.kind.as_str());
        if let Some(p) = &self.ff_checkpoint {
            m.set("ff_checkpoint", p.display());
        }
        if let Some(h) = &self.ff_sha256 {
            m.set("ff_sha256", h);
        }
        if let Some(p) = &self.ebm_checkpoint {
            m.set("ebm_checkpoint", p.display());
        }
        if let Some(h) = &self.ebm_sha256 {
            m.set("ebm_sha256", h);
        }
        m.merge(&self.inference.to_map());
        m.merge(&self.expert.to_map());
        m
    }

    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        let kind = map.get("kind").ok_or_else(|| Error::config("kind", "missing"))?.parse()?;
        let mut inference = InferenceConfig::default();
        let mut expert = ExpertConfig::default();
        for (k, v) in map.iter() {
            let known = matches!(k, "kind" | "ff_checkpoint" | "ff_sha256" | "ebm_checkpoint" | "ebm_sha256")
                || inference.set_kv(k, v)?
                || expert.set_kv(k, v)?;
            if !known {
                return Err(Error::config(k, "unknown bundle key"));
            }
        }
        inference.validate()?;
        expert.validate()?;
        Ok(Self {
            kind,
            ff_checkpoint: map.get("ff_checkpoint").map(PathBuf::from),
            ebm_checkpoint: map.get("ebm_checkpoint").map(PathBuf::from),
            ff_sha256: map.get("ff_sha256").map(str::to_string),
            ebm_sha256: map.get("ebm_sha256").map(str::to_string),
            inference,
            expert,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_map().to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_map(&ConfigMap::from_file(path)?)
    }

    /// Loads the referenced checkpoints (paths relative to `base`), checking
    /// recorded hashes.
    pub fn load_bundle(&self, base: &Path) -> Result<PolicyBundle> {
        let load = |p: &Option<PathBuf>, hash: &Option<String>, what: &str| -> Result<crate::nn::Checkpoint> {
            let p = p.as_ref().ok_or_else(|| Error::config(what, "missing checkpoint path"))?;
            let full = base.join(p);
            if let Some(h) = hash {
                let actual = file_sha256(&full)?;
                if &actual != h {
                    return Err(Error::parse(full.display().to_string(), format!("sha256 {actual} does not match manifest {h}")));
                }
            }
            read_checkpoint(&mut std::io::BufReader::new(std::fs::File::open(&full)?))
        };
        match self.kind {
            PolicyKind::Expert => Ok(PolicyBundle::expert(self.expert.clone())),
            PolicyKind::FfbcBaseline => {
                let ff = FfBcModel::from_checkpoint(&load(&self.ff_checkpoint, &self.ff_sha256, "ff_checkpoint")?)?;
                PolicyBundle::baseline(ff)
            }
            PolicyKind::Evolute => {
                let ff = FfBcModel::from_checkpoint(&load(&self.ff_checkpoint, &self.ff_sha256, "ff_checkpoint")?)?;
                let ebm = EbmModel::from_checkpoint(&load(&self.ebm_checkpoint, &self.ebm_sha256, "ebm_checkpoint")?)?;
                PolicyBundle::evolute(ff, ebm, self.inference.clone())
            }
        }
    }
}

/// Reads a bundle manifest and everything it references.
pub fn load_bundle(manifest: &Path) -> Result<PolicyBundle> {
    let m = BundleManifest::read(manifest)?;
    m.load_bundle(manifest.parent().unwrap_or(Path::new(".")))
}
