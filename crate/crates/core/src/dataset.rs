//! Demonstration storage: the `.evtraj` binary format, a line-oriented text
//! export, train/validation splitting and shuffled minibatching.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! magic "EVTRAJ\0\0" | major u16 | minor u16
//! config text (u32 length + UTF-8 key=value lines)
//! n_rays u32 | grid_res u32 | telemetry_width u32
//! n_trajectories u32 | n_samples u64
//! per trajectory: 'T' | episode_id u64 | source u8 | seed u64 | config_hash u64 | len u32
//!   per sample:   'S' | tick u64 | rays f32×n_rays | occupancy f32×grid_res² |
//!                 telemetry f32×6 | continuous f32×2 | discrete u8×2
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigMap, KvConfig};
use crate::error::{Error, Result};
use crate::sim::consts::{SECONDARY_AMMO, V_MAX};
use crate::sim::{ActionPair, Observation, SimConfig};

pub const EVTRAJ_MAGIC: &[u8; 8] = b"EVTRAJ\0\0";
pub const EVTRAJ_MAJOR: u16 = 1;
pub const EVTRAJ_MINOR: u16 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Scripted,
    Human,
    /// Closed-loop rollout of a learned policy.
    Policy,
}

impl Source {
    fn code(self) -> u8 {
        match self {
            Source::Scripted => 0,
            Source::Human => 1,
            Source::Policy => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Source::Scripted),
            1 => Some(Source::Human),
            2 => Some(Source::Policy),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub config_hash: u64,
    pub source: Source,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub tick: u64,
    pub observation: Observation,
    pub action: ActionPair,
}

/// One episode of `(observation, action)` pairs in tick order.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub episode_id: u64,
    pub samples: Vec<Sample>,
    pub meta: TrajectoryMeta,
}

/// Shape of a flattened observation and the constants used to scale it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsLayout {
    pub n_rays: usize,
    pub grid_res: usize,
    pub arena_size: f64,
}

impl ObsLayout {
    pub fn from_sim(cfg: &SimConfig) -> Self {
        Self { n_rays: cfg.n_rays, grid_res: cfg.grid_res, arena_size: cfg.arena_size }
    }

    pub fn occupancy_width(&self) -> usize {
        self.grid_res * self.grid_res
    }

    pub fn telemetry_width(&self) -> usize {
        Observation::TELEMETRY_WIDTH
    }

    pub fn feature_width(&self) -> usize {
        self.n_rays + self.occupancy_width() + self.telemetry_width()
    }

    pub fn check(&self, obs: &Observation) -> Result<()> {
        if obs.depth_rays.len() != self.n_rays || obs.occupancy.len() != self.occupancy_width() {
            return Err(Error::Shape(format!(
                "observation has {} rays / {} cells, layout expects {} / {}",
                obs.depth_rays.len(),
                obs.occupancy.len(),
                self.n_rays,
                self.occupancy_width()
            )));
        }
        Ok(())
    }

    /// Writes the scaled feature vector of `obs` into `out`.
    ///
    /// Rays and occupancy pass through; telemetry is scaled to roughly unit
    /// range (position by arena size, speed by top speed, ammo by capacity).
    pub fn write_features(&self, obs: &Observation, out: &mut [f64]) {
        let (rays, rest) = out.split_at_mut(self.n_rays);
        let (occ, tel) = rest.split_at_mut(self.occupancy_width());
        for (o, &v) in rays.iter_mut().zip(&obs.depth_rays) {
            *o = v as f64;
        }
        for (o, &v) in occ.iter_mut().zip(&obs.occupancy) {
            *o = v as f64;
        }
        let t = &obs.telemetry;
        tel[0] = 2.0 * t[0] as f64 / self.arena_size - 1.0;
        tel[1] = 2.0 * t[1] as f64 / self.arena_size - 1.0;
        tel[2] = t[2] as f64;
        tel[3] = t[3] as f64;
        tel[4] = t[4] as f64 / V_MAX;
        tel[5] = t[5] as f64 / SECONDARY_AMMO as f64;
    }

    pub fn features(&self, observations: &[&Observation]) -> Result<Array2<f64>> {
        let mut m = Array2::zeros((observations.len(), self.feature_width()));
        for (i, obs) in observations.iter().enumerate() {
            self.check(obs)?;
            self.write_features(obs, m.row_mut(i).as_slice_mut().expect("row-major"));
        }
        Ok(m)
    }

    pub fn to_meta(&self) -> String {
        format!("n_rays={}\ngrid_res={}\narena_size={:?}\n", self.n_rays, self.grid_res, self.arena_size)
    }

    pub fn from_meta(map: &ConfigMap) -> Result<Self> {
        let get = |k: &str| map.get(k).ok_or_else(|| Error::config(k, "missing from layout metadata"));
        Ok(Self {
            n_rays: crate::config::parse_value("n_rays", get("n_rays")?)?,
            grid_res: crate::config::parse_value("grid_res", get("grid_res")?)?,
            arena_size: crate::config::parse_value("arena_size", get("arena_size")?)?,
        })
    }
}

/// A loaded demonstration set with the arena configuration it was recorded in.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sim_config: SimConfig,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn layout(&self) -> ObsLayout {
        ObsLayout::from_sim(&self.sim_config)
    }

    pub fn n_samples(&self) -> usize {
        self.trajectories.iter().map(|t| t.samples.len()).sum()
    }

    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.trajectories.iter().flat_map(|t| t.samples.iter())
    }
}

fn check_sample(s: &Sample, layout: &ObsLayout) -> std::result::Result<(), String> {
    let o = &s.observation;
    layout.check(o).map_err(|e| e.to_string())?;
    if !o.depth_rays.iter().chain(&o.occupancy).all(|v| (0.0..=1.0).contains(v)) {
        return Err("sensor value outside [0, 1]".into());
    }
    if !o.telemetry.iter().all(|v| v.is_finite()) {
        return Err("non-finite telemetry".into());
    }
    if !s.action.is_valid() {
        return Err("continuous action outside [0, 1]".into());
    }
    Ok(())
}

fn check_trajectory(t: &Trajectory) -> std::result::Result<(), String> {
    if t.samples.is_empty() {
        return Err(format!("trajectory {} is empty", t.episode_id));
    }
    if t.samples.windows(2).any(|w| w[1].tick <= w[0].tick) {
        return Err(format!("trajectory {} ticks not strictly increasing", t.episode_id));
    }
    Ok(())
}

pub fn write_binary<W: Write>(w: &mut W, dataset: &Dataset) -> Result<()> {
    let layout = dataset.layout();
    for t in &dataset.trajectories {
        check_trajectory(t).map_err(Error::InvalidArgument)?;
    }
    w.write_all(EVTRAJ_MAGIC)?;
    w.write_u16::<LE>(EVTRAJ_MAJOR)?;
    w.write_u16::<LE>(EVTRAJ_MINOR)?;
    let cfg_text = dataset.sim_config.to_map().to_text();
    w.write_u32::<LE>(cfg_text.len() as u32)?;
    w.write_all(cfg_text.as_bytes())?;
    w.write_u32::<LE>(layout.n_rays as u32)?;
    w.write_u32::<LE>(layout.grid_res as u32)?;
    w.write_u32::<LE>(layout.telemetry_width() as u32)?;
    w.write_u32::<LE>(dataset.trajectories.len() as u32)?;
    w.write_u64::<LE>(dataset.n_samples() as u64)?;
    for t in &dataset.trajectories {
        w.write_u8(b'T')?;
        w.write_u64::<LE>(t.episode_id)?;
        w.write_u8(t.meta.source.code())?;
        w.write_u64::<LE>(t.meta.seed)?;
        w.write_u64::<LE>(t.meta.config_hash)?;
        w.write_u32::<LE>(t.samples.len() as u32)?;
        for s in &t.samples {
            layout.check(&s.observation)?;
            w.write_u8(b'S')?;
            w.write_u64::<LE>(s.tick)?;
            for &v in s.observation.depth_rays.iter().chain(&s.observation.occupancy) {
                w.write_f32::<LE>(v)?;
            }
            for &v in s.observation.telemetry.iter().chain(&s.action.continuous) {
                w.write_f32::<LE>(v)?;
            }
            w.write_u8(s.action.discrete[0] as u8)?;
            w.write_u8(s.action.discrete[1] as u8)?;
        }
    }
    Ok(())
}

fn record_err(index: u64, msg: impl std::fmt::Display) -> Error {
    Error::parse(format!("record {index}"), msg.to_string())
}

pub fn read_binary<R: Read>(r: &mut R) -> Result<Dataset> {
    let mut magic = [0u8; 8];
    match r.read_exact(&mut magic) {
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Err(Error::EmptyDataset),
        other => other?,
    }
    if &magic != EVTRAJ_MAGIC {
        return Err(Error::parse("header", "not an evtraj file"));
    }
    let major = r.read_u16::<LE>()?;
    let minor = r.read_u16::<LE>()?;
    if major != EVTRAJ_MAJOR {
        return Err(Error::UnsupportedVersion { major, minor, expected: EVTRAJ_MAJOR });
    }
    let hdr = |e: std::io::Error| Error::parse("header", e.to_string());
    let cfg_len = r.read_u32::<LE>().map_err(hdr)? as usize;
    let mut cfg_bytes = vec![0u8; cfg_len];
    r.read_exact(&mut cfg_bytes).map_err(hdr)?;
    let cfg_text = String::from_utf8(cfg_bytes).map_err(|_| Error::parse("header", "config not utf-8"))?;
    let sim_config = SimConfig::from_map(&ConfigMap::parse(&cfg_text)?)?;
    let n_rays = r.read_u32::<LE>().map_err(hdr)? as usize;
    let grid_res = r.read_u32::<LE>().map_err(hdr)? as usize;
    let tel = r.read_u32::<LE>().map_err(hdr)? as usize;
    if n_rays != sim_config.n_rays || grid_res != sim_config.grid_res || tel != Observation::TELEMETRY_WIDTH {
        return Err(Error::parse("header", "layout descriptor disagrees with config"));
    }
    let layout = ObsLayout::from_sim(&sim_config);
    let n_traj = r.read_u32::<LE>().map_err(hdr)?;
    let n_total = r.read_u64::<LE>().map_err(hdr)?;
    if n_traj == 0 {
        return Err(Error::EmptyDataset);
    }

    let mut trajectories = Vec::with_capacity(n_traj as usize);
    let mut index: u64 = 0;
    let mut buf = vec![0f32; n_rays + grid_res * grid_res + tel + 2];
    for _ in 0..n_traj {
        let io = |e: std::io::Error| record_err(index, e);
        let tag = r.read_u8().map_err(io)?;
        if tag != b'T' {
            return Err(record_err(index, format!("expected trajectory tag, found {tag:#04x}")));
        }
        let episode_id = r.read_u64::<LE>().map_err(io)?;
        let source = Source::from_code(r.read_u8().map_err(io)?)
            .ok_or_else(|| record_err(index, "unknown source"))?;
        let seed = r.read_u64::<LE>().map_err(io)?;
        let config_hash = r.read_u64::<LE>().map_err(io)?;
        let len = r.read_u32::<LE>().map_err(io)?;
        let mut samples = Vec::with_capacity(len as usize);
        for _ in 0..len {
            let io = |e: std::io::Error| record_err(index, e);
            let tag = r.read_u8().map_err(io)?;
            if tag != b'S' {
                return Err(record_err(index, format!("expected sample tag, found {tag:#04x}")));
            }
            let tick = r.read_u64::<LE>().map_err(io)?;
            r.read_f32_into::<LE>(&mut buf).map_err(io)?;
            let d0 = r.read_u8().map_err(io)?;
            let d1 = r.read_u8().map_err(io)?;
            if d0 > 1 || d1 > 1 {
                return Err(record_err(index, "discrete action not 0 or 1"));
            }
            let (rays, rest) = buf.split_at(n_rays);
            let (occ, rest) = rest.split_at(grid_res * grid_res);
            let sample = Sample {
                tick,
                observation: Observation {
                    depth_rays: rays.to_vec(),
                    occupancy: occ.to_vec(),
                    telemetry: rest[..tel].try_into().expect("telemetry width"),
                },
                action: ActionPair { continuous: [rest[tel], rest[tel + 1]], discrete: [d0 == 1, d1 == 1] },
            };
            check_sample(&sample, &layout).map_err(|m| record_err(index, m))?;
            samples.push(sample);
            index += 1;
        }
        let t = Trajectory { episode_id, samples, meta: TrajectoryMeta { config_hash, source, seed } };
        check_trajectory(&t).map_err(|m| record_err(index, m))?;
        trajectories.push(t);
    }
    if index != n_total {
        return Err(Error::parse("header", format!("header announced {n_total} samples, found {index}")));
    }
    Ok(Dataset { sim_config, trajectories })
}

pub fn save(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_binary(&mut w, dataset)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Dataset> {
    read_binary(&mut BufReader::new(File::open(path)?))
}

/// Loads several files into one dataset. Files whose arena configuration
/// differs from the first are still merged but reported in the returned
/// warnings (and logged).
pub fn load_many(paths: &[&Path]) -> Result<(Dataset, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut merged: Option<Dataset> = None;
    for path in paths {
        let ds = load(path)?;
        match &mut merged {
            None => merged = Some(ds),
            Some(m) => {
                if ds.sim_config.layout_hash() != m.sim_config.layout_hash() {
                    let msg = format!("{}: arena configuration differs from the first file", path.display());
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
                if ds.layout().feature_width() != m.layout().feature_width() {
                    return Err(Error::Shape(format!("{}: observation layout differs", path.display())));
                }
                m.trajectories.extend(ds.trajectories);
            }
        }
    }
    merged.map(|d| (d, warnings)).ok_or(Error::EmptyDataset)
}

#[derive(Serialize, Deserialize)]
struct TextHeader {
    format: String,
    version: String,
    config: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum TextRecord {
    Trajectory { episode_id: u64, meta: TrajectoryMeta },
    Sample { tick: u64, rays: Vec<f32>, occupancy: Vec<f32>, telemetry: [f32; 6], continuous: [f32; 2], discrete: [u8; 2] },
}

/// Human-readable export: a header line, then one JSON object per
/// trajectory marker and per sample.
pub fn write_text<W: Write>(w: &mut W, dataset: &Dataset) -> Result<()> {
    let hdr = TextHeader {
        format: "evtraj-text".into(),
        version: format!("{EVTRAJ_MAJOR}.{EVTRAJ_MINOR}"),
        config: dataset.sim_config.to_map().to_text(),
    };
    let json = |e: serde_json::Error| Error::InvalidArgument(e.to_string());
    writeln!(w, "{}", serde_json::to_string(&hdr).map_err(json)?)?;
    for t in &dataset.trajectories {
        let rec = TextRecord::Trajectory { episode_id: t.episode_id, meta: t.meta };
        writeln!(w, "{}", serde_json::to_string(&rec).map_err(json)?)?;
        for s in &t.samples {
            let rec = TextRecord::Sample {
                tick: s.tick,
                rays: s.observation.depth_rays.clone(),
                occupancy: s.observation.occupancy.clone(),
                telemetry: s.observation.telemetry,
                continuous: s.action.continuous,
                discrete: [s.action.discrete[0] as u8, s.action.discrete[1] as u8],
            };
            writeln!(w, "{}", serde_json::to_string(&rec).map_err(json)?)?;
        }
    }
    Ok(())
}

pub fn read_text<R: BufRead>(r: R) -> Result<Dataset> {
    let mut lines = r.lines().enumerate();
    let (_, first) = lines.next().ok_or(Error::EmptyDataset)?;
    let hdr: TextHeader =
        serde_json::from_str(&first?).map_err(|e| Error::parse("line 1", e.to_string()))?;
    if hdr.format != "evtraj-text" {
        return Err(Error::parse("line 1", "not an evtraj text export"));
    }
    let major: u16 = hdr.version.split('.').next().and_then(|m| m.parse().ok()).unwrap_or(0);
    if major != EVTRAJ_MAJOR {
        return Err(Error::UnsupportedVersion { major, minor: 0, expected: EVTRAJ_MAJOR });
    }
    let sim_config = SimConfig::from_map(&ConfigMap::parse(&hdr.config)?)?;
    let layout = ObsLayout::from_sim(&sim_config);
    let mut trajectories: Vec<Trajectory> = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let loc = format!("line {}", idx + 1);
        if line.trim().is_empty() {
            continue;
        }
        let rec: TextRecord = serde_json::from_str(&line).map_err(|e| Error::parse(&loc, e.to_string()))?;
        match rec {
            TextRecord::Trajectory { episode_id, meta } => {
                if let Some(prev) = trajectories.last() {
                    check_trajectory(prev).map_err(|m| Error::parse(&loc, m))?;
                }
                trajectories.push(Trajectory { episode_id, samples: Vec::new(), meta });
            }
            TextRecord::Sample { tick, rays, occupancy, telemetry, continuous, discrete } => {
                if discrete.iter().any(|&d| d > 1) {
                    return Err(Error::parse(&loc, "discrete action not 0 or 1"));
                }
                let sample = Sample {
                    tick,
                    observation: Observation { depth_rays: rays, occupancy, telemetry },
                    action: ActionPair { continuous, discrete: [discrete[0] == 1, discrete[1] == 1] },
                };
                check_sample(&sample, &layout).map_err(|m| Error::parse(&loc, m))?;
                trajectories
                    .last_mut()
                    .ok_or_else(|| Error::parse(&loc, "sample before any trajectory marker"))?
                    .samples
                    .push(sample);
            }
        }
    }
    match trajectories.last() {
        None => return Err(Error::EmptyDataset),
        Some(t) => check_trajectory(t).map_err(|m| Error::parse("end of file", m))?,
    }
    Ok(Dataset { sim_config, trajectories })
}

/// Splits whole trajectories into `(train, validation)` after a seeded shuffle.
pub fn split(
    trajectories: Vec<Trajectory>,
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<Trajectory>, Vec<Trajectory>)> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::InvalidArgument(format!("val_fraction {val_fraction} not in [0, 1)")));
    }
    let n = trajectories.len();
    let n_val = (n as f64 * val_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_val = vec![false; n];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (t, v) in trajectories.into_iter().zip(is_val) {
        if v {
            val.push(t)
        } else {
            train.push(t)
        }
    }
    Ok((train, val))
}

/// A minibatch of scaled features and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub observations: Array2<f64>,
    pub continuous_targets: Array2<f64>,
    pub discrete_targets: Array2<f64>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.observations.nrows()
    }

    pub fn from_samples(samples: &[&Sample], layout: &ObsLayout) -> Result<Self> {
        let obs: Vec<&Observation> = samples.iter().map(|s| &s.observation).collect();
        let observations = layout.features(&obs)?;
        let continuous_targets = Array2::from_shape_fn((samples.len(), 2), |(i, j)| {
            samples[i].action.continuous[j] as f64
        });
        let discrete_targets = Array2::from_shape_fn((samples.len(), 2), |(i, j)| {
            if samples[i].action.discrete[j] { 1.0 } else { 0.0 }
        });
        Ok(Self { observations, continuous_targets, discrete_targets })
    }
}

/// One epoch of minibatches over samples pooled from all trajectories,
/// shuffled with `seed`. The last batch may be smaller.
pub struct BatchIter<'a> {
    samples: Vec<&'a Sample>,
    layout: ObsLayout,
    batch_size: usize,
    pos: usize,
}

impl<'a> BatchIter<'a> {
    pub fn new<I>(samples: I, layout: ObsLayout, batch_size: usize, seed: u64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Sample>,
    {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        let mut samples: Vec<&Sample> = samples.into_iter().collect();
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        samples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self { samples, layout, batch_size, pos: 0 })
    }

    pub fn n_batches(&self) -> usize {
        self.samples.len().div_ceil(self.batch_size)
    }

    /// The samples of each batch, without feature extraction.
    pub fn sample_batches(&self) -> impl Iterator<Item = &[&'a Sample]> {
        self.samples.chunks(self.batch_size)
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.samples.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.samples.len());
        let out = Batch::from_samples(&self.samples[self.pos..end], &self.layout);
        self.pos = end;
        Some(out)
    }
}

/// Convenience: all batches of one epoch.
pub fn batch_iter<'a>(
    trajectories: &'a [Trajectory],
    layout: ObsLayout,
    batch_size: usize,
    seed: u64,
) -> Result<BatchIter<'a>> {
    BatchIter::new(trajectories.iter().flat_map(|t| t.samples.iter()), layout, batch_size, seed)
}

/// Steering targets of the synthetic bimodal set.
pub const BIMODAL_MODES: [f32; 2] = [0.2, 0.8];
pub const BIMODAL_THROTTLE: f32 = 0.6;

/// A random sensor reading that passes layout validation.
pub fn random_observation<R: Rng>(layout: &ObsLayout, rng: &mut R) -> Observation {
    let depth_rays = (0..layout.n_rays).map(|_| rng.random::<f32>()).collect();
    let occupancy = (0..layout.occupancy_width()).map(|_| rng.random::<f32>()).collect();
    let angle = rng.random_range(0.0..std::f32::consts::TAU);
    let size = layout.arena_size as f32;
    Observation {
        depth_rays,
        occupancy,
        telemetry: [
            rng.random_range(0.0..size),
            rng.random_range(0.0..size),
            angle.cos(),
            angle.sin(),
            rng.random_range(0.0..V_MAX as f32),
            rng.random_range(0..=SECONDARY_AMMO) as f32,
        ],
    }
}

/// `n_states` random observations, each recorded twice: once steering to
/// each of [`BIMODAL_MODES`], both with throttle [`BIMODAL_THROTTLE`].
pub fn bimodal_dataset(sim_config: &SimConfig, n_states: usize, seed: u64) -> Result<Dataset> {
    if n_states == 0 {
        return Err(Error::EmptyDataset);
    }
    let layout = ObsLayout::from_sim(sim_config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(2 * n_states);
    for i in 0..n_states as u64 {
        let observation = random_observation(&layout, &mut rng);
        for (k, &mode) in BIMODAL_MODES.iter().enumerate() {
            samples.push(Sample {
                tick: 2 * i + k as u64,
                observation: observation.clone(),
                action: ActionPair::new(BIMODAL_THROTTLE as f64, mode as f64, false, false),
            });
        }
    }
    let meta = TrajectoryMeta { config_hash: 0, source: Source::Scripted, seed };
    Ok(Dataset {
        sim_config: sim_config.clone(),
        trajectories: vec![Trajectory { episode_id: 0, samples, meta }],
    })
}
