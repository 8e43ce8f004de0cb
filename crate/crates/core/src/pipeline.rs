//! Training and evaluation loops shared by the command line and tests.

use std::io::Write;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{batch_iter, ObsLayout, Trajectory};
use crate::ebm::{sample_negatives, EbmModel, NegativeSamplerConfig};
use crate::encoders::ArchConfig;
use crate::error::{Error, Result};
use crate::ffbc::{FfBcModel, Objective};
use crate::hashing::mix_seed;
use crate::metrics::{
    cross_corr, kde_2d, kl_div, play_stats, similarity, Bandwidth, DensityGrid, EpisodeStats, Extent, PlayStats, KL_EPS,
};
use crate::nn::Adam;
use crate::policy::{evaluate, PolicyBundle, Rollout};
use crate::sim::SimConfig;
use crate::training::{LossMeter, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

pub fn write_loss_csv<W: Write>(w: &mut W, log: &[EpochLog]) -> Result<()> {
    writeln!(w, "epoch,train_loss,val_loss")?;
    for e in log {
        let val = e.val_loss.map(|v| format!("{v:.9}")).unwrap_or_default();
        writeln!(w, "{},{:.9},{val}", e.epoch, e.train_loss)?;
    }
    Ok(())
}

fn shuffle_seed(seed: u64, stream: u64, epoch: usize) -> u64 {
    mix_seed(mix_seed(seed, stream), epoch as u64)
}

pub struct FfTraining {
    pub model: FfBcModel,
    pub optimizer: Adam,
    pub log: Vec<EpochLog>,
}

/// Trains the feed-forward model on the discrete heads and the regression
/// head together, so one network serves both policies.
pub fn train_ff(
    train: &[Trajectory],
    val: &[Trajectory],
    layout: ObsLayout,
    arch: &ArchConfig,
    cfg: &TrainConfig,
    epochs: usize,
) -> Result<FfTraining> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 1));
    let mut model = FfBcModel::init(layout, arch, true, &mut rng)?;
    let mut optimizer = model.new_optimizer(cfg.adam());
    let mut log = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let batches = batch_iter(train, layout, cfg.batch_size, shuffle_seed(cfg.seed, 11, epoch))?;
        let train_loss = model.train_epoch(batches, &mut optimizer, Objective::Joint)?;
        let val_loss = if val.is_empty() {
            None
        } else {
            let mut meter = LossMeter::default();
            for b in batch_iter(val, layout, cfg.batch_size, 0)? {
                let b = b?;
                meter.add(model.loss_and_grads(&b, Objective::Joint)?.0, b.size());
            }
            Some(meter.mean())
        };
        info!("ff-bc epoch {epoch}: train {train_loss:.6}");
        log.push(EpochLog { epoch, train_loss, val_loss });
    }
    Ok(FfTraining { model, optimizer, log })
}

pub struct EbmTraining {
    pub model: EbmModel,
    pub optimizer: Adam,
    pub log: Vec<EpochLog>,
    /// Loss on the first training batch before any update.
    pub initial_loss: f64,
}

pub fn train_ebm(
    train: &[Trajectory],
    val: &[Trajectory],
    layout: ObsLayout,
    arch: &ArchConfig,
    sampler: &NegativeSamplerConfig,
    cfg: &TrainConfig,
    epochs: usize,
) -> Result<EbmTraining> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 2));
    let mut model = EbmModel::init(layout, arch, &mut rng)?;
    let mut optimizer = model.new_optimizer(cfg.adam());
    let mut neg_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 3));

    let first = batch_iter(train, layout, cfg.batch_size, shuffle_seed(cfg.seed, 12, 0))?
        .next()
        .ok_or(Error::EmptyDataset)??;
    let probe = sample_negatives(sampler, first.size(), &mut ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 4)));
    let initial_loss = model.loss_and_grads(&first, &probe)?.0;
    info!("ec-bc initial loss {initial_loss:.6} (uniform {:.6})", ((1 + sampler.n_fake) as f64).ln());

    let mut log = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let batches = batch_iter(train, layout, cfg.batch_size, shuffle_seed(cfg.seed, 12, epoch))?;
        let train_loss = model.train_epoch(batches, sampler, &mut optimizer, &mut neg_rng)?;
        let val_loss = if val.is_empty() {
            None
        } else {
            let mut vr = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 5));
            let mut meter = LossMeter::default();
            for b in batch_iter(val, layout, cfg.batch_size, 0)? {
                let b = b?;
                let neg = sample_negatives(sampler, b.size(), &mut vr);
                meter.add(model.loss_and_grads(&b, &neg)?.0, b.size());
            }
            Some(meter.mean())
        };
        info!("ec-bc epoch {epoch}: train {train_loss:.6}");
        log.push(EpochLog { epoch, train_loss, val_loss });
    }
    Ok(EbmTraining { model, optimizer, log, initial_loss })
}

/// Player positions of every recorded tick.
pub fn positions(trajectories: &[Trajectory]) -> Vec<[f64; 2]> {
    trajectories
        .iter()
        .flat_map(|t| t.samples.iter().map(|s| [s.observation.telemetry[0] as f64, s.observation.telemetry[1] as f64]))
        .collect()
}

pub fn position_density(trajectories: &[Trajectory], arena_size: f64, resolution: usize) -> Result<DensityGrid> {
    kde_2d(&positions(trajectories), Extent::square(arena_size), resolution, Bandwidth::Scott)
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub kl: f64,
    pub cc: f64,
    pub sim: f64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub policy: String,
    pub matches: usize,
    pub seed: u64,
    pub stats: PlayStats,
    pub density: DensityGrid,
    pub reference: Option<(DensityGrid, Comparison)>,
}

impl EvalReport {
    /// `key: value` lines.
    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "policy: {}", self.policy)?;
        writeln!(w, "matches: {}", self.matches)?;
        writeln!(w, "seed: {}", self.seed)?;
        let s = &self.stats;
        writeln!(w, "mean_time_alive: {:.6}", s.mean_time_alive)?;
        writeln!(w, "median_time_alive: {:.6}", s.median_time_alive)?;
        writeln!(w, "mean_kills: {:.6}", s.mean_kills)?;
        writeln!(w, "median_kills: {:.6}", s.median_kills)?;
        writeln!(w, "pkr: {:.6}", s.pkr)?;
        let crashes = s.episodes.iter().filter(|e| e.time_alive() < 1.0).count();
        writeln!(w, "fatal_crashes: {crashes}")?;
        writeln!(w, "density_resolution: {}", self.density.resolution)?;
        writeln!(w, "density_bandwidth: {:.6}", self.density.bandwidth)?;
        if let Some((_, c)) = &self.reference {
            writeln!(w, "kl: {:.6}", c.kl)?;
            writeln!(w, "cc: {:.6}", c.cc)?;
            writeln!(w, "sim: {:.6}", c.sim)?;
        }
        Ok(())
    }
}

pub fn compare(p: &DensityGrid, q_data: &DensityGrid) -> Result<Comparison> {
    Ok(Comparison { kl: kl_div(p, q_data, KL_EPS)?, cc: cross_corr(p, q_data)?, sim: similarity(p, q_data)? })
}

/// Rolls out `matches` episodes and computes play and exploration metrics,
/// the latter against `reference` demonstrations if given.
pub fn evaluate_policy(
    bundle: &PolicyBundle,
    sim: &SimConfig,
    matches: usize,
    seed: u64,
    jobs: usize,
    resolution: usize,
    reference: Option<&[Trajectory]>,
) -> Result<(EvalReport, Vec<Rollout>)> {
    if matches == 0 {
        return Err(Error::InvalidArgument("matches must be >= 1".into()));
    }
    let rollouts = evaluate(bundle, sim, matches, seed, jobs)?;
    let episodes: Vec<EpisodeStats> =
        rollouts.iter().map(|r| EpisodeStats::from_events(&r.events, r.max_ticks)).collect();
    let stats = play_stats(&episodes)?;
    let trajs: Vec<Trajectory> = rollouts.iter().map(|r| r.trajectory.clone()).collect();
    let density = position_density(&trajs, sim.arena_size, resolution)?;
    let reference = match reference {
        Some(r) => {
            let q = position_density(r, sim.arena_size, resolution)?;
            let c = compare(&density, &q)?;
            Some((q, c))
        }
        None => None,
    };
    let report = EvalReport { policy: bundle.kind.as_str().into(), matches, seed, stats, density, reference };
    Ok((report, rollouts))
}
