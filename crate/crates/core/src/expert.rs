//! Scripted demonstrator.
//!
//! The expert patrols the arena's ring counter-clockwise through evenly
//! spaced waypoints, swerves around obstacles on its path, and fires at
//! enemies inside the weapon cone. When both sides of an obstacle are about
//! equally clear it picks a side with a seeded coin flip and keeps that
//! choice until the obstacle is passed, so demonstrations contain both
//! "left" and "right" answers to the same situation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{fmt_f64, parse_value, KvConfig};
use crate::dataset::{Sample, Source, Trajectory, TrajectoryMeta};
use crate::error::{Error, Result};
use crate::hashing::mix_seed;
use crate::sim::consts::{SENSOR_RANGE, VEHICLE_RADIUS};
use crate::sim::{self, ray_box, ray_circle, wrap_angle, ActionPair, SimConfig, Vec2, WorldState};

/// Look-ahead distance at which obstacles start to matter, meters.
pub const AVOID_RADIUS: f64 = 28.0;
/// Extra clearance kept from obstacle surfaces, meters.
pub const AVOID_MARGIN: f64 = 4.0;
/// Side clearances closer than this are treated as a tie, meters.
pub const TIE_MARGIN: f64 = 6.0;
/// Obstacles whose center is further than this from the heading line are
/// passed on the far side without a coin flip, meters.
pub const TIE_LATERAL: f64 = 3.0;
/// Steering per radian of heading error.
pub const STEER_GAIN: f64 = 1.5;
/// Secondary weapon is only used beyond this range, meters.
pub const SECONDARY_MIN_RANGE: f64 = 25.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertConfig {
    pub waypoint_count: usize,
    /// Heading error below which no steering correction is applied, radians.
    pub aim_tolerance: f64,
    /// Multiplier on steering while avoiding an obstacle.
    pub avoid_gain: f64,
    /// Std of optional Gaussian jitter added to continuous actions.
    pub noise_std: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self { waypoint_count: 8, aim_tolerance: 0.1, avoid_gain: 1.2, noise_std: 0.0 }
    }
}

impl KvConfig for ExpertConfig {
    const KEYS: &'static [&'static str] = &["waypoint_count", "aim_tolerance", "avoid_gain", "noise_std"];

    fn set_kv(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "waypoint_count" => self.waypoint_count = parse_value(key, value)?,
            "aim_tolerance" => self.aim_tolerance = parse_value(key, value)?,
            "avoid_gain" => self.avoid_gain = parse_value(key, value)?,
            "noise_std" => self.noise_std = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("waypoint_count", self.waypoint_count.to_string()),
            ("aim_tolerance", fmt_f64(self.aim_tolerance)),
            ("avoid_gain", fmt_f64(self.avoid_gain)),
            ("noise_std", fmt_f64(self.noise_std)),
        ]
    }

    fn validate(&self) -> Result<()> {
        if self.waypoint_count < 3 {
            return Err(Error::config("waypoint_count", "must be >= 3"));
        }
        if self.aim_tolerance.is_nan() || self.aim_tolerance <= 0.0 {
            return Err(Error::config("aim_tolerance", "must be > 0"));
        }
        if self.avoid_gain.is_nan() || self.avoid_gain <= 0.0 {
            return Err(Error::config("avoid_gain", "must be > 0"));
        }
        if self.noise_std.is_nan() || self.noise_std < 0.0 {
            return Err(Error::config("noise_std", "must be >= 0"));
        }
        Ok(())
    }
}

/// Which way the expert passes an obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

/// The expert's per-episode memory: the current swerve commitment and the
/// coin-flip stream.
#[derive(Debug, Clone)]
pub struct Expert {
    cfg: ExpertConfig,
    seed: u64,
    commitment: Option<(usize, Side)>,
    decisions: u64,
    noise_rng: ChaCha8Rng,
    /// Set when the last decision was a coin flip rather than a clearance comparison.
    pub last_decision_was_tie: bool,
}

impl Expert {
    pub fn new(cfg: ExpertConfig, seed: u64) -> Self {
        Self {
            cfg,
            seed,
            commitment: None,
            decisions: 0,
            noise_rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xA11CE)),
            last_decision_was_tie: false,
        }
    }

    pub fn config(&self) -> &ExpertConfig {
        &self.cfg
    }

    /// The obstacle currently being avoided and the chosen side.
    pub fn commitment(&self) -> Option<(usize, Side)> {
        self.commitment
    }

    pub fn act(&mut self, state: &WorldState) -> ActionPair {
        let p = &state.player;
        let heading_angle = p.heading.angle();

        let waypoint = self.current_waypoint(state);
        let nav_err = wrap_angle((waypoint - p.position).angle() - heading_angle);
        let dead = nav_err.abs() - self.cfg.aim_tolerance;
        let mut steer = if dead > 0.0 { 0.5 + STEER_GAIN * dead * nav_err.signum() } else { 0.5 };
        let mut throttle = 1.0;

        self.update_commitment(state);
        if let Some((idx, side)) = self.commitment {
            let o = state.obstacles[idx];
            let to = o.center - p.position;
            let dist = to.norm();
            let clear = o.radius + VEHICLE_RADIUS + AVOID_MARGIN;
            let offset = (clear / dist).min(1.0).asin();
            let desired = to.angle() + side.sign() * offset;
            let err = wrap_angle(desired - heading_angle);
            if err * side.sign() > 0.0 {
                steer = 0.5 + side.sign() * (self.cfg.avoid_gain * STEER_GAIN * err.abs()).min(0.5);
            } else {
                // Already outside the tangent line: never turn back toward the obstacle.
                steer = match side {
                    Side::Left => steer.max(0.5),
                    Side::Right => steer.min(0.5),
                };
            }
            let gap = dist - o.radius - VEHICLE_RADIUS;
            throttle = 0.3 + 0.7 * (gap / AVOID_RADIUS).clamp(0.0, 1.0);
        }
        let mut steer = steer.clamp(0.0, 1.0);
        throttle = throttle.min(1.0 - 0.3 * (2.0 * (steer - 0.5)).abs());

        if self.cfg.noise_std > 0.0 {
            let n = Normal::new(0.0, self.cfg.noise_std).expect("validated std");
            throttle += n.sample(&mut self.noise_rng);
            steer += n.sample(&mut self.noise_rng);
        }

        let target = sim::enemy_in_cone(state);
        let fire_primary = target.is_some();
        let fire_secondary =
            matches!(target, Some((_, d)) if d > SECONDARY_MIN_RANGE) && state.secondary_ammo > 0;
        ActionPair::new(throttle, steer, fire_primary, fire_secondary)
    }

    /// Keeps the current swerve until its obstacle is behind or out of
    /// range, then looks for a new threat.
    fn update_commitment(&mut self, state: &WorldState) {
        let p = &state.player;
        if let Some((idx, _)) = self.commitment {
            let o = state.obstacles[idx];
            let rel = o.center - p.position;
            let still_relevant = rel.dot(p.heading) > 0.0 && rel.norm() < AVOID_RADIUS + o.radius;
            if still_relevant {
                return;
            }
            self.commitment = None;
        }
        if let Some(idx) = self.threat(state) {
            let side = self.choose_side(state, idx);
            self.commitment = Some((idx, side));
        }
    }

    /// Next ring waypoint at least half a spacing ahead of the player's
    /// angular position around the arena center.
    pub fn current_waypoint(&self, state: &WorldState) -> Vec2 {
        let cfg = &state.config;
        let center = sim::arena_center(cfg);
        let rel = state.player.position - center;
        let p = &state.player;
        let margin = 12.0;
        let near_wall = p.position.x < margin
            || p.position.y < margin
            || p.position.x > cfg.arena_size - margin
            || p.position.y > cfg.arena_size - margin;
        if near_wall {
            return center;
        }
        let n = self.cfg.waypoint_count as f64;
        let spacing = std::f64::consts::TAU / n;
        let theta = rel.angle().rem_euclid(std::f64::consts::TAU);
        let k = ((theta + spacing / 2.0) / spacing).floor() + 1.0;
        center + Vec2::from_angle(k * spacing) * sim::ring_radius(cfg)
    }

    /// Nearest obstacle on a collision course within the look-ahead window.
    pub fn threat(&self, state: &WorldState) -> Option<usize> {
        let p = &state.player;
        let left = p.heading.perp();
        state
            .obstacles
            .iter()
            .enumerate()
            .filter_map(|(i, o)| {
                let rel = o.center - p.position;
                let fwd = rel.dot(p.heading);
                let lat = rel.dot(left);
                let on_course = lat.abs() < o.radius + VEHICLE_RADIUS + AVOID_MARGIN;
                (fwd > 0.0 && fwd < AVOID_RADIUS + o.radius && on_course).then_some((i, fwd))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
    }

    /// Obstacles clearly off to one side are passed on the other side.
    /// Near-centered obstacles are passed on the side with more room, and
    /// when the room is about equal the side is a coin flip.
    fn choose_side(&mut self, state: &WorldState, idx: usize) -> Side {
        let p = &state.player;
        let lat = (state.obstacles[idx].center - p.position).dot(p.heading.perp());
        self.decisions += 1;
        self.last_decision_was_tie = false;
        if lat.abs() >= TIE_LATERAL {
            return if lat > 0.0 { Side::Right } else { Side::Left };
        }
        let left = side_clearance(state, 1.0);
        let right = side_clearance(state, -1.0);
        if (left - right).abs() < TIE_MARGIN {
            self.last_decision_was_tie = true;
            let mut coin = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, self.decisions));
            if coin.random_bool(0.5) {
                Side::Left
            } else {
                Side::Right
            }
        } else if left > right {
            Side::Left
        } else {
            Side::Right
        }
    }
}

/// Smallest free distance over rays 20°–90° to one side (`sign` +1 left).
fn side_clearance(state: &WorldState, sign: f64) -> f64 {
    let p = &state.player;
    (0..8)
        .map(|k| {
            let ang = sign * (20.0 + 10.0 * k as f64).to_radians();
            let dir = p.heading.rotated(ang);
            let mut t = ray_box(p.position, dir, state.config.arena_size);
            for o in &state.obstacles {
                if let Some(d) = ray_circle(p.position, dir, o.center, o.radius) {
                    t = t.min(d);
                }
            }
            t.min(SENSOR_RANGE)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Runs the expert for one episode and records every tick.
pub fn run_episode(
    sim_cfg: &SimConfig,
    cfg: &ExpertConfig,
    episode_id: u64,
    sim_seed: u64,
    expert_seed: u64,
) -> Result<(Trajectory, Vec<sim::StepEvents>)> {
    let sim_cfg = sim_cfg.with_seed(sim_seed);
    let mut state = sim::reset(&sim_cfg)?;
    let mut expert = Expert::new(cfg.clone(), expert_seed);
    let mut samples = Vec::with_capacity(sim_cfg.episode_ticks() as usize);
    let mut events = Vec::with_capacity(samples.capacity());
    loop {
        let observation = sim::observe(&state);
        let action = expert.act(&state);
        samples.push(Sample { tick: state.tick, observation, action });
        let (next, ev) = sim::step(&state, &action)?;
        events.push(ev);
        state = next;
        if ev.episode_over {
            break;
        }
    }
    let meta = TrajectoryMeta { config_hash: sim_cfg.layout_hash(), source: Source::Scripted, seed: sim_seed };
    Ok((Trajectory { episode_id, samples, meta }, events))
}

/// Per-episode simulator and expert seeds derived from a dataset seed.
pub fn episode_seeds(seed: u64, episode: u64) -> (u64, u64) {
    (mix_seed(seed, 2 * episode), mix_seed(seed, 2 * episode + 1))
}

/// Generates `n_episodes` expert demonstrations.
pub fn generate_dataset(
    n_episodes: usize,
    sim_cfg: &SimConfig,
    cfg: &ExpertConfig,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    if n_episodes == 0 {
        return Err(Error::InvalidArgument("n_episodes must be >= 1".into()));
    }
    cfg.validate()?;
    sim_cfg.validate()?;
    (0..n_episodes as u64)
        .map(|ep| {
            let (s, e) = episode_seeds(seed, ep);
            run_episode(sim_cfg, cfg, ep, s, e).map(|(t, _)| t)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Obstacle;

    fn open_arena() -> SimConfig {
        SimConfig { n_obstacles: 0, n_enemies: 0, ..SimConfig::default() }
    }

    #[test]
    fn fires_both_weapons_at_distant_enemy_in_cone() {
        let cfg = SimConfig { n_obstacles: 0, n_enemies: 1, ..SimConfig::default() };
        let mut s = sim::reset(&cfg).unwrap();
        s.enemies[0].vehicle.position = s.player.position + s.player.heading * 30.0;
        let a = Expert::new(ExpertConfig::default(), 1).act(&s);
        assert_eq!(a.discrete, [true, true]);
    }

    #[test]
    fn close_enemy_uses_primary_only() {
        let cfg = SimConfig { n_obstacles: 0, n_enemies: 1, ..SimConfig::default() };
        let mut s = sim::reset(&cfg).unwrap();
        s.enemies[0].vehicle.position = s.player.position + s.player.heading * 15.0;
        let a = Expert::new(ExpertConfig::default(), 1).act(&s);
        assert_eq!(a.discrete, [true, false]);
    }

    #[test]
    fn straight_when_waypoint_dead_ahead() {
        let mut s = sim::reset(&open_arena()).unwrap();
        let expert = Expert::new(ExpertConfig::default(), 1);
        let wp = expert.current_waypoint(&s);
        s.player.heading = (wp - s.player.position).normalized();
        let a = Expert::new(ExpertConfig::default(), 1).act(&s);
        assert!((a.steering() - 0.5).abs() <= ExpertConfig::default().aim_tolerance);
        assert_eq!(a.discrete, [false, false]);
    }

    /// An obstacle placed on the line to the waypoint in open space: both
    /// sides are equally clear, so the pass direction is the coin flip.
    fn symmetric_scene() -> WorldState {
        let mut s = sim::reset(&open_arena()).unwrap();
        let expert = Expert::new(ExpertConfig::default(), 0);
        let wp = expert.current_waypoint(&s);
        let dir = (wp - s.player.position).normalized();
        s.player.heading = dir;
        s.player.speed = 10.0;
        s.obstacles.push(Obstacle { center: s.player.position + dir * 18.0, radius: 4.0 });
        s
    }

    fn steer_at_decision(seed: u64) -> (f64, bool) {
        let s = symmetric_scene();
        let mut e = Expert::new(ExpertConfig::default(), seed);
        let a = e.act(&s);
        (a.steering() - 0.5, e.last_decision_was_tie)
    }

    #[test]
    fn coin_flip_produces_both_sides() {
        let mut signs = std::collections::BTreeSet::new();
        for seed in 0..16 {
            let (d, tie) = steer_at_decision(seed);
            assert!(tie);
            assert!(d.abs() > 0.2, "decisive swerve expected, got {d}");
            signs.insert(d > 0.0);
        }
        assert_eq!(signs.len(), 2);
    }

    #[test]
    fn commitment_persists_until_passed() {
        let mut s = symmetric_scene();
        let mut e = Expert::new(ExpertConfig::default(), 3);
        let first = e.act(&s).steering() - 0.5;
        let side = e.commitment().unwrap().1;
        for _ in 0..60 {
            let a = e.act(&s);
            s = sim::step(&s, &a).unwrap().0;
            if let Some((_, sd)) = e.commitment() {
                assert_eq!(sd, side);
            }
        }
        assert!(first.signum() == side.sign());
        assert!(s.player.alive);
    }

    #[test]
    fn expert_passes_symmetric_obstacle_both_ways() {
        // Run the scene to completion with two seeds that flip differently and
        // compare the lateral offset at the closest approach.
        let pass = |seed: u64| {
            let mut s = symmetric_scene();
            let center = s.obstacles[0].center;
            let start_dir = s.player.heading;
            let mut e = Expert::new(ExpertConfig::default(), seed);
            let mut best = (f64::INFINITY, 0.0);
            for _ in 0..80 {
                let a = e.act(&s);
                s = sim::step(&s, &a).unwrap().0;
                let d = s.player.position.dist(center);
                if d < best.0 {
                    best = (d, (s.player.position - center).dot(start_dir.perp()));
                }
            }
            best.1
        };
        let mut lefts = 0;
        let mut rights = 0;
        for seed in 0..8 {
            let (d, _) = steer_at_decision(seed);
            let lateral = pass(seed);
            assert_eq!(lateral > 0.0, d > 0.0);
            if lateral > 0.0 { lefts += 1 } else { rights += 1 }
        }
        assert!(lefts > 0 && rights > 0);
    }

    #[test]
    fn clear_side_wins_without_coin() {
        let mut s = symmetric_scene();
        let p = s.player.position;
        let right = s.player.heading.rotated(-std::f64::consts::FRAC_PI_2);
        s.obstacles.push(Obstacle { center: p + right * 9.0 + s.player.heading * 6.0, radius: 3.0 });
        let mut e = Expert::new(ExpertConfig::default(), 0);
        let a = e.act(&s);
        assert!(!e.last_decision_was_tie);
        assert!(a.steering() > 0.5);
    }

    #[test]
    fn dataset_generation_is_deterministic() {
        let sim_cfg = SimConfig { episode_length: 5.0, ..SimConfig::default() };
        let a = generate_dataset(2, &sim_cfg, &ExpertConfig::default(), 9).unwrap();
        let b = generate_dataset(2, &sim_cfg, &ExpertConfig::default(), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].samples.len(), 100);
        assert!(generate_dataset(0, &sim_cfg, &ExpertConfig::default(), 9).is_err());
    }

    #[test]
    fn noise_changes_actions_but_stays_bounded() {
        let s = sim::reset(&SimConfig::default()).unwrap();
        let cfg = ExpertConfig { noise_std: 0.5, ..ExpertConfig::default() };
        let mut e = Expert::new(cfg, 4);
        for _ in 0..100 {
            assert!(e.act(&s).is_valid());
        }
    }

    #[test]
    fn waypoint_is_ahead_on_ring() {
        let s = sim::reset(&open_arena()).unwrap();
        let e = Expert::new(ExpertConfig::default(), 0);
        let wp = e.current_waypoint(&s);
        let c = sim::arena_center(&s.config);
        assert!(((wp - c).norm() - sim::ring_radius(&s.config)).abs() < 1e-9);
        // Spawn faces +y, waypoint lies counter-clockwise (positive y).
        assert!(wp.y > s.player.position.y);
    }
}
