//! Deterministic top-down driving-and-shooting arena.
//!
//! The player drives a kinematic vehicle around a square arena with circular
//! obstacles. Enemies patrol seeded loops around a central ring and can be
//! destroyed with a hitscan primary weapon or a limited-ammo projectile.
//! `step` is a pure function of the previous state and the action.

mod config;
mod geometry;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::SimConfig;
pub use geometry::{ray_box, ray_circle, segment_hits_circle, wrap_angle, Vec2};

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::hashing::mix_seed;

/// Physical and combat constants.
pub mod consts {
    /// Throttle acceleration, m/s².
    pub const ACCEL: f64 = 6.0;
    /// Linear drag, 1/s.
    pub const DRAG: f64 = 0.5;
    pub const V_MAX: f64 = 12.0;
    /// Turn rate at full steering deflection, rad/s.
    pub const OMEGA_MAX: f64 = 1.5;
    pub const VEHICLE_RADIUS: f64 = 1.5;
    pub const SENSOR_RANGE: f64 = 40.0;

    pub const STUCK_SPEED: f64 = 0.2;
    pub const STUCK_SECONDS: f64 = 3.0;
    pub const STUCK_THROTTLE: f64 = 0.1;

    pub const PRIMARY_RANGE: f64 = 40.0;
    pub const PRIMARY_HALF_ANGLE: f64 = 15.0 * std::f64::consts::PI / 180.0;
    pub const PRIMARY_COOLDOWN: f64 = 0.5;
    pub const PRIMARY_DAMAGE: u32 = 1;
    pub const ENEMY_HP: u32 = 3;

    pub const SECONDARY_AMMO: u32 = 3;
    pub const SECONDARY_COOLDOWN: f64 = 1.0;
    pub const PROJECTILE_SPEED: f64 = 30.0;
    pub const PROJECTILE_TTL: f64 = 2.0;
    pub const PROJECTILE_DAMAGE: u32 = 3;

    pub const ENEMY_SPEED: f64 = 5.0;
    pub const ENEMY_RESPAWN: f64 = 5.0;

    /// Patrol ring radius as a fraction of the arena side.
    pub const RING_FRACTION: f64 = 0.3;
}

use consts::*;

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub position: Vec2,
    /// Unit heading vector.
    pub heading: Vec2,
    pub speed: f64,
    pub alive: bool,
    /// Seconds spent nearly stationary while pressing the throttle.
    pub stuck_timer: f64,
}

impl VehicleState {
    fn at(position: Vec2, heading: Vec2) -> Self {
        Self { position, heading, speed: 0.0, alive: true, stuck_timer: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub center: Vec2,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enemy {
    pub vehicle: VehicleState,
    pub hp: u32,
    pub route: Vec<Vec2>,
    pub next_waypoint: usize,
    /// Seconds until a destroyed enemy reappears.
    pub respawn_in: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Owner {
    Player,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projectile {
    pub position: Vec2,
    pub velocity: Vec2,
    pub owner: Owner,
    pub ttl: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EndReason {
    #[default]
    None,
    Timeout,
    FatalCrash,
}

impl EndReason {
    pub fn as_str(self) -> &'static str {
        match self {
            EndReason::None => "none",
            EndReason::Timeout => "timeout",
            EndReason::FatalCrash => "fatal_crash",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepEvents {
    pub kill: bool,
    /// Number of enemies destroyed this tick.
    pub kills: u32,
    /// The player touched a wall or obstacle this tick.
    pub crashed: bool,
    pub episode_over: bool,
    pub reason: EndReason,
}

/// Controller output: continuous `(throttle, steering)` in `[0, 1]` with
/// steering 0.5 meaning straight ahead, and two fire buttons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionPair {
    pub continuous: [f32; 2],
    pub discrete: [bool; 2],
}

impl ActionPair {
    pub const NEUTRAL: ActionPair = ActionPair { continuous: [0.0, 0.5], discrete: [false, false] };

    /// Builds an action, clipping continuous components into `[0, 1]`.
    pub fn new(throttle: f64, steering: f64, fire_primary: bool, fire_secondary: bool) -> Self {
        Self {
            continuous: [clip01(throttle) as f32, clip01(steering) as f32],
            discrete: [fire_primary, fire_secondary],
        }
    }

    pub fn throttle(&self) -> f64 {
        self.continuous[0] as f64
    }

    pub fn steering(&self) -> f64 {
        self.continuous[1] as f64
    }

    pub fn is_valid(&self) -> bool {
        self.continuous.iter().all(|c| (0.0..=1.0).contains(c))
    }
}

fn clip01(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

/// Agent-visible sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Normalized ray distances, ray 0 straight ahead, counter-clockwise.
    pub depth_rays: Vec<f32>,
    /// Egocentric occupancy, row-major, row 0 farthest ahead, column 0 leftmost.
    pub occupancy: Vec<f32>,
    /// `(x, y, heading_x, heading_y, speed, secondary_ammo)`.
    pub telemetry: [f32; 6],
}

impl Observation {
    pub const TELEMETRY_WIDTH: usize = 6;
}

/// Full simulator ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub config: SimConfig,
    pub player: VehicleState,
    pub enemies: Vec<Enemy>,
    pub obstacles: Vec<Obstacle>,
    pub projectiles: Vec<Projectile>,
    pub tick: u64,
    pub kills_scored: u32,
    pub secondary_ammo: u32,
    pub primary_cooldown: f64,
    pub secondary_cooldown: f64,
    /// Enemies spawned since reset, including the initial ones.
    pub enemies_spawned: u32,
    pub ended: EndReason,
}

impl WorldState {
    pub fn arena_center(&self) -> Vec2 {
        arena_center(&self.config)
    }

    pub fn is_over(&self) -> bool {
        self.ended != EndReason::None
    }
}

pub fn arena_center(cfg: &SimConfig) -> Vec2 {
    Vec2::new(cfg.arena_size / 2.0, cfg.arena_size / 2.0)
}

pub fn ring_radius(cfg: &SimConfig) -> f64 {
    cfg.arena_size * RING_FRACTION
}

/// Player spawn: on the patrol ring east of center, facing counter-clockwise.
pub fn spawn_pose(cfg: &SimConfig) -> (Vec2, Vec2) {
    let c = arena_center(cfg);
    (Vec2::new(c.x + ring_radius(cfg), c.y), Vec2::new(0.0, 1.0))
}

fn place_obstacles(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Vec<Obstacle> {
    let center = arena_center(cfg);
    let ring = ring_radius(cfg);
    let (spawn, _) = spawn_pose(cfg);
    let on_ring = cfg.n_obstacles.div_ceil(2);
    let mut out: Vec<Obstacle> = Vec::with_capacity(cfg.n_obstacles);
    for i in 0..cfg.n_obstacles {
        for _attempt in 0..200 {
            let cand = if i < on_ring {
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                let r = ring + rng.random_range(-2.0..2.0);
                Obstacle { center: center + Vec2::from_angle(theta) * r, radius: rng.random_range(3.0..5.5) }
            } else {
                let m = 15.0;
                let p = Vec2::new(
                    rng.random_range(m..cfg.arena_size - m),
                    rng.random_range(m..cfg.arena_size - m),
                );
                Obstacle { center: p, radius: rng.random_range(3.0..6.0) }
            };
            let clear_of_spawn = cand.center.dist(spawn) > 25.0 + cand.radius;
            let clear_of_others =
                out.iter().all(|o| o.center.dist(cand.center) > o.radius + cand.radius + 10.0);
            if clear_of_spawn && clear_of_others {
                out.push(cand);
                break;
            }
        }
    }
    out
}

/// Clockwise patrol loop hugging the ring.
fn patrol_route(cfg: &SimConfig, start_angle: f64, rng: &mut ChaCha8Rng) -> Vec<Vec2> {
    let center = arena_center(cfg);
    let ring = ring_radius(cfg);
    let n = 8;
    (0..n)
        .map(|k| {
            let theta = start_angle - std::f64::consts::TAU * (k as f64 + 1.0) / n as f64;
            center + Vec2::from_angle(theta) * (ring + rng.random_range(-6.0..6.0))
        })
        .collect()
}

fn spawn_enemy(cfg: &SimConfig, avoid: Vec2, rng: &mut ChaCha8Rng) -> Enemy {
    let center = arena_center(cfg);
    let ring = ring_radius(cfg);
    let mut theta = rng.random_range(0.0..std::f64::consts::TAU);
    for _ in 0..32 {
        if (center + Vec2::from_angle(theta) * ring).dist(avoid) > 40.0 {
            break;
        }
        theta = rng.random_range(0.0..std::f64::consts::TAU);
    }
    let pos = center + Vec2::from_angle(theta) * ring;
    let route = patrol_route(cfg, theta, rng);
    let heading = (route[0] - pos).normalized();
    Enemy {
        vehicle: VehicleState::at(pos, heading),
        hp: ENEMY_HP,
        route,
        next_waypoint: 0,
        respawn_in: 0.0,
    }
}

/// Builds the initial world for `config`. Deterministic in the seed.
pub fn reset(config: &SimConfig) -> Result<WorldState> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 1));
    let obstacles = place_obstacles(config, &mut rng);
    let (spawn, heading) = spawn_pose(config);
    let enemies = (0..config.n_enemies).map(|_| spawn_enemy(config, spawn, &mut rng)).collect();
    Ok(WorldState {
        config: config.clone(),
        player: VehicleState::at(spawn, heading),
        enemies,
        obstacles,
        projectiles: Vec::new(),
        tick: 0,
        kills_scored: 0,
        secondary_ammo: SECONDARY_AMMO,
        primary_cooldown: 0.0,
        secondary_cooldown: 0.0,
        enemies_spawned: config.n_enemies as u32,
        ended: EndReason::None,
    })
}

/// Whether anything opaque sits between `a` and `b`.
fn line_of_sight(state: &WorldState, a: Vec2, b: Vec2) -> bool {
    !state.obstacles.iter().any(|o| segment_hits_circle(a, b, o.center, o.radius))
}

/// Nearest live enemy inside the primary weapon cone with a clear line of
/// sight, as `(index, distance)`.
pub fn enemy_in_cone(state: &WorldState) -> Option<(usize, f64)> {
    let p = &state.player;
    state
        .enemies
        .iter()
        .enumerate()
        .filter(|(_, e)| e.vehicle.alive)
        .filter_map(|(i, e)| {
            let to = e.vehicle.position - p.position;
            let d = to.norm();
            if d > PRIMARY_RANGE || d == 0.0 {
                return None;
            }
            let cos = to.dot(p.heading) / d;
            if cos < PRIMARY_HALF_ANGLE.cos() {
                return None;
            }
            line_of_sight(state, p.position, e.vehicle.position).then_some((i, d))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
}

fn damage_enemy(state: &mut WorldState, idx: usize, dmg: u32) -> bool {
    let e = &mut state.enemies[idx];
    e.hp = e.hp.saturating_sub(dmg);
    if e.hp == 0 {
        e.vehicle.alive = false;
        e.vehicle.speed = 0.0;
        e.respawn_in = ENEMY_RESPAWN;
        true
    } else {
        false
    }
}

/// Pushes `pos` out of every obstacle and inside the walls. Returns whether
/// any contact happened.
fn resolve_contacts(state: &WorldState, pos: &mut Vec2) -> bool {
    let mut hit = false;
    for o in &state.obstacles {
        let min_d = o.radius + VEHICLE_RADIUS;
        let delta = *pos - o.center;
        let d = delta.norm();
        if d < min_d {
            let n = if d > 1e-12 { delta * (1.0 / d) } else { Vec2::new(1.0, 0.0) };
            *pos = o.center + n * min_d;
            hit = true;
        }
    }
    let (lo, hi) = (VEHICLE_RADIUS, state.config.arena_size - VEHICLE_RADIUS);
    let clamped = Vec2::new(pos.x.clamp(lo, hi), pos.y.clamp(lo, hi));
    if clamped != *pos {
        *pos = clamped;
        hit = true;
    }
    hit
}

/// Advances the world by one tick under `action`.
pub fn step(state: &WorldState, action: &ActionPair) -> Result<(WorldState, StepEvents)> {
    if state.is_over() {
        return Err(Error::InvalidTransition(format!(
            "episode already over ({}) at tick {}",
            state.ended.as_str(),
            state.tick
        )));
    }
    if !state.player.alive {
        return Err(Error::InvalidTransition("player is not alive".into()));
    }
    let mut s = state.clone();
    let mut ev = StepEvents::default();
    let cfg = s.config.clone();
    let dt = cfg.dt();
    let throttle = clip01(action.throttle());
    let steering = clip01(action.steering());

    // Kinematics.
    let p = &mut s.player;
    p.speed = (p.speed + (throttle * ACCEL - DRAG * p.speed) * dt).clamp(0.0, V_MAX);
    p.heading = p.heading.rotated((steering - 0.5) * 2.0 * OMEGA_MAX * dt).normalized();
    let mut pos = p.position + p.heading * (p.speed * dt);
    if resolve_contacts(&s, &mut pos) {
        s.player.speed = 0.0;
        ev.crashed = true;
    }
    s.player.position = pos;

    // Weapons.
    s.primary_cooldown = (s.primary_cooldown - dt).max(0.0);
    s.secondary_cooldown = (s.secondary_cooldown - dt).max(0.0);
    if action.discrete[0] && s.primary_cooldown <= 1e-9 {
        s.primary_cooldown = PRIMARY_COOLDOWN;
        if let Some((idx, _)) = enemy_in_cone(&s) {
            if damage_enemy(&mut s, idx, PRIMARY_DAMAGE) {
                ev.kills += 1;
            }
        }
    }
    if action.discrete[1] && s.secondary_ammo > 0 && s.secondary_cooldown <= 1e-9 {
        s.secondary_ammo -= 1;
        s.secondary_cooldown = SECONDARY_COOLDOWN;
        let h = s.player.heading;
        s.projectiles.push(Projectile {
            position: s.player.position + h * (VEHICLE_RADIUS + 0.5),
            velocity: h * PROJECTILE_SPEED,
            owner: Owner::Player,
            ttl: PROJECTILE_TTL,
        });
    }

    // Projectiles.
    let mut projectiles = std::mem::take(&mut s.projectiles);
    projectiles.retain_mut(|pr| {
        let from = pr.position;
        let to = from + pr.velocity * dt;
        pr.position = to;
        pr.ttl -= dt;
        let target = s
            .enemies
            .iter()
            .enumerate()
            .filter(|(_, e)| e.vehicle.alive)
            .filter(|(_, e)| segment_hits_circle(from, to, e.vehicle.position, VEHICLE_RADIUS + 1.0))
            .min_by(|a, b| {
                a.1.vehicle.position.dist(from).total_cmp(&b.1.vehicle.position.dist(from))
            })
            .map(|(i, _)| i);
        if let Some(i) = target {
            if damage_enemy(&mut s, i, PROJECTILE_DAMAGE) {
                ev.kills += 1;
            }
            return false;
        }
        let blocked = s.obstacles.iter().any(|o| segment_hits_circle(from, to, o.center, o.radius));
        let inside = (0.0..=cfg.arena_size).contains(&to.x) && (0.0..=cfg.arena_size).contains(&to.y);
        !blocked && inside && pr.ttl > 1e-9
    });
    s.projectiles = projectiles;

    // Enemies.
    let player_pos = s.player.position;
    for i in 0..s.enemies.len() {
        if s.enemies[i].vehicle.alive {
            let e = &mut s.enemies[i];
            let target = e.route[e.next_waypoint];
            let to = target - e.vehicle.position;
            let d = to.norm();
            let stride = ENEMY_SPEED * dt;
            if d <= stride {
                e.vehicle.position = target;
                e.next_waypoint = (e.next_waypoint + 1) % e.route.len();
            } else {
                e.vehicle.heading = to * (1.0 / d);
                e.vehicle.position = e.vehicle.position + e.vehicle.heading * stride;
            }
            e.vehicle.speed = ENEMY_SPEED;
        } else {
            s.enemies[i].respawn_in -= dt;
            if s.enemies[i].respawn_in <= 1e-9 {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 1000 + s.enemies_spawned as u64));
                s.enemies[i] = spawn_enemy(&cfg, player_pos, &mut rng);
                s.enemies_spawned += 1;
            }
        }
    }

    s.kills_scored += ev.kills;
    ev.kill = ev.kills > 0;

    // Stuck detection.
    if s.player.speed < STUCK_SPEED && throttle > STUCK_THROTTLE {
        s.player.stuck_timer += dt;
    } else {
        s.player.stuck_timer = 0.0;
    }

    s.tick += 1;
    if s.player.stuck_timer >= STUCK_SECONDS - 1e-9 {
        s.player.alive = false;
        s.ended = EndReason::FatalCrash;
    } else if s.tick >= cfg.episode_ticks() {
        s.ended = EndReason::Timeout;
    }
    ev.reason = s.ended;
    ev.episode_over = s.is_over();
    Ok((s, ev))
}

/// Renders the agent-visible sensors for the current state.
pub fn observe(state: &WorldState) -> Observation {
    let cfg = &state.config;
    let p = &state.player;
    let n = cfg.n_rays;
    let depth_rays = (0..n)
        .map(|i| {
            let dir = p.heading.rotated(std::f64::consts::TAU * i as f64 / n as f64);
            let mut t = ray_box(p.position, dir, cfg.arena_size);
            for o in &state.obstacles {
                if let Some(d) = ray_circle(p.position, dir, o.center, o.radius) {
                    t = t.min(d);
                }
            }
            for e in state.enemies.iter().filter(|e| e.vehicle.alive) {
                if let Some(d) = ray_circle(p.position, dir, e.vehicle.position, VEHICLE_RADIUS) {
                    t = t.min(d);
                }
            }
            (t.min(SENSOR_RANGE) / SENSOR_RANGE) as f32
        })
        .collect();

    let res = cfg.grid_res;
    let cell = 2.0 * SENSOR_RANGE / res as f64;
    let left = p.heading.perp();
    let mut occupancy = vec![0.0f32; res * res];
    // Only objects that can touch the window are rasterized.
    let reach = SENSOR_RANGE * std::f64::consts::SQRT_2 + cell;
    let near_obstacles: Vec<&Obstacle> =
        state.obstacles.iter().filter(|o| o.center.dist(p.position) < reach + o.radius).collect();
    let near_enemies: Vec<Vec2> = state
        .enemies
        .iter()
        .filter(|e| e.vehicle.alive && e.vehicle.position.dist(p.position) < reach + VEHICLE_RADIUS)
        .map(|e| e.vehicle.position)
        .collect();
    for row in 0..res {
        let fwd = SENSOR_RANGE - (row as f64 + 0.5) * cell;
        for col in 0..res {
            let lat = SENSOR_RANGE - (col as f64 + 0.5) * cell;
            let c = p.position + p.heading * fwd + left * lat;
            let mut v = 0.0f64;
            for o in &near_obstacles {
                let cover = (o.radius + cell / 2.0 - c.dist(o.center)) / cell;
                v = v.max(cover.clamp(0.0, 1.0));
            }
            for &e in &near_enemies {
                let cover = (VEHICLE_RADIUS + cell / 2.0 - c.dist(e)) / cell;
                v = v.max(0.5 * cover.clamp(0.0, 1.0));
            }
            occupancy[row * res + col] = v as f32;
        }
    }

    Observation { depth_rays, occupancy, telemetry: observe_telemetry(state) }
}

/// `x, y, dx, dy, v, ammo` of the player.
pub fn observe_telemetry(state: &WorldState) -> [f32; 6] {
    let p = &state.player;
    [
        p.position.x as f32,
        p.position.y as f32,
        p.heading.x as f32,
        p.heading.y as f32,
        p.speed as f32,
        state.secondary_ammo as f32,
    ]
}
