use std::path::{Path, PathBuf};

use log::warn;

use super::protocol::{
    CircleView, ControlCommand, EnemyView, Frame, FrameEvents, PointView, SessionMessage, VehicleView, PROTOCOL_VERSION,
};
use crate::config::KvConfig;
use crate::dataset::{self, Dataset, Sample, Source, Trajectory, TrajectoryMeta};
use crate::error::{Error, Result};
use crate::hashing::mix_seed;
use crate::sim::{self, ActionPair, SimConfig, StepEvents, WorldState};

/// Transport-independent state of one play session.
///
/// Actions are held until a newer one arrives. While recording, every tick
/// appends the observation seen before the step and the action applied.
pub struct Session {
    config: SimConfig,
    record_dir: Option<PathBuf>,
    state: WorldState,
    episode_seed: u64,
    resets: u64,
    held: ActionPair,
    last_action_tick: Option<u64>,
    running: bool,
    recording: bool,
    current: Vec<Sample>,
    finished: Vec<Trajectory>,
    last_events: StepEvents,
    pending_warning: Option<String>,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.len() <= 64 && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl Session {
    pub fn new(config: SimConfig, record_dir: Option<PathBuf>) -> Result<Self> {
        config.validate()?;
        let state = sim::reset(&config)?;
        Ok(Self {
            episode_seed: config.seed,
            config,
            record_dir,
            state,
            resets: 0,
            held: ActionPair::NEUTRAL,
            last_action_tick: None,
            running: false,
            recording: false,
            current: Vec::new(),
            finished: Vec::new(),
            last_events: StepEvents::default(),
            pending_warning: None,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn held_action(&self) -> ActionPair {
        self.held
    }

    pub fn is_running(&self) -> bool {
        self.running
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn recorded_samples(&self) -> usize {
        self.current.len() + self.finished.iter().map(|t| t.samples.len()).sum::<usize>()
    }

    /// Server greeting.
    pub fn hello(&self) -> SessionMessage {
        SessionMessage::Hello {
            protocol_version: PROTOCOL_VERSION,
            config: self.config.to_map().iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    /// Validates a client greeting.
    pub fn check_hello(msg: &SessionMessage) -> Result<()> {
        match msg {
            SessionMessage::Hello { protocol_version, .. } if *protocol_version == PROTOCOL_VERSION => Ok(()),
            SessionMessage::Hello { protocol_version, .. } => Err(Error::Protocol(format!(
                "protocol version {protocol_version} not supported (server speaks {PROTOCOL_VERSION})"
            ))),
            other => Err(Error::Protocol(format!("expected hello, got {}", other.type_name()))),
        }
    }

    fn warn(&mut self, msg: String) {
        warn!("{msg}");
        self.pending_warning = Some(msg);
    }

    /// Applies one client message. Returns any direct replies; an `Err`
    /// means the session must close.
    pub fn handle(&mut self, msg: SessionMessage) -> Result<Vec<SessionMessage>> {
        match msg {
            SessionMessage::Action { tick, continuous, discrete } => {
                if self.last_action_tick.is_some_and(|t| tick < t) {
                    self.warn(format!("action for tick {tick} is older than the last one; ignored"));
                    return Ok(vec![]);
                }
                let action = ActionPair { continuous, discrete };
                if !action.is_valid() {
                    self.warn(format!("action {continuous:?} outside [0, 1]; ignored"));
                    return Ok(vec![]);
                }
                self.last_action_tick = Some(tick);
                self.held = action;
                Ok(vec![])
            }
            SessionMessage::Control { command, name } => self.control(command, name),
            SessionMessage::Bye { .. } => Ok(vec![]),
            SessionMessage::Hello { .. } => Err(Error::Protocol("duplicate hello".into())),
            other => Err(Error::Protocol(format!("clients may not send {}", other.type_name()))),
        }
    }

    fn end_segment(&mut self) {
        if !self.current.is_empty() {
            let samples = std::mem::take(&mut self.current);
            self.finished.push(Trajectory {
                episode_id: self.finished.len() as u64,
                samples,
                meta: TrajectoryMeta { config_hash: self.config.layout_hash(), source: Source::Human, seed: self.episode_seed },
            });
        }
    }

    fn control(&mut self, command: ControlCommand, name: Option<String>) -> Result<Vec<SessionMessage>> {
        match command {
            ControlCommand::Start => self.running = !self.state.is_over(),
            ControlCommand::Pause => self.running = false,
            ControlCommand::Reset => {
                self.end_segment();
                self.resets += 1;
                self.episode_seed = mix_seed(self.config.seed, self.resets);
                self.state = sim::reset(&self.config.with_seed(self.episode_seed))?;
                self.held = ActionPair::NEUTRAL;
                self.last_action_tick = None;
                self.last_events = StepEvents::default();
                self.running = false;
            }
            ControlCommand::RecordOn => self.recording = true,
            ControlCommand::RecordOff => self.recording = false,
            ControlCommand::Save => {
                let name = name.ok_or_else(|| Error::Protocol("save control needs a name".into()))?;
                return Ok(self.save(&name).map_or_else(
                    |e| {
                        self.warn(format!("save `{name}` failed: {e}"));
                        vec![]
                    },
                    |m| vec![m],
                ));
            }
        }
        Ok(vec![])
    }

    /// Everything recorded so far, one trajectory per episode segment.
    pub fn recording_dataset(&self) -> Dataset {
        let mut trajectories = self.finished.clone();
        if !self.current.is_empty() {
            trajectories.push(Trajectory {
                episode_id: trajectories.len() as u64,
                samples: self.current.clone(),
                meta: TrajectoryMeta { config_hash: self.config.layout_hash(), source: Source::Human, seed: self.episode_seed },
            });
        }
        Dataset { sim_config: self.config.clone(), trajectories }
    }

    fn save(&mut self, name: &str) -> Result<SessionMessage> {
        if !valid_name(name) {
            return Err(Error::InvalidArgument(format!("invalid recording name `{name}`")));
        }
        let dir = self.record_dir.as_deref().ok_or_else(|| Error::InvalidArgument("no record directory".into()))?;
        let data = self.recording_dataset();
        if data.trajectories.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let path = dir.join(format!("{name}.evtraj"));
        dataset::save(&path, &data)?;
        Ok(SessionMessage::Saved { name: name.into(), path: path.display().to_string(), samples: data.n_samples() })
    }

    /// Advances one tick if running and returns the frame to send.
    pub fn tick(&mut self) -> Result<Frame> {
        if self.running && !self.state.is_over() {
            if self.recording {
                self.current.push(Sample { tick: self.state.tick, observation: sim::observe(&self.state), action: self.held });
            }
            let (next, ev) = sim::step(&self.state, &self.held)?;
            self.state = next;
            self.last_events = ev;
            if ev.episode_over {
                self.running = false;
            }
        } else {
            self.last_events = StepEvents { episode_over: self.state.is_over(), reason: self.state.ended, ..Default::default() };
        }
        Ok(self.frame())
    }

    pub fn frame(&mut self) -> Frame {
        let s = &self.state;
        let p = &s.player;
        let ev = &self.last_events;
        Frame {
            tick: s.tick,
            arena_size: s.config.arena_size,
            player: VehicleView {
                x: p.position.x,
                y: p.position.y,
                heading: p.heading.angle(),
                speed: p.speed,
                alive: p.alive,
            },
            enemies: s
                .enemies
                .iter()
                .map(|e| EnemyView {
                    x: e.vehicle.position.x,
                    y: e.vehicle.position.y,
                    heading: e.vehicle.heading.angle(),
                    hp: e.hp,
                    alive: e.vehicle.alive,
                })
                .collect(),
            obstacles: s.obstacles.iter().map(|o| CircleView { x: o.center.x, y: o.center.y, radius: o.radius }).collect(),
            projectiles: s.projectiles.iter().map(|q| PointView { x: q.position.x, y: q.position.y }).collect(),
            telemetry: sim::observe_telemetry(s),
            events: FrameEvents {
                kills: ev.kills,
                crashed: ev.crashed,
                episode_over: ev.episode_over,
                reason: ev.reason.as_str().into(),
            },
            kills_total: s.kills_scored,
            running: self.running,
            recording: self.recording,
            recorded_samples: self.recorded_samples(),
            warning: self.pending_warning.take(),
        }
    }

    pub fn record_dir(&self) -> Option<&Path> {
        self.record_dir.as_deref()
    }
}
