use std::collections::BTreeMap;
use std::net::TcpStream;
use std::thread;
use std::time::Duration;

use evolute_core::dataset::{self, batch_iter, ObsLayout, Source};
use evolute_core::encoders::ArchConfig;
use evolute_core::ffbc::FfBcModel;
use evolute_core::nn::AdamConfig;
use evolute_core::service::protocol::{CircleView, EnemyView, FrameEvents, PointView, VehicleView};
use evolute_core::service::{
    decode, encode, read_message, write_message, ControlCommand, Frame, Server, ServerConfig, Session, SessionMessage,
    PROTOCOL_VERSION,
};
use evolute_core::{sim, ActionPair, Error, SimConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_sim() -> SimConfig {
    SimConfig { n_rays: 8, grid_res: 8, seed: 5, ..SimConfig::default() }
}

fn sample_frame() -> Frame {
    Frame {
        tick: 7,
        arena_size: 200.0,
        player: VehicleView { x: 1.0, y: 2.0, heading: 0.5, speed: 3.0, alive: true },
        enemies: vec![EnemyView { x: 4.0, y: 5.0, heading: -1.0, hp: 2, alive: true }],
        obstacles: vec![CircleView { x: 9.0, y: 9.5, radius: 3.25 }],
        projectiles: vec![PointView { x: 0.5, y: 0.25 }],
        telemetry: [1.0, 2.0, 0.0, 1.0, 3.0, 2.0],
        events: FrameEvents { kills: 1, crashed: false, episode_over: false, reason: "none".into() },
        kills_total: 3,
        running: true,
        recording: false,
        recorded_samples: 0,
        warning: Some("late".into()),
    }
}

fn all_messages() -> Vec<SessionMessage> {
    let mut cfg = BTreeMap::new();
    cfg.insert("arena_size".to_string(), "200.0".to_string());
    vec![
        SessionMessage::Hello { protocol_version: 1, config: cfg },
        SessionMessage::Frame(sample_frame()),
        SessionMessage::Action { tick: 3, continuous: [0.25, 0.75], discrete: [true, false] },
        SessionMessage::Control { command: ControlCommand::Start, name: None },
        SessionMessage::Control { command: ControlCommand::Pause, name: None },
        SessionMessage::Control { command: ControlCommand::Reset, name: None },
        SessionMessage::Control { command: ControlCommand::RecordOn, name: None },
        SessionMessage::Control { command: ControlCommand::RecordOff, name: None },
        SessionMessage::Control { command: ControlCommand::Save, name: Some("run1".into()) },
        SessionMessage::Saved { name: "run1".into(), path: "/tmp/run1.evtraj".into(), samples: 10 },
        SessionMessage::Bye { reason: "done".into() },
    ]
}

#[test]
fn every_message_round_trips() {
    for msg in all_messages() {
        let bytes = encode(&msg).unwrap();
        let (back, used) = decode(&bytes).unwrap();
        assert_eq!(back, msg);
        assert_eq!(used, bytes.len());
        let mut cursor = std::io::Cursor::new(bytes);
        assert_eq!(read_message(&mut cursor).unwrap(), Some(msg));
        assert_eq!(read_message(&mut cursor).unwrap(), None);
    }
}

fn framed(json: &str) -> Vec<u8> {
    let mut v = (json.len() as u32).to_be_bytes().to_vec();
    v.extend_from_slice(json.as_bytes());
    v
}

#[test]
fn unknown_type_is_named() {
    let err = decode(&framed(r#"{"type":"teleport","x":1}"#)).unwrap_err();
    assert!(matches!(&err, Error::Protocol(m) if m.contains("teleport")), "{err}");
}

#[test]
fn save_without_name_rejected() {
    assert!(decode(&framed(r#"{"type":"control","command":"save"}"#)).is_err());
}

#[test]
fn truncated_frames_rejected() {
    let bytes = encode(&SessionMessage::Bye { reason: "x".into() }).unwrap();
    assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(Error::Protocol(_))));
    assert!(matches!(decode(&bytes[..2]), Err(Error::Protocol(_))));
    let mut cursor = std::io::Cursor::new(bytes[..bytes.len() - 2].to_vec());
    assert!(matches!(read_message(&mut cursor), Err(Error::Protocol(_))));
}

fn control(cmd: ControlCommand) -> SessionMessage {
    SessionMessage::Control { command: cmd, name: None }
}

#[test]
fn car_stays_at_rest_without_input() {
    let mut s = Session::new(small_sim(), None).unwrap();
    let start = s.state().player.clone();
    s.handle(control(ControlCommand::Start)).unwrap();
    for _ in 0..40 {
        s.tick().unwrap();
    }
    assert_eq!(s.state().tick, 40);
    assert_eq!(s.state().player.position, start.position);
    assert_eq!(s.state().player.heading, start.heading);
    assert_eq!(s.held_action(), ActionPair::NEUTRAL);
}

#[test]
fn held_action_applies_until_replaced() {
    let mut s = Session::new(small_sim(), None).unwrap();
    s.handle(control(ControlCommand::Start)).unwrap();
    s.handle(control(ControlCommand::RecordOn)).unwrap();
    let a = SessionMessage::Action { tick: 0, continuous: [1.0, 0.7], discrete: [false, false] };
    s.handle(a).unwrap();
    for _ in 0..5 {
        s.tick().unwrap();
    }
    s.handle(SessionMessage::Action { tick: 5, continuous: [0.2, 0.5], discrete: [true, false] }).unwrap();
    for _ in 0..3 {
        s.tick().unwrap();
    }
    let data = s.recording_dataset();
    let acts: Vec<_> = data.trajectories[0].samples.iter().map(|x| x.action).collect();
    assert!(acts[..5].iter().all(|x| x.continuous == [1.0, 0.7]));
    assert!(acts[5..].iter().all(|x| x.continuous == [0.2, 0.5] && x.discrete == [true, false]));
}

#[test]
fn decreasing_action_tick_rejected_with_warning() {
    let mut s = Session::new(small_sim(), None).unwrap();
    s.handle(SessionMessage::Action { tick: 10, continuous: [1.0, 0.5], discrete: [false, false] }).unwrap();
    s.handle(SessionMessage::Action { tick: 9, continuous: [0.0, 0.0], discrete: [true, true] }).unwrap();
    assert_eq!(s.held_action().continuous, [1.0, 0.5]);
    let f = s.tick().unwrap();
    assert!(f.warning.is_some());
    assert!(s.tick().unwrap().warning.is_none());
}

#[test]
fn out_of_range_action_rejected() {
    let mut s = Session::new(small_sim(), None).unwrap();
    s.handle(SessionMessage::Action { tick: 1, continuous: [1.5, 0.5], discrete: [false, false] }).unwrap();
    assert_eq!(s.held_action(), ActionPair::NEUTRAL);
}

#[test]
fn recorded_session_saves_loads_and_trains() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Session::new(small_sim(), Some(dir.path().to_path_buf())).unwrap();
    s.handle(control(ControlCommand::RecordOn)).unwrap();
    s.handle(control(ControlCommand::Start)).unwrap();
    for t in 0..100u64 {
        let steer = 0.5 + 0.4 * ((t as f32) * 0.1).sin();
        s.handle(SessionMessage::Action { tick: t, continuous: [0.8, steer], discrete: [t % 7 == 0, false] }).unwrap();
        s.tick().unwrap();
    }
    let replies = s.handle(SessionMessage::Control { command: ControlCommand::Save, name: Some("demo".into()) }).unwrap();
    let path = match &replies[..] {
        [SessionMessage::Saved { samples: 100, path, .. }] => std::path::PathBuf::from(path),
        other => panic!("unexpected replies {other:?}"),
    };
    let data = dataset::load(&path).unwrap();
    assert_eq!(data.n_samples(), 100);
    assert_eq!(data.trajectories[0].meta.source, Source::Human);

    // offline replay reproduces every recorded observation exactly
    let traj = &data.trajectories[0];
    let mut state = sim::reset(&data.sim_config.with_seed(traj.meta.seed)).unwrap();
    for sample in &traj.samples {
        assert_eq!(sim::observe(&state), sample.observation);
        state = sim::step(&state, &sample.action).unwrap().0;
    }

    let layout = ObsLayout::from_sim(&data.sim_config);
    let mut ff = FfBcModel::init(layout, &ArchConfig::default(), true, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut opt = ff.new_optimizer(AdamConfig::default());
    let loss = ff.train_discrete_epoch(batch_iter(&data.trajectories, layout, 32, 0).unwrap(), &mut opt).unwrap();
    assert!(loss.is_finite());
}

#[test]
fn save_name_is_sanitized() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Session::new(small_sim(), Some(dir.path().to_path_buf())).unwrap();
    s.handle(control(ControlCommand::RecordOn)).unwrap();
    s.handle(control(ControlCommand::Start)).unwrap();
    s.tick().unwrap();
    let r = s.handle(SessionMessage::Control { command: ControlCommand::Save, name: Some("../evil".into()) }).unwrap();
    assert!(r.is_empty());
    assert!(s.tick().unwrap().warning.is_some());
}

fn start_server(record_dir: Option<std::path::PathBuf>) -> (std::net::SocketAddr, std::sync::Arc<std::sync::atomic::AtomicBool>, thread::JoinHandle<()>) {
    let mut cfg = ServerConfig::new(small_sim(), record_dir);
    cfg.tick_period = Duration::from_millis(1);
    let server = Server::bind("127.0.0.1:0", cfg).unwrap();
    let addr = server.local_addr().unwrap();
    let flag = server.shutdown_handle();
    let h = thread::spawn(move || server.run().unwrap());
    (addr, flag, h)
}

#[test]
fn tcp_version_mismatch_gets_bye() {
    let (addr, flag, h) = start_server(None);
    let mut c = TcpStream::connect(addr).unwrap();
    write_message(&mut c, &SessionMessage::Hello { protocol_version: 99, config: BTreeMap::new() }).unwrap();
    match read_message(&mut c).unwrap() {
        Some(SessionMessage::Bye { reason }) => assert!(reason.contains("99"), "{reason}"),
        other => panic!("expected bye, got {other:?}"),
    }
    flag.store(true, std::sync::atomic::Ordering::Relaxed);
    h.join().unwrap();
}

#[test]
fn tcp_session_records_and_saves() {
    let dir = tempfile::tempdir().unwrap();
    let (addr, flag, h) = start_server(Some(dir.path().to_path_buf()));
    let mut c = TcpStream::connect(addr).unwrap();
    write_message(&mut c, &SessionMessage::Hello { protocol_version: PROTOCOL_VERSION, config: BTreeMap::new() }).unwrap();
    match read_message(&mut c).unwrap() {
        Some(SessionMessage::Hello { protocol_version, config }) => {
            assert_eq!(protocol_version, PROTOCOL_VERSION);
            assert_eq!(config.get("n_rays").map(String::as_str), Some("8"));
        }
        other => panic!("expected hello, got {other:?}"),
    }
    write_message(&mut c, &control(ControlCommand::RecordOn)).unwrap();
    write_message(&mut c, &SessionMessage::Action { tick: 0, continuous: [1.0, 0.5], discrete: [false, false] }).unwrap();
    write_message(&mut c, &control(ControlCommand::Start)).unwrap();
    let mut recorded = 0;
    while recorded < 30 {
        if let Some(SessionMessage::Frame(f)) = read_message(&mut c).unwrap() {
            recorded = f.recorded_samples;
        }
    }
    write_message(&mut c, &control(ControlCommand::Pause)).unwrap();
    write_message(&mut c, &SessionMessage::Control { command: ControlCommand::Save, name: Some("tcp".into()) }).unwrap();
    let saved = loop {
        match read_message(&mut c).unwrap() {
            Some(SessionMessage::Saved { samples, path, .. }) => break (samples, path),
            Some(_) => continue,
            None => panic!("connection closed before save confirmation"),
        }
    };
    let data = dataset::load(std::path::Path::new(&saved.1)).unwrap();
    assert_eq!(data.n_samples(), saved.0);
    assert!(saved.0 >= 30);
    write_message(&mut c, &SessionMessage::Bye { reason: "done".into() }).unwrap();
    flag.store(true, std::sync::atomic::Ordering::Relaxed);
    h.join().unwrap();
}
