use std::io::BufReader;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, TryRecvError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use log::{info, warn};

use super::protocol::{read_message, write_message, SessionMessage};
use super::session::Session;
use crate::error::{Error, Result};
use crate::sim::SimConfig;

const HELLO_TIMEOUT: Duration = Duration::from_secs(10);
const ACCEPT_POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub sim: SimConfig,
    pub record_dir: Option<PathBuf>,
    /// Wall-clock time per simulation tick.
    pub tick_period: Duration,
}

impl ServerConfig {
    pub fn new(sim: SimConfig, record_dir: Option<PathBuf>) -> Self {
        let tick_period = Duration::from_secs_f64(sim.dt());
        Self { sim, record_dir, tick_period }
    }
}

/// Closes the session with a `bye` carrying the error text.
fn refuse(stream: &mut TcpStream, err: &Error) {
    let _ = write_message(stream, &SessionMessage::Bye { reason: err.to_string() });
    let _ = stream.shutdown(Shutdown::Both);
}

/// Runs one connection: handshake, then a fixed-rate tick loop until the
/// client leaves, breaks protocol, or `shutdown` is raised.
pub fn run_session(mut stream: TcpStream, cfg: &ServerConfig, shutdown: &AtomicBool) -> Result<()> {
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(HELLO_TIMEOUT))?;
    let hello = match read_message(&mut stream) {
        Ok(Some(m)) => m,
        Ok(None) => return Ok(()),
        Err(e) => {
            refuse(&mut stream, &e);
            return Err(e);
        }
    };
    if let Err(e) = Session::check_hello(&hello) {
        refuse(&mut stream, &e);
        return Err(e);
    }
    stream.set_read_timeout(None)?;
    let mut session = Session::new(cfg.sim.clone(), cfg.record_dir.clone())?;
    write_message(&mut stream, &session.hello())?;

    let (tx, rx) = mpsc::channel();
    let mut reader = BufReader::new(stream.try_clone()?);
    let reader_thread = thread::spawn(move || loop {
        let msg = read_message(&mut reader);
        let stop = !matches!(msg, Ok(Some(_)));
        if tx.send(msg).is_err() || stop {
            break;
        }
    });

    let result = tick_loop(&mut stream, &mut session, &rx, cfg.tick_period, shutdown);
    if let Err(e) = &result {
        refuse(&mut stream, e);
    } else {
        let _ = stream.shutdown(Shutdown::Both);
    }
    let _ = reader_thread.join();
    result
}

fn tick_loop(
    stream: &mut TcpStream,
    session: &mut Session,
    rx: &mpsc::Receiver<Result<Option<SessionMessage>>>,
    period: Duration,
    shutdown: &AtomicBool,
) -> Result<()> {
    let mut deadline = Instant::now();
    loop {
        if shutdown.load(Ordering::Relaxed) {
            write_message(stream, &SessionMessage::Bye { reason: "server shutting down".into() })?;
            return Ok(());
        }
        loop {
            match rx.try_recv() {
                Ok(Ok(Some(SessionMessage::Bye { reason }))) => {
                    info!("client left: {reason}");
                    return Ok(());
                }
                Ok(Ok(Some(msg))) => {
                    for reply in session.handle(msg)? {
                        write_message(stream, &reply)?;
                    }
                }
                Ok(Ok(None)) | Err(TryRecvError::Disconnected) => return Ok(()),
                Ok(Err(e)) => return Err(e),
                Err(TryRecvError::Empty) => break,
            }
        }
        let frame = session.tick()?;
        write_message(stream, &SessionMessage::Frame(frame))?;
        deadline += period;
        let now = Instant::now();
        if deadline > now {
            thread::sleep(deadline - now);
        } else {
            deadline = now;
        }
    }
}

/// Accepts connections and runs one session thread per client.
pub struct Server {
    listener: TcpListener,
    cfg: ServerConfig,
    shutdown: Arc<AtomicBool>,
}

impl Server {
    pub fn bind<A: ToSocketAddrs>(addr: A, cfg: ServerConfig) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        Ok(Self { listener, cfg, shutdown: Arc::new(AtomicBool::new(false)) })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Raising this flag makes [`Server::run`] close all sessions and return.
    pub fn shutdown_handle(&self) -> Arc<AtomicBool> {
        self.shutdown.clone()
    }

    pub fn run(&self) -> Result<()> {
        let mut sessions = Vec::new();
        while !self.shutdown.load(Ordering::Relaxed) {
            match self.listener.accept() {
                Ok((stream, peer)) => {
                    info!("session from {peer}");
                    stream.set_nonblocking(false)?;
                    let cfg = self.cfg.clone();
                    let flag = self.shutdown.clone();
                    sessions.push(thread::spawn(move || {
                        if let Err(e) = run_session(stream, &cfg, &flag) {
                            warn!("session {peer} closed: {e}");
                        }
                    }));
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL),
                Err(e) => return Err(e.into()),
            }
            sessions.retain(|h| !h.is_finished());
        }
        for h in sessions {
            let _ = h.join();
        }
        Ok(())
    }
}
