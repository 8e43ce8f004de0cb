//! Session server for live play: the wire protocol, a per-connection
//! session state machine, and a TCP runner ticking at a fixed rate.

pub mod protocol;
mod server;
mod session;

pub use protocol::{
    decode, decode_body, encode, read_message, write_message, ControlCommand, Frame, SessionMessage, PROTOCOL_VERSION,
};
pub use server::{run_session, Server, ServerConfig};
pub use session::Session;
