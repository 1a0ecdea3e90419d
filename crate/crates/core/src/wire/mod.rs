//! Distributed execution harness.
//!
//! Three OS processes realize the classical channels of the protocol:
//! a physics-engine `source` that owns the joint quantum simulation, an
//! `alice` that couples, post-selects and talks to Bob in classical bits,
//! and a `bob` that measures on trigger and reconstructs. Local realistic
//! simulation of shared quantum statistics is impossible, so both parties
//! hold only classical data plus operation-scoped requests against the
//! source; the Alice -> Bob channel itself carries nothing but the
//! post-selection bits, exactly one per shared copy.
//!
//! See [`frame`] for the bit-exact framing, [`session`] for the session
//! file, and [`roles`] for the three process loops. A loopback session is
//! bit-identical to the in-process sampled mode under the same seed.

pub mod frame;
pub mod net;
pub mod roles;
pub mod session;

pub use frame::{Frame, FrameError, Payload, Role};
pub use roles::{run_alice, run_bob, run_source};
pub use session::{Endpoints, LogEvent, MessageLog, OutputPaths, SessionConfig};

use crate::protocol::ProtocolError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WireError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("session aborted by {by}: {reason}")]
    Aborted { by: String, reason: String },
    #[error("timed out waiting for {peer}")]
    Timeout { peer: String },
    #[error("session configuration: {0}")]
    Session(String),
    #[error(transparent)]
    Run(#[from] ProtocolError),
}

impl WireError {
    /// Process exit code: 2 for protocol aborts, 3 for transport failures,
    /// 1 for configuration problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            WireError::Session(_) => 1,
            WireError::Protocol(_) | WireError::Aborted { .. } | WireError::Run(_) => 2,
            WireError::Frame(_) | WireError::Timeout { .. } => 3,
        }
    }
}
