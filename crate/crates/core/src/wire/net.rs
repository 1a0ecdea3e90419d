//! Ordered, framed TCP connection between two roles.

use crate::wire::frame::{Frame, FrameError, Payload, Role};
use crate::wire::WireError;
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

/// One framed connection. Sequence numbers count sent frames per
/// direction; receivers enforce strict monotonicity, so the transport
/// cannot silently reorder or replay within a session.
pub struct Wire {
    stream: TcpStream,
    peer: &'static str,
    send_seq: u64,
    last_recv_seq: Option<u64>,
}

impl Wire {
    pub fn new(stream: TcpStream, peer: &'static str, timeout: Duration) -> Result<Self, WireError> {
        stream.set_nodelay(true).map_err(FrameError::Io)?;
        stream.set_read_timeout(Some(timeout)).map_err(FrameError::Io)?;
        stream.set_write_timeout(Some(timeout)).map_err(FrameError::Io)?;
        Ok(Self { stream, peer, send_seq: 0, last_recv_seq: None })
    }

    pub fn peer(&self) -> &'static str {
        self.peer
    }

    pub fn send(&mut self, round_k: u32, payload: Payload) -> Result<u64, WireError> {
        let seq = self.send_seq;
        let frame = Frame { round_k, seq, payload };
        frame.write_to(&mut self.stream).map_err(|e| self.map_transport(e))?;
        self.send_seq += 1;
        Ok(seq)
    }

    /// Receives one frame, enforcing ordering. An incoming ABORT becomes
    /// an error; an unknown message type is answered with
    /// `ABORT "unknown-msg"` before failing.
    pub fn recv(&mut self) -> Result<Frame, WireError> {
        let frame = match Frame::read_from(&mut self.stream) {
            Ok(f) => f,
            Err(FrameError::UnknownMsgType(t)) => {
                self.send_abort("unknown-msg");
                return Err(WireError::Frame(FrameError::UnknownMsgType(t)));
            }
            Err(e) => return Err(self.map_transport(e)),
        };
        if let Some(last) = self.last_recv_seq {
            if frame.seq <= last {
                self.send_abort("seq-regression");
                return Err(WireError::Protocol(format!(
                    "{}: seq regressed from {last} to {}",
                    self.peer, frame.seq
                )));
            }
        }
        self.last_recv_seq = Some(frame.seq);
        if let Payload::Abort { reason } = &frame.payload {
            return Err(WireError::Aborted { by: self.peer.to_string(), reason: reason.clone() });
        }
        Ok(frame)
    }

    /// Receives and insists on a specific message type.
    pub fn expect(&mut self, want: &'static str) -> Result<Frame, WireError> {
        let frame = self.recv()?;
        if frame.payload.name() != want {
            self.send_abort("unexpected-msg");
            return Err(WireError::Protocol(format!(
                "{}: expected {want}, got {}",
                self.peer,
                frame.payload.name()
            )));
        }
        Ok(frame)
    }

    /// Best-effort ABORT; transport errors at this point are ignored.
    pub fn send_abort(&mut self, reason: &str) {
        let frame = Frame {
            round_k: 0,
            seq: self.send_seq,
            payload: Payload::Abort { reason: reason.to_string() },
        };
        let _ = frame.write_to(&mut self.stream);
        self.send_seq += 1;
    }

    /// True when the peer has pending bytes or has closed; used by the
    /// source to verify Bob sent nothing after a failed post-selection.
    pub fn has_pending_data(&mut self) -> Result<bool, WireError> {
        self.stream.set_nonblocking(true).map_err(FrameError::Io)?;
        let mut byte = [0u8; 1];
        let r = match self.stream.peek(&mut byte) {
            Ok(0) => Ok(false), // peer closed cleanly
            Ok(_) => Ok(true),
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => Ok(false),
            Err(e) => Err(WireError::Frame(FrameError::Io(e))),
        };
        self.stream.set_nonblocking(false).map_err(FrameError::Io)?;
        r
    }

    fn map_transport(&self, e: FrameError) -> WireError {
        match e {
            FrameError::Io(io)
                if io.kind() == std::io::ErrorKind::WouldBlock
                    || io.kind() == std::io::ErrorKind::TimedOut =>
            {
                WireError::Timeout { peer: self.peer.to_string() }
            }
            other => WireError::Frame(other),
        }
    }
}

/// Dials an endpoint, retrying while the peer is still starting up.
pub fn connect_with_retry(
    addr: &str,
    startup_window: Duration,
    io_timeout: Duration,
    peer: &'static str,
) -> Result<Wire, WireError> {
    let deadline = Instant::now() + startup_window;
    loop {
        match TcpStream::connect(addr) {
            Ok(stream) => return Wire::new(stream, peer, io_timeout),
            Err(e) => {
                if Instant::now() >= deadline {
                    return Err(WireError::Frame(FrameError::Io(e)));
                }
                std::thread::sleep(Duration::from_millis(25));
            }
        }
    }
}

/// Binds a listening socket for the given role.
pub fn bind(addr: &str) -> Result<TcpListener, WireError> {
    let addrs: Vec<_> = addr
        .to_socket_addrs()
        .map_err(|e| WireError::Session(format!("bad endpoint {addr}: {e}")))?
        .collect();
    TcpListener::bind(&addrs[..]).map_err(|e| WireError::Frame(FrameError::Io(e)))
}

/// HELLO handshake, initiating side: announce our role and hash, check the
/// peer agrees on the physics.
pub fn hello_exchange(
    wire: &mut Wire,
    me: Role,
    hash: [u8; 32],
    initiate: bool,
) -> Result<Role, WireError> {
    if initiate {
        wire.send(me as u32, Payload::Hello { config_hash: hash })?;
    }
    let frame = wire.expect("HELLO")?;
    let peer_role = Role::from_id(frame.round_k)
        .ok_or_else(|| WireError::Protocol(format!("bad role id {}", frame.round_k)))?;
    match frame.payload {
        Payload::Hello { config_hash } if config_hash == hash => {}
        Payload::Hello { .. } => {
            wire.send_abort("config-hash-mismatch");
            return Err(WireError::Protocol("config hash mismatch".into()));
        }
        _ => unreachable!("expect() returned HELLO"),
    }
    if !initiate {
        wire.send(me as u32, Payload::Hello { config_hash: hash })?;
    }
    Ok(peer_role)
}
