//! Bit-exact wire framing.
//!
//! Every message is one frame:
//!
//! ```text
//! +-------+---------+----------+------------+-----------+---------------+---------+
//! | magic | version | msg_type | round_k    | seq       | payload_len   | payload |
//! | 2B    | 1B 0x01 | 1B       | 4B BE u32  | 8B BE u64 | 4B BE u32     | bytes   |
//! +-------+---------+----------+------------+-----------+---------------+---------+
//! ```
//!
//! magic is `0x52 0x44`; the header is 20 bytes and the total frame length
//! is 20 + payload_len. Unknown message types are rejected. All integers
//! are big-endian.
//!
//! Message types and payloads:
//!
//! | type | name         | payload                                   |
//! |------|--------------|-------------------------------------------|
//! | 0x01 | HELLO        | config hash, 32 bytes (round_k = role id)  |
//! | 0x02 | ROUND_BEGIN  | k: u32, set: u8                            |
//! | 0x03 | PS_BIT       | bit: u8 in {0,1}                           |
//! | 0x04 | MEAS_REQUEST | copy_index: u64                            |
//! | 0x05 | MEAS_RESULT  | eigenvalue_index: u16                      |
//! | 0x06 | ROUND_END    | successes: u64                             |
//! | 0x07 | ABORT        | reason, UTF-8                              |
//!
//! PS_BIT travels Alice -> Bob and in the second set carries the AND of her
//! two post-selection outcomes. MEAS_REQUEST/MEAS_RESULT are the
//! operation-scoped exchanges with the source process: Bob uses them for
//! his B measurement, Alice for her projective post-selections (one
//! request per projector, the result index is 1 for success). HELLO's
//! round_k field carries the sender's role id: 0 source, 1 alice, 2 bob.

use std::io::{Read, Write};
use thiserror::Error;

pub const MAGIC: [u8; 2] = [0x52, 0x44];
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 20;
/// Payloads are tiny; anything bigger than this is a framing error.
pub const MAX_PAYLOAD: u32 = 1 << 20;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("i/o failure on the wire: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes {0:02x?}")]
    BadMagic([u8; 2]),
    #[error("unsupported version {0:#04x}")]
    BadVersion(u8),
    #[error("unknown msg_type {0:#04x}")]
    UnknownMsgType(u8),
    #[error("payload of {msg} has length {len}, expected {expected}")]
    BadPayloadLength { msg: &'static str, len: usize, expected: usize },
    #[error("payload too large: {0} bytes")]
    PayloadTooLarge(u32),
    #[error("abort reason is not UTF-8")]
    BadAbortReason,
}

/// Role identifiers carried in HELLO's round_k field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Source = 0,
    Alice = 1,
    Bob = 2,
}

impl Role {
    pub fn from_id(id: u32) -> Option<Role> {
        match id {
            0 => Some(Role::Source),
            1 => Some(Role::Alice),
            2 => Some(Role::Bob),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Role::Source => "source",
            Role::Alice => "alice",
            Role::Bob => "bob",
        }
    }
}

/// Typed payload of one frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Hello { config_hash: [u8; 32] },
    RoundBegin { k: u32, set: u8 },
    PsBit { bit: u8 },
    MeasRequest { copy_index: u64 },
    MeasResult { eigenvalue_index: u16 },
    RoundEnd { successes: u64 },
    Abort { reason: String },
}

impl Payload {
    pub fn msg_type(&self) -> u8 {
        match self {
            Payload::Hello { .. } => 0x01,
            Payload::RoundBegin { .. } => 0x02,
            Payload::PsBit { .. } => 0x03,
            Payload::MeasRequest { .. } => 0x04,
            Payload::MeasResult { .. } => 0x05,
            Payload::RoundEnd { .. } => 0x06,
            Payload::Abort { .. } => 0x07,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Payload::Hello { .. } => "HELLO",
            Payload::RoundBegin { .. } => "ROUND_BEGIN",
            Payload::PsBit { .. } => "PS_BIT",
            Payload::MeasRequest { .. } => "MEAS_REQUEST",
            Payload::MeasResult { .. } => "MEAS_RESULT",
            Payload::RoundEnd { .. } => "ROUND_END",
            Payload::Abort { .. } => "ABORT",
        }
    }

    fn encode_body(&self) -> Vec<u8> {
        match self {
            Payload::Hello { config_hash } => config_hash.to_vec(),
            Payload::RoundBegin { k, set } => {
                let mut v = k.to_be_bytes().to_vec();
                v.push(*set);
                v
            }
            Payload::PsBit { bit } => vec![*bit],
            Payload::MeasRequest { copy_index } => copy_index.to_be_bytes().to_vec(),
            Payload::MeasResult { eigenvalue_index } => eigenvalue_index.to_be_bytes().to_vec(),
            Payload::RoundEnd { successes } => successes.to_be_bytes().to_vec(),
            Payload::Abort { reason } => reason.as_bytes().to_vec(),
        }
    }

    fn decode_body(msg_type: u8, body: &[u8]) -> Result<Payload, FrameError> {
        let expect = |msg: &'static str, n: usize| {
            if body.len() == n {
                Ok(())
            } else {
                Err(FrameError::BadPayloadLength { msg, len: body.len(), expected: n })
            }
        };
        match msg_type {
            0x01 => {
                expect("HELLO", 32)?;
                let mut config_hash = [0u8; 32];
                config_hash.copy_from_slice(body);
                Ok(Payload::Hello { config_hash })
            }
            0x02 => {
                expect("ROUND_BEGIN", 5)?;
                Ok(Payload::RoundBegin {
                    k: u32::from_be_bytes(body[0..4].try_into().unwrap()),
                    set: body[4],
                })
            }
            0x03 => {
                expect("PS_BIT", 1)?;
                Ok(Payload::PsBit { bit: body[0] })
            }
            0x04 => {
                expect("MEAS_REQUEST", 8)?;
                Ok(Payload::MeasRequest { copy_index: u64::from_be_bytes(body.try_into().unwrap()) })
            }
            0x05 => {
                expect("MEAS_RESULT", 2)?;
                Ok(Payload::MeasResult {
                    eigenvalue_index: u16::from_be_bytes(body.try_into().unwrap()),
                })
            }
            0x06 => {
                expect("ROUND_END", 8)?;
                Ok(Payload::RoundEnd { successes: u64::from_be_bytes(body.try_into().unwrap()) })
            }
            0x07 => {
                let reason =
                    String::from_utf8(body.to_vec()).map_err(|_| FrameError::BadAbortReason)?;
                Ok(Payload::Abort { reason })
            }
            other => Err(FrameError::UnknownMsgType(other)),
        }
    }
}

/// One framed message.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub round_k: u32,
    pub seq: u64,
    pub payload: Payload,
}

impl Frame {
    pub fn encode(&self) -> Vec<u8> {
        let body = self.payload.encode_body();
        let mut out = Vec::with_capacity(HEADER_LEN + body.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.payload.msg_type());
        out.extend_from_slice(&self.round_k.to_be_bytes());
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), FrameError> {
        w.write_all(&self.encode())?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Frame, FrameError> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        if header[0..2] != MAGIC {
            return Err(FrameError::BadMagic([header[0], header[1]]));
        }
        if header[2] != VERSION {
            return Err(FrameError::BadVersion(header[2]));
        }
        let msg_type = header[3];
        let round_k = u32::from_be_bytes(header[4..8].try_into().unwrap());
        let seq = u64::from_be_bytes(header[8..16].try_into().unwrap());
        let len = u32::from_be_bytes(header[16..20].try_into().unwrap());
        if len > MAX_PAYLOAD {
            return Err(FrameError::PayloadTooLarge(len));
        }
        let mut body = vec![0u8; len as usize];
        r.read_exact(&mut body)?;
        let payload = Payload::decode_body(msg_type, &body)?;
        Ok(Frame { round_k, seq, payload })
    }
}
