//! DSW1 messages between driver, workers and job clients.
//!
//! ```text
//! "DSW1" | msg_type u8 | body_len u32 | body (a BPR1 stream of named fields)
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::pipe::frame::{decode_stream, encode_to_vec, Frame, FrameError};

pub const WIRE_MAGIC: [u8; 4] = *b"DSW1";
pub const HEADER_LEN: usize = 9;

/// Largest collected output a single task may return inline.
pub const MAX_COLLECT_BYTES: usize = 64 * 1024 * 1024;

/// Body limit for task traffic: the inline payload plus room for the
/// surrounding fields.
pub const MAX_TASK_BODY: u32 = MAX_COLLECT_BYTES as u32 + 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    Register = 1,
    RegisterAck = 2,
    Task = 3,
    Result = 4,
    Heartbeat = 5,
    Shutdown = 6,
    /// Job submission from a client (`bagpipe run`).
    Submit = 7,
    /// Reply to [`MsgType::Submit`].
    JobResult = 8,
}

impl TryFrom<u8> for MsgType {
    type Error = WireError;

    fn try_from(v: u8) -> Result<Self, WireError> {
        Ok(match v {
            1 => MsgType::Register,
            2 => MsgType::RegisterAck,
            3 => MsgType::Task,
            4 => MsgType::Result,
            5 => MsgType::Heartbeat,
            6 => MsgType::Shutdown,
            7 => MsgType::Submit,
            8 => MsgType::JobResult,
            other => return Err(WireError::UnknownType(other)),
        })
    }
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("bad message magic")]
    BadMagic,
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("message body of {len} bytes exceeds the {limit}-byte limit")]
    BodyTooLarge { len: u64, limit: u32 },
    #[error("expected a {expected:?} message, got {got:?}")]
    Unexpected { expected: MsgType, got: MsgType },
    #[error("missing field {0:?}")]
    MissingField(String),
    #[error("field {name:?}: {reason}")]
    BadField { name: String, reason: String },
    #[error("connection closed")]
    Closed,
    #[error("malformed body: {0}")]
    Frame(#[from] FrameError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub msg_type: MsgType,
    pub fields: Vec<Frame>,
}

impl WireMessage {
    pub fn new(msg_type: MsgType) -> Self {
        Self {
            msg_type,
            fields: Vec::new(),
        }
    }

    pub fn with_bytes(mut self, name: &str, value: impl Into<Vec<u8>>) -> Self {
        self.fields.push(Frame::new(name, value));
        self
    }

    pub fn with_str(self, name: &str, value: &str) -> Self {
        self.with_bytes(name, value.as_bytes())
    }

    pub fn with_u32(self, name: &str, value: u32) -> Self {
        self.with_bytes(name, value.to_le_bytes())
    }

    pub fn with_u64(self, name: &str, value: u64) -> Self {
        self.with_bytes(name, value.to_le_bytes())
    }

    pub fn field(&self, name: &str) -> Option<&[u8]> {
        self.fields
            .iter()
            .find(|f| f.name == name)
            .map(|f| f.payload.as_slice())
    }

    pub fn bytes(&self, name: &str) -> Result<&[u8], WireError> {
        self.field(name)
            .ok_or_else(|| WireError::MissingField(name.to_string()))
    }

    pub fn str(&self, name: &str) -> Result<&str, WireError> {
        std::str::from_utf8(self.bytes(name)?).map_err(|_| WireError::BadField {
            name: name.to_string(),
            reason: "not UTF-8".into(),
        })
    }

    pub fn u32(&self, name: &str) -> Result<u32, WireError> {
        let b = self.bytes(name)?;
        b.try_into()
            .map(u32::from_le_bytes)
            .map_err(|_| bad_width(name, 4, b.len()))
    }

    pub fn u64(&self, name: &str) -> Result<u64, WireError> {
        let b = self.bytes(name)?;
        b.try_into()
            .map(u64::from_le_bytes)
            .map_err(|_| bad_width(name, 8, b.len()))
    }

    pub fn expect(self, expected: MsgType) -> Result<Self, WireError> {
        if self.msg_type == expected {
            Ok(self)
        } else {
            Err(WireError::Unexpected {
                expected,
                got: self.msg_type,
            })
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let body = encode_to_vec(&self.fields)?;
        if body.len() > u32::MAX as usize {
            return Err(WireError::BodyTooLarge {
                len: body.len() as u64,
                limit: u32::MAX,
            });
        }
        let mut out = Vec::with_capacity(HEADER_LEN + body.len());
        out.extend_from_slice(&WIRE_MAGIC);
        out.push(self.msg_type as u8);
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(&body);
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, mut sink: W) -> Result<(), WireError> {
        sink.write_all(&self.encode()?)?;
        sink.flush()?;
        Ok(())
    }

    /// Reads one message. A clean end of stream before any header byte
    /// yields [`WireError::Closed`].
    pub fn read_from<R: Read>(mut source: R, max_body: u32) -> Result<Self, WireError> {
        let mut header = [0u8; HEADER_LEN];
        let mut filled = 0;
        while filled < HEADER_LEN {
            match source.read(&mut header[filled..]) {
                Ok(0) if filled == 0 => return Err(WireError::Closed),
                Ok(0) => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
                Ok(n) => filled += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        if header[..4] != WIRE_MAGIC {
            return Err(WireError::BadMagic);
        }
        let msg_type = MsgType::try_from(header[4])?;
        let body_len = u32::from_le_bytes(header[5..9].try_into().unwrap());
        if body_len > max_body {
            return Err(WireError::BodyTooLarge {
                len: body_len as u64,
                limit: max_body,
            });
        }
        let mut body = vec![0u8; body_len as usize];
        source.read_exact(&mut body)?;
        let fields = decode_stream(&body[..])?;
        Ok(Self { msg_type, fields })
    }
}

fn bad_width(name: &str, want: usize, got: usize) -> WireError {
    WireError::BadField {
        name: name.to_string(),
        reason: format!("expected {want} bytes, got {got}"),
    }
}
