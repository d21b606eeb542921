//! Byte-exact frame codec.
//!
//! ```text
//! frame        = "MKDD" | version u8 (=1) | msg-type u8 | session-id u64 LE | payload-len u32 LE | payload
//! SHAREBATCH   = party-index u16 LE | holder-tag u8 | bit-count u32 LE | bit-count x u32 LE
//! RESULTSHARE  = same layout; party-index names the receiving participant
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::shares::{Holder, ShareBatch};

pub const MAGIC: [u8; 4] = *b"MKDD";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 4 + 1 + 1 + 8 + 4;
/// Upper bound on accepted payloads (64 MiB) so a corrupt length cannot trigger a huge allocation.
pub const MAX_PAYLOAD: u32 = 64 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MsgType {
    Setup = 0,
    PubKey = 1,
    CtBatch = 2,
    ShareBatch = 3,
    ResultShare = 4,
    Abort = 5,
}

impl MsgType {
    pub fn from_u8(v: u8) -> Result<MsgType> {
        Ok(match v {
            0 => MsgType::Setup,
            1 => MsgType::PubKey,
            2 => MsgType::CtBatch,
            3 => MsgType::ShareBatch,
            4 => MsgType::ResultShare,
            5 => MsgType::Abort,
            other => return Err(Error::Codec(format!("unknown message type {other}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub session_id: u64,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: MsgType, session_id: u64, payload: Vec<u8>) -> Frame {
        Frame { msg_type, session_id, payload }
    }

    pub fn abort(session_id: u64, cause: &str) -> Frame {
        Frame::new(MsgType::Abort, session_id, cause.as_bytes().to_vec())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.msg_type as u8);
        out.extend_from_slice(&self.session_id.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    fn parse_header(h: &[u8; HEADER_LEN]) -> Result<(MsgType, u64, u32)> {
        if h[..4] != MAGIC {
            return Err(Error::Codec(format!("bad magic {:02x?}", &h[..4])));
        }
        if h[4] != VERSION {
            return Err(Error::Codec(format!("unsupported version {}", h[4])));
        }
        let msg_type = MsgType::from_u8(h[5])?;
        let session_id = u64::from_le_bytes(h[6..14].try_into().unwrap());
        let len = u32::from_le_bytes(h[14..18].try_into().unwrap());
        if len > MAX_PAYLOAD {
            return Err(Error::Codec(format!("payload length {len} exceeds limit")));
        }
        Ok((msg_type, session_id, len))
    }

    /// Decodes exactly one frame occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Frame> {
        let header: &[u8; HEADER_LEN] = bytes
            .get(..HEADER_LEN)
            .and_then(|h| h.try_into().ok())
            .ok_or_else(|| Error::Codec("truncated frame header".into()))?;
        let (msg_type, session_id, len) = Self::parse_header(header)?;
        if bytes.len() != HEADER_LEN + len as usize {
            return Err(Error::Codec(format!(
                "frame declares {len} payload bytes, carries {}",
                bytes.len() - HEADER_LEN
            )));
        }
        Ok(Frame { msg_type, session_id, payload: bytes[HEADER_LEN..].to_vec() })
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Frame> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        let (msg_type, session_id, len) = Self::parse_header(&header)?;
        let mut payload = vec![0u8; len as usize];
        r.read_exact(&mut payload)?;
        Ok(Frame { msg_type, session_id, payload })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&self.encode())?;
        w.flush()?;
        Ok(())
    }
}

/// Body of SHAREBATCH and RESULTSHARE frames.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharePayload {
    pub party_index: u16,
    pub batch: ShareBatch,
}

impl SharePayload {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(7 + 4 * self.batch.len());
        out.extend_from_slice(&self.party_index.to_le_bytes());
        out.extend_from_slice(&self.batch.to_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<SharePayload> {
        if bytes.len() < 2 {
            return Err(Error::Codec("truncated share payload".into()));
        }
        let party_index = u16::from_le_bytes([bytes[0], bytes[1]]);
        Ok(SharePayload { party_index, batch: ShareBatch::from_bytes(&bytes[2..])? })
    }

    pub fn holder(&self) -> Holder {
        self.batch.holder
    }
}
