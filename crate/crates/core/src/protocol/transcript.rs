use std::fmt;
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use super::frame::{Frame, MsgType};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RoleId {
    Participant(usize),
    /// The cloud server.
    Server0,
    /// The decryption party.
    Server1,
    Crs,
}

impl RoleId {
    pub fn is_server(self) -> bool {
        matches!(self, RoleId::Server0 | RoleId::Server1)
    }
}

impl fmt::Display for RoleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoleId::Participant(i) => write!(f, "P{i}"),
            RoleId::Server0 => f.write_str("S0"),
            RoleId::Server1 => f.write_str("S1"),
            RoleId::Crs => f.write_str("CRS"),
        }
    }
}

pub type Digest32 = [u8; 32];

pub fn payload_hash(payload: &[u8]) -> Digest32 {
    Sha256::digest(payload).into()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub sender: RoleId,
    pub receiver: RoleId,
    pub msg_type: MsgType,
    pub payload_hash: Digest32,
    /// `H(previous chain || sender || receiver || type || payload_hash)`.
    pub chain: Digest32,
}

fn chain_step(prev: &Digest32, sender: RoleId, receiver: RoleId, msg_type: MsgType, payload_hash: &Digest32) -> Digest32 {
    let mut h = Sha256::new();
    h.update(prev);
    h.update(sender.to_string().as_bytes());
    h.update([0u8]);
    h.update(receiver.to_string().as_bytes());
    h.update([0u8, msg_type as u8]);
    h.update(payload_hash);
    h.finalize().into()
}

/// Append-only log of every frame sent in a session.
#[derive(Debug, Default)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
    captured: Option<Vec<Vec<u8>>>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    /// Also keeps raw payloads, for wire-content assertions in tests.
    pub fn with_payload_capture() -> Self {
        Transcript { entries: Vec::new(), captured: Some(Vec::new()) }
    }

    pub fn record(&mut self, sender: RoleId, receiver: RoleId, frame: &Frame) {
        let payload_hash = payload_hash(&frame.payload);
        let prev = self.entries.last().map(|e| e.chain).unwrap_or([0u8; 32]);
        let chain = chain_step(&prev, sender, receiver, frame.msg_type, &payload_hash);
        self.entries.push(TranscriptEntry { sender, receiver, msg_type: frame.msg_type, payload_hash, chain });
        if let Some(c) = self.captured.as_mut() {
            c.push(frame.payload.clone());
        }
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn payloads(&self) -> Option<&[Vec<u8>]> {
        self.captured.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn verify_chain(&self) -> bool {
        let mut prev = [0u8; 32];
        for e in &self.entries {
            if chain_step(&prev, e.sender, e.receiver, e.msg_type, &e.payload_hash) != e.chain {
                return false;
            }
            prev = e.chain;
        }
        true
    }

    pub fn server_to_server(&self) -> usize {
        self.entries.iter().filter(|e| e.sender.is_server() && e.receiver.is_server()).count()
    }

    pub fn contains_hash(&self, h: &Digest32) -> bool {
        self.entries.iter().any(|e| &e.payload_hash == h)
    }

    pub fn count(&self, msg_type: MsgType) -> usize {
        self.entries.iter().filter(|e| e.msg_type == msg_type).count()
    }
}

pub type SharedTranscript = Arc<Mutex<Transcript>>;
