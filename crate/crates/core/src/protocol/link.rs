//! Point-to-point frame links. The in-process link moves the same encoded
//! bytes a socket would carry.

use std::io::ErrorKind;
use std::net::TcpStream;
use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};

use super::frame::Frame;
use super::transcript::{RoleId, SharedTranscript};
use crate::error::{Error, Result};

pub trait Link: Send {
    fn local(&self) -> RoleId;
    fn remote(&self) -> RoleId;
    fn send(&mut self, frame: &Frame) -> Result<()>;
    fn recv(&mut self, timeout: Duration) -> Result<Frame>;
}

pub struct ChannelLink {
    local: RoleId,
    remote: RoleId,
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    transcript: Option<SharedTranscript>,
}

/// Two connected in-process endpoints.
pub fn channel_pair(a: RoleId, b: RoleId, transcript: Option<SharedTranscript>) -> (ChannelLink, ChannelLink) {
    let (tx_ab, rx_ab) = unbounded();
    let (tx_ba, rx_ba) = unbounded();
    (
        ChannelLink { local: a, remote: b, tx: tx_ab, rx: rx_ba, transcript: transcript.clone() },
        ChannelLink { local: b, remote: a, tx: tx_ba, rx: rx_ab, transcript },
    )
}

impl Link for ChannelLink {
    fn local(&self) -> RoleId {
        self.local
    }

    fn remote(&self) -> RoleId {
        self.remote
    }

    fn send(&mut self, frame: &Frame) -> Result<()> {
        if let Some(t) = &self.transcript {
            t.lock().expect("transcript poisoned").record(self.local, self.remote, frame);
        }
        self.tx
            .send(frame.encode())
            .map_err(|_| Error::Transport(format!("{} -> {}: peer hung up", self.local, self.remote)))
    }

    fn recv(&mut self, timeout: Duration) -> Result<Frame> {
        match self.rx.recv_timeout(timeout) {
            Ok(bytes) => Frame::decode(&bytes),
            Err(RecvTimeoutError::Timeout) => Err(Error::Timeout(format!("{} from {}", self.local, self.remote))),
            Err(RecvTimeoutError::Disconnected) => {
                Err(Error::Transport(format!("{} <- {}: peer hung up", self.local, self.remote)))
            }
        }
    }
}

pub struct TcpLink {
    local: RoleId,
    remote: RoleId,
    stream: TcpStream,
    transcript: Option<SharedTranscript>,
}

impl TcpLink {
    pub fn new(local: RoleId, remote: RoleId, stream: TcpStream, transcript: Option<SharedTranscript>) -> Self {
        let _ = stream.set_nodelay(true);
        TcpLink { local, remote, stream, transcript }
    }
}

impl Link for TcpLink {
    fn local(&self) -> RoleId {
        self.local
    }

    fn remote(&self) -> RoleId {
        self.remote
    }

    fn send(&mut self, frame: &Frame) -> Result<()> {
        if let Some(t) = &self.transcript {
            t.lock().expect("transcript poisoned").record(self.local, self.remote, frame);
        }
        frame.write_to(&mut self.stream)
    }

    fn recv(&mut self, timeout: Duration) -> Result<Frame> {
        self.stream.set_read_timeout(Some(timeout))?;
        match Frame::read_from(&mut self.stream) {
            Err(Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                Err(Error::Timeout(format!("{} from {}", self.local, self.remote)))
            }
            other => other,
        }
    }
}
