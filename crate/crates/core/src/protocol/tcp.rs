//! Cross-process transport. One process hosts both servers on a single
//! listening socket; participants open one connection per server and
//! announce themselves with a SETUP frame (`party u16 LE | holder u8`)
//! before the protocol starts. The handshake is transport plumbing and is
//! not recorded in transcripts.

use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::frame::{Frame, MsgType};
use super::link::{Link, TcpLink};
use super::roles::{finish_participant, run_participant, run_server};
use super::transcript::{RoleId, Transcript};
use super::{DistDecConfig, DistDecOutcome};
use crate::error::{Error, Result};
use crate::shares::{Holder, ShareBatch};
use crate::tlwe::{MKCiphertext, SecretKey};
use crate::torus::Torus32;

fn hello(session: u64, party: usize, holder: Holder) -> Frame {
    let mut payload = (party as u16).to_le_bytes().to_vec();
    payload.push(holder.tag());
    Frame::new(MsgType::Setup, session, payload)
}

fn parse_hello(frame: &Frame, session: u64) -> Result<(usize, Holder)> {
    if frame.msg_type != MsgType::Setup || frame.session_id != session || frame.payload.len() != 3 {
        return Err(Error::Transport("malformed handshake".into()));
    }
    let party = u16::from_le_bytes([frame.payload[0], frame.payload[1]]) as usize;
    Ok((party, Holder::from_tag(frame.payload[2])?))
}

/// Hosts server 0 and server 1. Accepts `2k` connections, then runs each
/// server on its own thread. Returns the two result-share batches.
pub fn serve(
    listener: &TcpListener,
    session: u64,
    k: usize,
    b_values: &[Torus32],
    timeout: Duration,
) -> Result<[ShareBatch; 2]> {
    let transcript = Arc::new(Mutex::new(Transcript::new()));
    let mut by_holder: [Vec<Option<TcpLink>>; 2] = [(0..k).map(|_| None).collect(), (0..k).map(|_| None).collect()];
    let deadline = Instant::now() + timeout;
    listener.set_nonblocking(true)?;
    let mut accepted = 0;
    while accepted < 2 * k {
        let stream = match listener.accept() {
            Ok((s, _)) => s,
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                if Instant::now() > deadline {
                    return Err(Error::Timeout(format!("{} of {} participant connections", accepted, 2 * k)));
                }
                thread::sleep(Duration::from_millis(5));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        stream.set_nonblocking(false)?;
        stream.set_read_timeout(Some(timeout))?;
        let mut s = stream;
        let (party, holder) = parse_hello(&Frame::read_from(&mut s)?, session)?;
        if party == 0 || party > k {
            return Err(Error::PartyOutOfRange { index: party, k });
        }
        let slot = &mut by_holder[holder.tag() as usize][party - 1];
        if slot.is_some() {
            return Err(Error::DuplicateParty(party));
        }
        let role = super::roles::holder_role(holder);
        *slot = Some(TcpLink::new(role, RoleId::Participant(party), s, Some(transcript.clone())));
        accepted += 1;
    }
    let [l0, l1] = by_holder.map(|v| v.into_iter().map(|l| l.expect("all slots filled")).collect::<Vec<_>>());
    thread::scope(|scope| {
        let run = |holder: Holder, mut links: Vec<TcpLink>| {
            move || {
                let mut dyns: Vec<&mut dyn Link> = links.iter_mut().map(|l| l as &mut dyn Link).collect();
                run_server(session, holder, k, b_values, &mut dyns, timeout)
            }
        };
        let h0 = scope.spawn(run(Holder::Server0, l0));
        let h1 = scope.spawn(run(Holder::Server1, l1));
        Ok([h0.join().expect("server 0 panicked")?, h1.join().expect("server 1 panicked")?])
    })
}

fn connect_retry(addr: SocketAddr, timeout: Duration) -> Result<TcpStream> {
    let deadline = Instant::now() + timeout;
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(_) if Instant::now() < deadline => thread::sleep(Duration::from_millis(20)),
            Err(e) => return Err(e.into()),
        }
    }
}

/// Hosts every participant in `keys`, each on its own thread, connecting to
/// a process running [`serve`].
pub fn participate(
    addr: SocketAddr,
    cts: &[MKCiphertext],
    keys: &[SecretKey],
    cfg: &DistDecConfig,
) -> Result<DistDecOutcome> {
    let session = cfg.session_id();
    let transcript = Arc::new(Mutex::new(Transcript::new()));
    let outputs = thread::scope(|scope| {
        let handles: Vec<_> = keys
            .iter()
            .map(|sk| {
                let transcript = transcript.clone();
                scope.spawn(move || -> Result<_> {
                    let i = sk.party_index;
                    let mut links = Vec::with_capacity(2);
                    for holder in [Holder::Server0, Holder::Server1] {
                        let mut s = connect_retry(addr, cfg.timeout)?;
                        hello(session, i, holder).write_to(&mut s)?;
                        let remote = super::roles::holder_role(holder);
                        links.push(TcpLink::new(RoleId::Participant(i), remote, s, Some(transcript.clone())));
                    }
                    let (l0, l1) = links.split_at_mut(1);
                    let mut rng = cfg.participant_rng(i);
                    run_participant(session, cts, sk, &mut rng, &mut l0[0], &mut l1[0])?;
                    finish_participant(session, i, &mut l0[0], &mut l1[0], cfg.timeout)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("participant panicked")).collect::<Result<Vec<_>>>()
    })?;
    let transcript = Arc::try_unwrap(transcript).map(|m| m.into_inner().expect("transcript poisoned")).unwrap_or_default();
    // Server results stay on the server side of the socket.
    let server_results = [Holder::Server0, Holder::Server1].map(|holder| ShareBatch { holder, values: Vec::new() });
    Ok(DistDecOutcome { outputs, server_results, transcript })
}
