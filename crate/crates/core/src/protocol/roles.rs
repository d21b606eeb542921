//! The four protocol steps as independent role state machines.
//!
//! 1. Each participant partially decrypts every ciphertext with its own key.
//! 2. It splits each `p_i` into two additive shares and sends one batch to
//!    each server. `p_i` itself never leaves the participant.
//! 3. Each server locally evaluates `sum_i [p_i] - (k-1) [b]` lane by lane.
//!    Server 0 owns the public `-(k-1) b` term. Servers never talk to each other.
//! 4. Both servers send their result shares to every participant, which
//!    reconstructs and rounds.

use std::collections::BTreeSet;
use std::time::Duration;

use rand::Rng;

use super::frame::{Frame, MsgType, SharePayload};
use super::link::Link;
use super::transcript::RoleId;
use crate::error::{Error, Result};
use crate::shares::{linear_eval_batch, reconstruct_batch, share_batch, Holder, ShareBatch};
use crate::tlwe::{part_dec, MKCiphertext, SecretKey};
use crate::torus::{decode_quarter_bit, Decoded, Torus32};

pub fn holder_role(holder: Holder) -> RoleId {
    match holder {
        Holder::Server0 => RoleId::Server0,
        Holder::Server1 => RoleId::Server1,
    }
}

/// Runs `body`; on failure, best-effort notifies every peer with ABORT and
/// wraps the cause.
fn abort_on_error<T>(role: RoleId, session: u64, links: &mut [&mut dyn Link], body: impl FnOnce(&mut [&mut dyn Link]) -> Result<T>) -> Result<T> {
    body(links).map_err(|e| {
        let cause = e.to_string();
        for l in links.iter_mut() {
            let _ = l.send(&Frame::abort(session, &cause));
        }
        match e {
            Error::Abort { .. } => e,
            _ => Error::Abort { role: role.to_string(), cause },
        }
    })
}

fn expect(frame: Frame, want: MsgType, session: u64, from: RoleId) -> Result<Frame> {
    if frame.msg_type == MsgType::Abort {
        return Err(Error::Abort { role: from.to_string(), cause: String::from_utf8_lossy(&frame.payload).into_owned() });
    }
    if frame.msg_type != want {
        return Err(Error::Transport(format!("expected {want:?} from {from}, got {:?}", frame.msg_type)));
    }
    if frame.session_id != session {
        return Err(Error::Transport(format!("session mismatch from {from}: {:#x}", frame.session_id)));
    }
    Ok(frame)
}

/// Steps 1-2: partial decryption of the batch, then one share batch to each server.
pub fn run_participant<R: Rng + ?Sized>(
    session: u64,
    cts: &[MKCiphertext],
    sk: &SecretKey,
    rng: &mut R,
    to_server0: &mut dyn Link,
    to_server1: &mut dyn Link,
) -> Result<()> {
    let role = RoleId::Participant(sk.party_index);
    let mut links: [&mut dyn Link; 2] = [to_server0, to_server1];
    abort_on_error(role, session, &mut links, |links| {
        let partials = cts.iter().map(|ct| part_dec(ct, sk).map(|pd| pd.p.0)).collect::<Result<Vec<u32>>>()?;
        let (s0, s1) = share_batch(&partials, rng);
        let party = sk.party_index as u16;
        for (link, batch) in links.iter_mut().zip([s0, s1]) {
            let payload = SharePayload { party_index: party, batch }.encode();
            link.send(&Frame::new(MsgType::ShareBatch, session, payload))?;
        }
        Ok(())
    })
}

/// Step 3 for one server: collect one batch per participant, aggregate
/// locally, and send the result share back over every participant link.
pub fn run_server(
    session: u64,
    holder: Holder,
    k: usize,
    b_values: &[Torus32],
    links: &mut [&mut dyn Link],
    timeout: Duration,
) -> Result<ShareBatch> {
    let role = holder_role(holder);
    abort_on_error(role, session, links, |links| {
        if links.len() != k {
            return Err(Error::InvalidParams(format!("{role} expects {k} participant links, has {}", links.len())));
        }
        let mut seen = BTreeSet::new();
        let mut batches = Vec::with_capacity(k);
        for link in links.iter_mut() {
            let from = link.remote();
            let frame = expect(link.recv(timeout)?, MsgType::ShareBatch, session, from)?;
            let payload = SharePayload::decode(&frame.payload)?;
            let party = payload.party_index as usize;
            if payload.holder() != holder {
                return Err(Error::Transport(format!("{role} received a {:?} share from {from}", payload.holder())));
            }
            if party == 0 || party > k || !seen.insert(party) {
                return Err(Error::Transport(format!("{role} received bad party index {party}")));
            }
            if payload.batch.len() != b_values.len() {
                return Err(Error::LengthMismatch(b_values.len(), payload.batch.len()));
            }
            batches.push(payload.batch);
        }
        let constants: Vec<u32> = b_values.iter().map(|b| (-(*b * (k as i64 - 1))).0).collect();
        let result = linear_eval_batch(&batches, &vec![1; k], &constants)?;
        for link in links.iter_mut() {
            let recipient = match link.remote() {
                RoleId::Participant(i) => i as u16,
                other => return Err(Error::Transport(format!("{role} has a link to non-participant {other}"))),
            };
            let payload = SharePayload { party_index: recipient, batch: result.clone() }.encode();
            link.send(&Frame::new(MsgType::ResultShare, session, payload))?;
        }
        Ok(result)
    })
}

/// Step 4 arithmetic: reconstruct and round every lane.
pub fn run_reconstruct(result_share0: &ShareBatch, result_share1: &ShareBatch) -> Result<Vec<Decoded>> {
    let phases = reconstruct_batch(result_share0, result_share1)?;
    Ok(phases.into_iter().map(|p| decode_quarter_bit(Torus32(p))).collect())
}

/// Step 4 for a participant: wait for both result shares, then reconstruct.
/// If either share never arrives there is no output.
pub fn finish_participant(
    session: u64,
    party_index: usize,
    from_server0: &mut dyn Link,
    from_server1: &mut dyn Link,
    timeout: Duration,
) -> Result<Vec<Decoded>> {
    let receive = |link: &mut dyn Link| -> Result<ShareBatch> {
        let from = link.remote();
        let frame = expect(link.recv(timeout)?, MsgType::ResultShare, session, from)?;
        let payload = SharePayload::decode(&frame.payload)?;
        if payload.party_index as usize != party_index {
            return Err(Error::Transport(format!("result share addressed to P{}", payload.party_index)));
        }
        Ok(payload.batch)
    };
    let share0 = receive(from_server0)?;
    let share1 = receive(from_server1)?;
    run_reconstruct(&share0, &share1)
}
