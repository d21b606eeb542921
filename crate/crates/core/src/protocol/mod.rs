//! Two-server distributed decryption.
//!
//! Participants hold individual keys. Two non-colluding servers (server 0 is
//! the cloud, server 1 the decryption party) see only additive shares of the
//! partial decryptions, and every participant ends with the plaintext bits.

pub mod frame;
pub mod link;
pub mod roles;
pub mod tcp;
pub mod transcript;

use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use rand::{Rng, RngCore};

pub use frame::{Frame, MsgType, SharePayload};
pub use link::{channel_pair, ChannelLink, Link};
pub use roles::{finish_participant, run_participant, run_reconstruct, run_server};
pub use transcript::{payload_hash, RoleId, SharedTranscript, Transcript, TranscriptEntry};

use crate::error::{Error, Result};
use crate::shares::{Holder, ShareBatch};
use crate::tlwe::{encrypt_bit_joint, keygen, setup, MKCiphertext, MKParams, SecretKey};
use crate::torus::{role_rng, Decoded, NoiseParams, NoiseSampler, Torus32};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

/// RNG stream layout under one session seed.
const STREAM_SESSION: u64 = 0;
const STREAM_KEYS: u64 = 1;
const STREAM_ENC: u64 = 2;
const STREAM_PARTICIPANT_BASE: u64 = 1 << 16;

#[derive(Clone, Copy, Debug)]
pub struct DistDecConfig {
    pub seed: u64,
    pub timeout: Duration,
}

impl DistDecConfig {
    pub fn new(seed: u64) -> Self {
        DistDecConfig { seed, timeout: DEFAULT_TIMEOUT }
    }

    pub fn session_id(&self) -> u64 {
        role_rng(self.seed, STREAM_SESSION).next_u64()
    }

    /// Private RNG a participant uses for its share masks.
    pub fn participant_rng(&self, party_index: usize) -> rand_chacha::ChaCha20Rng {
        role_rng(self.seed, STREAM_PARTICIPANT_BASE + party_index as u64)
    }
}

#[derive(Debug)]
pub struct DistDecOutcome {
    /// Decoded bits as reconstructed by participant `i + 1`.
    pub outputs: Vec<Vec<Decoded>>,
    pub server_results: [ShareBatch; 2],
    pub transcript: Transcript,
}

impl DistDecOutcome {
    /// The common output. All participants reconstruct the same shares, so
    /// any disagreement is a bug.
    pub fn bits(&self) -> Vec<u8> {
        self.outputs[0].iter().map(|d| d.bit).collect()
    }
}

fn common_width(cts: &[MKCiphertext], keys: &[SecretKey]) -> Result<usize> {
    let k = keys.len();
    if k == 0 {
        return Err(Error::InvalidParams("no participants".into()));
    }
    for (i, sk) in keys.iter().enumerate() {
        if sk.party_index != i + 1 {
            return Err(Error::InvalidParams(format!("key {i} belongs to party {}", sk.party_index)));
        }
    }
    if let Some(ct) = cts.iter().find(|ct| ct.k() != k) {
        return Err(Error::InvalidParams(format!("ciphertext has {} slots, session has {k} parties", ct.k())));
    }
    Ok(k)
}

struct Wiring {
    /// `(to_server0, to_server1)` per participant.
    participant: Vec<(ChannelLink, ChannelLink)>,
    server0: Vec<ChannelLink>,
    server1: Vec<ChannelLink>,
}

fn wire(k: usize, transcript: &SharedTranscript) -> Wiring {
    let mut w = Wiring { participant: Vec::new(), server0: Vec::new(), server1: Vec::new() };
    for i in 1..=k {
        let (p0, s0) = channel_pair(RoleId::Participant(i), RoleId::Server0, Some(transcript.clone()));
        let (p1, s1) = channel_pair(RoleId::Participant(i), RoleId::Server1, Some(transcript.clone()));
        w.participant.push((p0, p1));
        w.server0.push(s0);
        w.server1.push(s1);
    }
    w
}

fn as_dyn(links: &mut [ChannelLink]) -> Vec<&mut dyn Link> {
    links.iter_mut().map(|l| l as &mut dyn Link).collect()
}

fn finish(transcript: SharedTranscript) -> Transcript {
    Arc::try_unwrap(transcript).map(|m| m.into_inner().expect("transcript poisoned")).unwrap_or_default()
}

/// All roles in one thread, stepped in protocol order. The transcript order
/// and every share are a pure function of `cfg.seed`.
pub fn distributed_decrypt(cts: &[MKCiphertext], keys: &[SecretKey], cfg: &DistDecConfig) -> Result<DistDecOutcome> {
    distributed_decrypt_with(cts, keys, cfg, Transcript::new())
}

/// As [`distributed_decrypt`], keeping raw payloads in the transcript.
pub fn distributed_decrypt_captured(
    cts: &[MKCiphertext],
    keys: &[SecretKey],
    cfg: &DistDecConfig,
) -> Result<DistDecOutcome> {
    distributed_decrypt_with(cts, keys, cfg, Transcript::with_payload_capture())
}

fn distributed_decrypt_with(
    cts: &[MKCiphertext],
    keys: &[SecretKey],
    cfg: &DistDecConfig,
    transcript: Transcript,
) -> Result<DistDecOutcome> {
    let k = common_width(cts, keys)?;
    let session = cfg.session_id();
    let b_values: Vec<Torus32> = cts.iter().map(|ct| ct.b()).collect();
    let shared = Arc::new(Mutex::new(transcript));
    let mut w = wire(k, &shared);

    for (sk, (l0, l1)) in keys.iter().zip(w.participant.iter_mut()) {
        let mut rng = cfg.participant_rng(sk.party_index);
        run_participant(session, cts, sk, &mut rng, l0, l1)?;
    }
    let r0 = run_server(session, Holder::Server0, k, &b_values, &mut as_dyn(&mut w.server0), cfg.timeout)?;
    let r1 = run_server(session, Holder::Server1, k, &b_values, &mut as_dyn(&mut w.server1), cfg.timeout)?;
    let mut outputs = Vec::with_capacity(k);
    for (i, (l0, l1)) in w.participant.iter_mut().enumerate() {
        outputs.push(finish_participant(session, i + 1, l0, l1, cfg.timeout)?);
    }
    drop(w);
    Ok(DistDecOutcome { outputs, server_results: [r0, r1], transcript: finish(shared) })
}

/// Every role on its own thread, talking only through links.
pub fn distributed_decrypt_threaded(
    cts: &[MKCiphertext],
    keys: &[SecretKey],
    cfg: &DistDecConfig,
) -> Result<DistDecOutcome> {
    let k = common_width(cts, keys)?;
    let session = cfg.session_id();
    let b_values: Vec<Torus32> = cts.iter().map(|ct| ct.b()).collect();
    let shared = Arc::new(Mutex::new(Transcript::new()));
    let Wiring { participant, mut server0, mut server1 } = wire(k, &shared);
    let timeout = cfg.timeout;

    let (outputs, r0, r1) = thread::scope(|scope| {
        let b = &b_values;
        let h0 = scope.spawn(move || run_server(session, Holder::Server0, k, b, &mut as_dyn(&mut server0), timeout));
        let h1 = scope.spawn(move || run_server(session, Holder::Server1, k, b, &mut as_dyn(&mut server1), timeout));
        let hs: Vec<_> = keys
            .iter()
            .zip(participant)
            .map(|(sk, (mut l0, mut l1))| {
                let mut rng = cfg.participant_rng(sk.party_index);
                scope.spawn(move || {
                    run_participant(session, cts, sk, &mut rng, &mut l0, &mut l1)?;
                    finish_participant(session, sk.party_index, &mut l0, &mut l1, timeout)
                })
            })
            .collect();
        let outputs: Result<Vec<_>> = hs.into_iter().map(|h| h.join().expect("participant panicked")).collect();
        let r0 = h0.join().expect("server panicked");
        let r1 = h1.join().expect("server panicked");
        (outputs, r0, r1)
    });
    let (r0, r1) = (r0?, r1?);
    Ok(DistDecOutcome { outputs: outputs?, server_results: [r0, r1], transcript: finish(shared) })
}

/// A reproducible demo workload: keys, random plaintext bits, and their
/// joint encryptions, all derived from `seed`.
#[derive(Debug)]
pub struct Workload {
    pub params: MKParams,
    pub keys: Vec<SecretKey>,
    pub plaintext: Vec<u8>,
    pub cts: Vec<MKCiphertext>,
}

pub fn demo_workload(n: usize, k: usize, bits: usize, alpha: f64, seed: u64) -> Result<Workload> {
    let params = setup(n, k, NoiseParams::new(alpha, seed))?;
    let mut key_rng = role_rng(seed, STREAM_KEYS);
    let keys = (1..=k).map(|i| keygen(&params, i, &mut key_rng).map(|(sk, _)| sk)).collect::<Result<Vec<_>>>()?;
    let mut sampler = NoiseSampler::with_rng(alpha, role_rng(seed, STREAM_ENC));
    let plaintext: Vec<u8> = (0..bits).map(|_| sampler.rng().random_range(0..2u8)).collect();
    let cts = plaintext.iter().map(|&mu| encrypt_bit_joint(mu, &keys, &params, &mut sampler)).collect();
    Ok(Workload { params, keys, plaintext, cts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shares::tests::max_bucket_sigma;
    use crate::tlwe::{decrypt_naive, part_dec};

    #[test]
    fn zero_noise_k2_reconstructs_quarter() {
        let w = demo_workload(16, 2, 1, 0.0, 3).unwrap();
        let mut w = w;
        w.plaintext = vec![1];
        let mut s = NoiseSampler::with_rng(0.0, role_rng(3, 9));
        w.cts = vec![encrypt_bit_joint(1, &w.keys, &w.params, &mut s)];
        let out = distributed_decrypt(&w.cts, &w.keys, &DistDecConfig::new(5)).unwrap();
        let phase = crate::shares::reconstruct_batch(&out.server_results[0], &out.server_results[1]).unwrap();
        assert_eq!(phase, vec![crate::torus::QUARTER.0]);
        assert_eq!(out.bits(), vec![1]);
    }

    #[test]
    fn one_bit_k2_message_count_and_payloads() {
        let w = demo_workload(16, 2, 1, 2f64.powi(-15), 1).unwrap();
        let out = distributed_decrypt_captured(&w.cts, &w.keys, &DistDecConfig::new(1)).unwrap();
        let t = &out.transcript;
        let outbound: Vec<_> = t.entries().iter().filter(|e| e.sender == RoleId::Participant(1)).collect();
        assert_eq!(outbound.len(), 2);
        for (e, p) in t.entries().iter().zip(t.payloads().unwrap()) {
            if e.msg_type == MsgType::ShareBatch {
                assert_eq!(p.len(), 2 + 1 + 4 + 4);
            }
        }
        assert_eq!(t.len(), 4 * 2);
    }

    #[test]
    fn batch_of_1000_is_two_messages_per_participant() {
        let w = demo_workload(16, 2, 1000, 2f64.powi(-15), 2).unwrap();
        let out = distributed_decrypt_captured(&w.cts, &w.keys, &DistDecConfig::new(2)).unwrap();
        let t = &out.transcript;
        assert_eq!(t.count(MsgType::ShareBatch), 2 * 2);
        assert_eq!(t.count(MsgType::ResultShare), 2 * 2);
        for (e, p) in t.entries().iter().zip(t.payloads().unwrap()) {
            let sp = SharePayload::decode(p).unwrap();
            assert_eq!(sp.batch.len(), 1000);
            assert_eq!(p.len(), 7 + 4000);
            if e.msg_type == MsgType::ShareBatch {
                assert_eq!(RoleId::Participant(sp.party_index as usize), e.sender);
            } else {
                assert_eq!(RoleId::Participant(sp.party_index as usize), e.receiver);
            }
        }
        assert_eq!(out.bits(), w.plaintext);
    }

    #[test]
    fn no_raw_partial_on_the_wire() {
        let w = demo_workload(32, 4, 64, 2f64.powi(-15), 7).unwrap();
        let out = distributed_decrypt_captured(&w.cts, &w.keys, &DistDecConfig::new(7)).unwrap();
        let t = &out.transcript;
        for sk in &w.keys {
            let raw: Vec<u32> = w.cts.iter().map(|ct| part_dec(ct, sk).unwrap().p.0).collect();
            for holder in [Holder::Server0, Holder::Server1] {
                let forged = SharePayload { party_index: sk.party_index as u16, batch: ShareBatch { holder, values: raw.clone() } };
                assert!(!t.contains_hash(&payload_hash(&forged.encode())));
            }
            for payload in t.payloads().unwrap() {
                let words = SharePayload::decode(payload).unwrap().batch.values;
                assert_ne!(words, raw);
            }
        }
    }

    #[test]
    fn matches_naive_for_k8() {
        let w = demo_workload(32, 8, 200, 2f64.powi(-15), 11).unwrap();
        let out = distributed_decrypt(&w.cts, &w.keys, &DistDecConfig::new(11)).unwrap();
        let naive: Vec<u8> = w.cts.iter().map(|ct| decrypt_naive(ct, &w.keys).unwrap()).collect();
        assert_eq!(out.bits(), naive);
        assert_eq!(out.bits(), w.plaintext);
        assert!(out.outputs.iter().all(|o| o == &out.outputs[0]));
        assert_eq!(out.transcript.server_to_server(), 0);
        assert!(out.transcript.verify_chain());
    }

    #[test]
    fn deterministic_under_seed() {
        let w = demo_workload(16, 3, 20, 2f64.powi(-15), 4).unwrap();
        let a = distributed_decrypt(&w.cts, &w.keys, &DistDecConfig::new(4)).unwrap();
        let b = distributed_decrypt(&w.cts, &w.keys, &DistDecConfig::new(4)).unwrap();
        assert_eq!(a.transcript.entries(), b.transcript.entries());
        let c = distributed_decrypt(&w.cts, &w.keys, &DistDecConfig::new(5)).unwrap();
        assert_ne!(a.transcript.entries().last(), c.transcript.entries().last());
        assert_eq!(a.bits(), c.bits());
    }

    #[test]
    fn threaded_agrees_with_sequential() {
        let w = demo_workload(32, 4, 100, 2f64.powi(-15), 8).unwrap();
        let cfg = DistDecConfig::new(8);
        let seq = distributed_decrypt(&w.cts, &w.keys, &cfg).unwrap();
        let thr = distributed_decrypt_threaded(&w.cts, &w.keys, &cfg).unwrap();
        assert_eq!(seq.outputs, thr.outputs);
        assert_eq!(seq.server_results, thr.server_results);
        assert_eq!(thr.transcript.len(), 4 * 4);
        assert_eq!(thr.transcript.server_to_server(), 0);
    }

    #[test]
    fn server0_view_is_uniform() {
        let w = demo_workload(16, 2, 1, 2f64.powi(-15), 21).unwrap();
        let sessions = 10_000;
        let mut top_bytes = Vec::with_capacity(sessions);
        for s in 0..sessions as u64 {
            let cfg = DistDecConfig::new(1000 + s);
            let mut rng = cfg.participant_rng(1);
            let (mut p0, mut s0) = channel_pair(RoleId::Participant(1), RoleId::Server0, None);
            let (mut p1, _s1) = channel_pair(RoleId::Participant(1), RoleId::Server1, None);
            run_participant(cfg.session_id(), &w.cts, &w.keys[0], &mut rng, &mut p0, &mut p1).unwrap();
            let f = s0.recv(Duration::from_secs(1)).unwrap();
            let word = SharePayload::decode(&f.payload).unwrap().batch.values[0];
            top_bytes.push((word >> 24) as u8);
        }
        assert!(max_bucket_sigma(top_bytes.into_iter()) < 5.0);
    }

    #[test]
    fn missing_party_aborts_after_timeout() {
        let w = demo_workload(16, 2, 4, 0.0, 1).unwrap();
        let (mut p0, mut s0a) = channel_pair(RoleId::Participant(1), RoleId::Server0, None);
        let (mut p1, _s1a) = channel_pair(RoleId::Participant(1), RoleId::Server1, None);
        let (_p0b, mut s0b) = channel_pair(RoleId::Participant(2), RoleId::Server0, None);
        let mut rng = role_rng(1, 1);
        run_participant(9, &w.cts, &w.keys[0], &mut rng, &mut p0, &mut p1).unwrap();
        let b: Vec<Torus32> = w.cts.iter().map(|c| c.b()).collect();
        let mut links: Vec<&mut dyn Link> = vec![&mut s0a, &mut s0b];
        let err = run_server(9, Holder::Server0, 2, &b, &mut links, Duration::from_millis(50)).unwrap_err();
        assert!(matches!(err, Error::Abort { ref role, .. } if role == "S0"), "{err}");
        let abort = p0.recv(Duration::from_secs(1)).unwrap();
        assert_eq!(abort.msg_type, MsgType::Abort);
        let err = finish_participant(9, 1, &mut p0, &mut p1, Duration::from_millis(50)).unwrap_err();
        assert!(matches!(err, Error::Timeout(_)), "{err}");
    }

    #[test]
    fn server_rejects_wrong_holder_and_duplicates() {
        let w = demo_workload(16, 2, 2, 0.0, 1).unwrap();
        let b: Vec<Torus32> = w.cts.iter().map(|c| c.b()).collect();
        // Participant 1 sends its server-1 batch down the server-0 link.
        let (mut p_a, mut s_a) = channel_pair(RoleId::Participant(1), RoleId::Server0, None);
        let (mut p_b, mut s_b) = channel_pair(RoleId::Participant(2), RoleId::Server0, None);
        let mut rng = role_rng(1, 1);
        run_participant(1, &w.cts, &w.keys[0], &mut rng, &mut p_b, &mut p_a).unwrap();
        run_participant(1, &w.cts, &w.keys[1], &mut rng, &mut p_b, &mut p_a).unwrap();
        let mut links: Vec<&mut dyn Link> = vec![&mut s_a, &mut s_b];
        let err = run_server(1, Holder::Server0, 2, &b, &mut links, Duration::from_millis(50)).unwrap_err();
        assert!(err.to_string().contains("Server1"), "{err}");
    }

    #[test]
    fn reconstruct_examples() {
        let quarter = crate::shares::share_batch(&[crate::torus::QUARTER.0, 0], &mut role_rng(0, 0));
        let d = run_reconstruct(&quarter.0, &quarter.1).unwrap();
        assert_eq!((d[0].bit, d[1].bit), (1, 0));
    }

    #[test]
    fn rejects_mismatched_keys() {
        let w = demo_workload(16, 2, 2, 0.0, 1).unwrap();
        assert!(distributed_decrypt(&w.cts, &w.keys[..1], &DistDecConfig::new(0)).is_err());
        let swapped = vec![w.keys[1].clone(), w.keys[0].clone()];
        assert!(distributed_decrypt(&w.cts, &swapped, &DistDecConfig::new(0)).is_err());
    }
}
