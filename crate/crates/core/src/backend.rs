//! Encrypted bits and the homomorphic gate layer.
//!
//! A [`Session`] fixes one backend for its lifetime:
//!
//! * `Clear` evaluates plain booleans. It is the semantic reference and the
//!   fast path for exhaustive testing and cost counting.
//! * `NoiseSim` carries real multi-key TLWE ciphertexts. Every two-input gate
//!   builds the exact linear combination of its operands, then a key-holding
//!   bootstrap oracle replaces blind rotation: it rounds the combination's
//!   phase and emits a fresh joint encryption of the result with noise `alpha`.
//!   The oracle reproduces what gate bootstrapping guarantees to the caller
//!   (the right bit, fresh noise) without the cost of blind rotation. Key
//!   material stays inside the session and is never reachable from an
//!   [`EncBit`].

use std::fmt;
use std::ops::Sub;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{distributed_decrypt, DistDecConfig};
use crate::tlwe::{
    decrypt_naive, encrypt_bit, encrypt_bit_joint, extend, keygen, phase, setup, trivial_ciphertext, MKCiphertext,
    MKParams, SecretKey,
};
use crate::torus::{role_rng, NoiseParams, NoiseSampler, Torus32, HALF, QUARTER};

const STREAM_KEYS: u64 = 1;
const STREAM_ENCRYPT: u64 = 1 << 40;
const STREAM_GATE: u64 = 1 << 48;

static NEXT_SESSION: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Clear,
    #[serde(rename = "noisesim")]
    NoiseSim,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clear" => Ok(BackendKind::Clear),
            "noisesim" | "noise-sim" => Ok(BackendKind::NoiseSim),
            other => Err(Error::InvalidParams(format!("unknown backend {other:?}, expected clear|noisesim"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateKind {
    Nand,
    And,
    Or,
    Xor,
    Not,
}

/// A bit under one session's backend. Cloning is cheap and does not
/// duplicate key material.
#[derive(Clone)]
pub enum EncBit {
    Clear(bool),
    Sim { session: u64, ct: Arc<MKCiphertext> },
}

impl fmt::Debug for EncBit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncBit::Clear(b) => write!(f, "Clear({})", *b as u8),
            EncBit::Sim { session, ct } => write!(f, "Sim(session {session}, k={}, b={:?})", ct.k(), ct.b()),
        }
    }
}

impl EncBit {
    /// The underlying ciphertext, if this is a simulated encryption.
    pub fn ciphertext(&self) -> Option<&MKCiphertext> {
        match self {
            EncBit::Sim { ct, .. } => Some(ct),
            EncBit::Clear(_) => None,
        }
    }
}

/// Gate cost counters. Snapshots subtract to give the cost of a region.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCounter {
    pub bootstrapped: u64,
    pub free: u64,
}

impl Sub for GateCounter {
    type Output = GateCounter;

    fn sub(self, rhs: GateCounter) -> GateCounter {
        GateCounter { bootstrapped: self.bootstrapped - rhs.bootstrapped, free: self.free - rhs.free }
    }
}

impl GateCounter {
    /// One JSON-lines record: `{"op":..,"bootstrapped":..,"free":..}`.
    pub fn to_json_line(&self, op: &str) -> String {
        serde_json::json!({ "op": op, "bootstrapped": self.bootstrapped, "free": self.free }).to_string()
    }
}

/// Marks a point in a session's gate stream; [`GateScope::elapsed`] gives
/// the gates spent since. Scopes nest freely.
#[derive(Clone, Copy, Debug)]
pub struct GateScope<'a> {
    session: &'a Session,
    start: GateCounter,
}

impl GateScope<'_> {
    pub fn elapsed(&self) -> GateCounter {
        self.session.counter() - self.start
    }
}

struct SimState {
    params: MKParams,
    keys: Vec<SecretKey>,
    seed: u64,
    gate_index: AtomicU64,
    encrypt_index: AtomicU64,
}

struct Inner {
    id: u64,
    kind: BackendKind,
    sim: Option<SimState>,
    bootstrapped: AtomicU64,
    free: AtomicU64,
}

/// Owns the backend choice, the gate counters and, for `NoiseSim`, the
/// joint key set used by the bootstrap oracle. Cheap to clone and shareable
/// across threads.
#[derive(Clone)]
pub struct Session {
    inner: Arc<Inner>,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("Session");
        d.field("id", &self.inner.id).field("kind", &self.inner.kind);
        if let Some(sim) = &self.inner.sim {
            d.field("n", &sim.params.n).field("k", &sim.params.k).field("alpha", &sim.params.noise.alpha);
        }
        d.field("gates", &self.counter()).finish()
    }
}

impl Session {
    fn build(kind: BackendKind, sim: Option<SimState>) -> Session {
        Session {
            inner: Arc::new(Inner {
                id: NEXT_SESSION.fetch_add(1, Ordering::Relaxed),
                kind,
                sim,
                bootstrapped: AtomicU64::new(0),
                free: AtomicU64::new(0),
            }),
        }
    }

    pub fn clear() -> Session {
        Session::build(BackendKind::Clear, None)
    }

    /// A simulated multi-key session with `k` parties of dimension `n`.
    /// Keys, encryption randomness and per-gate noise all derive from `seed`.
    pub fn noise_sim(n: usize, k: usize, alpha: f64, seed: u64) -> Result<Session> {
        let params = setup(n, k, NoiseParams::new(alpha, seed))?;
        let mut rng = role_rng(seed, STREAM_KEYS);
        let keys = (1..=k).map(|i| keygen(&params, i, &mut rng).map(|(sk, _)| sk)).collect::<Result<Vec<_>>>()?;
        let sim = SimState { params, keys, seed, gate_index: AtomicU64::new(0), encrypt_index: AtomicU64::new(0) };
        Ok(Session::build(BackendKind::NoiseSim, Some(sim)))
    }

    pub fn new(kind: BackendKind, n: usize, k: usize, alpha: f64, seed: u64) -> Result<Session> {
        match kind {
            BackendKind::Clear => Ok(Session::clear()),
            BackendKind::NoiseSim => Session::noise_sim(n, k, alpha, seed),
        }
    }

    pub fn kind(&self) -> BackendKind {
        self.inner.kind
    }

    pub fn params(&self) -> Option<&MKParams> {
        self.inner.sim.as_ref().map(|s| &s.params)
    }

    pub fn counter(&self) -> GateCounter {
        GateCounter {
            bootstrapped: self.inner.bootstrapped.load(Ordering::Relaxed),
            free: self.inner.free.load(Ordering::Relaxed),
        }
    }

    pub fn scope(&self) -> GateScope<'_> {
        GateScope { session: self, start: self.counter() }
    }

    fn sim(&self) -> &SimState {
        self.inner.sim.as_ref().expect("noise-sim state")
    }

    fn wrap(&self, ct: MKCiphertext) -> EncBit {
        EncBit::Sim { session: self.inner.id, ct: Arc::new(ct) }
    }

    fn next_sampler(&self, base: u64, counter: &AtomicU64) -> NoiseSampler {
        let sim = self.sim();
        let i = counter.fetch_add(1, Ordering::Relaxed);
        NoiseSampler::with_rng(sim.params.noise.alpha, role_rng(sim.seed, base + i))
    }

    /// Fresh encryption under the joint key of all parties.
    pub fn encrypt(&self, bit: bool) -> EncBit {
        match self.inner.kind {
            BackendKind::Clear => EncBit::Clear(bit),
            BackendKind::NoiseSim => {
                let sim = self.sim();
                let mut sampler = self.next_sampler(STREAM_ENCRYPT, &sim.encrypt_index);
                self.wrap(encrypt_bit_joint(bit as u8, &sim.keys, &sim.params, &mut sampler))
            }
        }
    }

    /// Fresh encryption under a single party's key (1-based), as a
    /// participant uploading its own data would produce.
    pub fn encrypt_for(&self, party: usize, bit: bool) -> Result<EncBit> {
        match self.inner.kind {
            BackendKind::Clear => Ok(EncBit::Clear(bit)),
            BackendKind::NoiseSim => {
                let sim = self.sim();
                let sk = sim.keys.get(party.wrapping_sub(1)).ok_or(Error::PartyOutOfRange { index: party, k: sim.params.k })?;
                let mut sampler = self.next_sampler(STREAM_ENCRYPT, &sim.encrypt_index);
                Ok(self.wrap(encrypt_bit(bit as u8, sk, &sim.params, &mut sampler)))
            }
        }
    }

    /// Noiseless public constant.
    pub fn trivial(&self, bit: bool) -> EncBit {
        match self.inner.kind {
            BackendKind::Clear => EncBit::Clear(bit),
            BackendKind::NoiseSim => self.wrap(trivial_ciphertext(bit as u8, &self.sim().params)),
        }
    }

    /// Key-holder decryption, used by tests and for reading results back.
    pub fn decrypt(&self, bit: &EncBit) -> Result<bool> {
        match (self.inner.kind, bit) {
            (BackendKind::Clear, EncBit::Clear(b)) => Ok(*b),
            (BackendKind::NoiseSim, EncBit::Sim { session, ct }) if *session == self.inner.id => {
                Ok(decrypt_naive(ct, &self.sim().keys)? == 1)
            }
            _ => Err(Error::BackendMismatch),
        }
    }

    /// Phase error `phase - mu/4` of a simulated bit (test instrumentation).
    pub fn phase_error(&self, bit: &EncBit, mu: bool) -> Result<Torus32> {
        match bit {
            EncBit::Sim { session, ct } if *session == self.inner.id => {
                Ok(phase(ct, &self.sim().keys)? - QUARTER * mu as i64)
            }
            _ => Err(Error::BackendMismatch),
        }
    }

    /// Decrypts a batch through the two-server protocol rather than with
    /// the joint key.
    pub fn decrypt_distributed(&self, bits: &[EncBit], cfg: &DistDecConfig) -> Result<Vec<bool>> {
        match self.inner.kind {
            BackendKind::Clear => bits.iter().map(|b| self.decrypt(b)).collect(),
            BackendKind::NoiseSim => {
                let sim = self.sim();
                let cts = bits
                    .iter()
                    .map(|b| match b {
                        EncBit::Sim { session, ct } if *session == self.inner.id => extend(ct, sim.params.k),
                        _ => Err(Error::BackendMismatch),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let out = distributed_decrypt(&cts, &sim.keys, cfg)?;
                Ok(out.bits().into_iter().map(|b| b == 1).collect())
            }
        }
    }

    fn operand<'a>(&self, bit: &'a EncBit) -> Result<&'a MKCiphertext> {
        match bit {
            EncBit::Sim { session, ct } if *session == self.inner.id => Ok(ct),
            _ => Err(Error::BackendMismatch),
        }
    }

    /// The pre-bootstrap linear combination of a gate. For NOT this is the
    /// gate's output.
    pub fn linear_combination(&self, kind: GateKind, c1: &EncBit, c2: Option<&EncBit>) -> Result<MKCiphertext> {
        let k = self.sim().params.k;
        let x = extend(self.operand(c1)?, k)?;
        let y = match (kind, c2) {
            (GateKind::Not, None) => None,
            (GateKind::Not, Some(_)) => return Err(Error::InvalidParams("NOT takes one operand".into())),
            (_, Some(c2)) => Some(extend(self.operand(c2)?, k)?),
            (_, None) => return Err(Error::InvalidParams(format!("{kind:?} takes two operands"))),
        };
        let eighth = |m: u32| Torus32(m << 29);
        let mut lin = MKCiphertext::zero(x.n(), k);
        match (kind, y) {
            (GateKind::Not, _) => {
                lin.add_constant(QUARTER);
                lin.add_scaled(&x, -1);
            }
            (GateKind::Nand, Some(y)) => {
                lin.add_constant(eighth(5));
                lin.add_scaled(&x, -1);
                lin.add_scaled(&y, -1);
            }
            (GateKind::And, Some(y)) => {
                lin.add_constant(-eighth(1));
                lin.add_scaled(&x, 1);
                lin.add_scaled(&y, 1);
            }
            (GateKind::Or, Some(y)) => {
                lin.add_constant(eighth(1));
                lin.add_scaled(&x, 1);
                lin.add_scaled(&y, 1);
            }
            (GateKind::Xor, Some(y)) => {
                lin.add_scaled(&x, 2);
                lin.add_scaled(&y, -2);
            }
            _ => unreachable!("operand arity checked above"),
        }
        Ok(lin)
    }

    /// Rounds the phase of a gate combination and emits a fresh encryption.
    ///
    /// The two-input combinations land on `{-1/8, 1/8}` for output 0 and on
    /// `{3/8, 5/8}` for output 1 (XOR: `0` and `1/2`), so the decision
    /// boundary sits at `1/4` and `3/4`.
    fn bootstrap_oracle(&self, lin: &MKCiphertext) -> Result<MKCiphertext> {
        let sim = self.sim();
        let shifted = phase(lin, &sim.keys)? - QUARTER;
        let bit = (shifted.0 < HALF.0) as u8;
        let mut sampler = self.next_sampler(STREAM_GATE, &sim.gate_index);
        Ok(encrypt_bit_joint(bit, &sim.keys, &sim.params, &mut sampler))
    }

    pub fn eval_gate(&self, kind: GateKind, c1: &EncBit, c2: Option<&EncBit>) -> Result<EncBit> {
        let out = match self.inner.kind {
            BackendKind::Clear => {
                let x = match c1 {
                    EncBit::Clear(b) => *b,
                    _ => return Err(Error::BackendMismatch),
                };
                let y = match c2 {
                    Some(EncBit::Clear(b)) => Some(*b),
                    Some(_) => return Err(Error::BackendMismatch),
                    None => None,
                };
                let v = match (kind, y) {
                    (GateKind::Not, None) => !x,
                    (GateKind::Nand, Some(y)) => !(x & y),
                    (GateKind::And, Some(y)) => x & y,
                    (GateKind::Or, Some(y)) => x | y,
                    (GateKind::Xor, Some(y)) => x ^ y,
                    _ => return Err(Error::InvalidParams(format!("wrong operand count for {kind:?}"))),
                };
                EncBit::Clear(v)
            }
            BackendKind::NoiseSim => {
                let lin = self.linear_combination(kind, c1, c2)?;
                if kind == GateKind::Not {
                    self.wrap(lin)
                } else {
                    self.wrap(self.bootstrap_oracle(&lin)?)
                }
            }
        };
        let counter = if kind == GateKind::Not { &self.inner.free } else { &self.inner.bootstrapped };
        counter.fetch_add(1, Ordering::Relaxed);
        Ok(out)
    }

    pub fn not(&self, a: &EncBit) -> Result<EncBit> {
        self.eval_gate(GateKind::Not, a, None)
    }

    pub fn and(&self, a: &EncBit, b: &EncBit) -> Result<EncBit> {
        self.eval_gate(GateKind::And, a, Some(b))
    }

    pub fn or(&self, a: &EncBit, b: &EncBit) -> Result<EncBit> {
        self.eval_gate(GateKind::Or, a, Some(b))
    }

    pub fn xor(&self, a: &EncBit, b: &EncBit) -> Result<EncBit> {
        self.eval_gate(GateKind::Xor, a, Some(b))
    }

    pub fn nand(&self, a: &EncBit, b: &EncBit) -> Result<EncBit> {
        self.eval_gate(GateKind::Nand, a, Some(b))
    }
}
