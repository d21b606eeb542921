//! Multi-key TLWE: keys, bit encryption, slot extension, phase and the
//! partial/final decryption pair.
//!
//! A ciphertext `(a_1, .., a_k, b)` encrypts `mu` when
//! `b + sum_i <a_i, s_i> = mu/4 + e (mod 1)`.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::WordCodec;
use crate::error::{Error, Result};
use crate::torus::{decode_quarter_bit, dot_binary, Decoded, NoiseParams, NoiseSampler, Torus32, QUARTER};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MKParams {
    /// TLWE dimension per party.
    pub n: usize,
    /// Number of parties.
    pub k: usize,
    pub noise: NoiseParams,
    /// Nominal security label; informational only.
    pub lambda: u32,
}

impl MKParams {
    /// Multi-key ciphertext length `k*n + 1`.
    pub fn ciphertext_len(&self) -> usize {
        self.k * self.n + 1
    }
}

/// Validates and builds the public parameter record.
pub fn setup(n: usize, k: usize, noise: NoiseParams) -> Result<MKParams> {
    if n == 0 || k == 0 {
        return Err(Error::InvalidParams(format!("need n >= 1 and k >= 1, got n={n}, k={k}")));
    }
    if !(noise.alpha >= 0.0 && noise.alpha.is_finite()) {
        return Err(Error::InvalidParams(format!("alpha must be finite and >= 0, got {}", noise.alpha)));
    }
    Ok(MKParams { n, k, noise, lambda: 110 })
}

/// Binary TLWE secret key of one party (1-based index).
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretKey {
    pub party_index: usize,
    pub s: Vec<u8>,
}

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SecretKey")
            .field("party_index", &self.party_index)
            .field("n", &self.s.len())
            .finish_non_exhaustive()
    }
}

/// Stand-in for the bootstrapping key material a party would publish.
/// Gate bootstrapping is modeled by an oracle, so it carries no data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicKey {
    pub party_index: usize,
}

pub fn keygen<R: Rng + ?Sized>(params: &MKParams, party_index: usize, rng: &mut R) -> Result<(SecretKey, PublicKey)> {
    if party_index == 0 || party_index > params.k {
        return Err(Error::PartyOutOfRange { index: party_index, k: params.k });
    }
    let s = (0..params.n).map(|_| rng.random::<bool>() as u8).collect();
    Ok((SecretKey { party_index, s }, PublicKey { party_index }))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MKCiphertext {
    n: usize,
    k: usize,
    /// `k` consecutive blocks of `n` mask values; slot `i` is block `i-1`.
    a: Vec<Torus32>,
    b: Torus32,
    active: BTreeSet<usize>,
}

impl MKCiphertext {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn b(&self) -> Torus32 {
        self.b
    }

    pub fn len(&self) -> usize {
        self.k * self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn active_slots(&self) -> &BTreeSet<usize> {
        &self.active
    }

    /// Mask block of slot `i` (1-based).
    pub fn block(&self, i: usize) -> &[Torus32] {
        &self.a[(i - 1) * self.n..i * self.n]
    }

    fn block_mut(&mut self, i: usize) -> &mut [Torus32] {
        &mut self.a[(i - 1) * self.n..i * self.n]
    }

    pub(crate) fn zero(n: usize, k: usize) -> Self {
        MKCiphertext { n, k, a: vec![Torus32::ZERO; k * n], b: Torus32::ZERO, active: BTreeSet::new() }
    }

    /// Adds `constant` to `b` (a trivial sample `(0, .., 0, constant)`).
    pub fn add_constant(&mut self, constant: Torus32) {
        self.b += constant;
    }

    /// `self += factor * other`; both operands must already share `k`.
    pub fn add_scaled(&mut self, other: &MKCiphertext, factor: i64) {
        debug_assert_eq!((self.n, self.k), (other.n, other.k));
        for (x, y) in self.a.iter_mut().zip(&other.a) {
            *x += *y * factor;
        }
        self.b += other.b * factor;
        self.active.extend(other.active.iter().copied());
    }

    pub fn scale(&mut self, factor: i64) {
        for x in self.a.iter_mut() {
            *x = *x * factor;
        }
        self.b = self.b * factor;
    }

    /// Injects an extra phase error (test instrumentation).
    pub fn perturb(&mut self, e: Torus32) {
        self.b += e;
    }
}

/// Fresh single-key encryption of `mu` under `sk`, laid out with `params.k` slots.
pub fn encrypt_bit(mu: u8, sk: &SecretKey, params: &MKParams, sampler: &mut NoiseSampler) -> MKCiphertext {
    assert!(mu <= 1, "message must be a bit");
    let mut ct = MKCiphertext::zero(params.n, params.k.max(sk.party_index));
    let block = ct.block_mut(sk.party_index);
    for x in block.iter_mut() {
        *x = sampler.uniform();
    }
    let inner = dot_binary(ct.block(sk.party_index), &sk.s);
    ct.b = QUARTER * mu as i64 - inner + sampler.sample();
    ct.active.insert(sk.party_index);
    ct
}

/// Fresh encryption of `mu` with every slot masked, i.e. a sample under the
/// joint key set. This is what a bootstrapped gate emits.
pub fn encrypt_bit_joint(mu: u8, keys: &[SecretKey], params: &MKParams, sampler: &mut NoiseSampler) -> MKCiphertext {
    assert!(mu <= 1, "message must be a bit");
    let mut ct = MKCiphertext::zero(params.n, params.k);
    let mut b = QUARTER * mu as i64 + sampler.sample();
    for sk in keys {
        let block = ct.block_mut(sk.party_index);
        for x in block.iter_mut() {
            *x = sampler.uniform();
        }
        b -= dot_binary(ct.block(sk.party_index), &sk.s);
        ct.active.insert(sk.party_index);
    }
    ct.b = b;
    ct
}

/// Noiseless, maskless sample `(0, .., 0, mu/4)`.
pub fn trivial_ciphertext(mu: u8, params: &MKParams) -> MKCiphertext {
    assert!(mu <= 1, "message must be a bit");
    let mut ct = MKCiphertext::zero(params.n, params.k);
    ct.b = QUARTER * mu as i64;
    ct
}

/// Places the blocks of `ct` into a `k`-slot ciphertext, zero-filling new slots.
pub fn extend(ct: &MKCiphertext, k: usize) -> Result<MKCiphertext> {
    if let Some(&top) = ct.active.iter().next_back() {
        if top > k {
            return Err(Error::ExtendTooSmall { have: top, want: k });
        }
    }
    if ct.k == k {
        return Ok(ct.clone());
    }
    let mut out = MKCiphertext::zero(ct.n, k);
    for &i in &ct.active {
        out.block_mut(i).copy_from_slice(ct.block(i));
    }
    out.b = ct.b;
    out.active = ct.active.clone();
    Ok(out)
}

fn key_map(keys: &[SecretKey]) -> BTreeMap<usize, &SecretKey> {
    keys.iter().map(|k| (k.party_index, k)).collect()
}

/// `b + sum_i <a_i, s_i>` over the active slots.
pub fn phase(ct: &MKCiphertext, keys: &[SecretKey]) -> Result<Torus32> {
    let keys = key_map(keys);
    let mut acc = ct.b;
    for &i in &ct.active {
        let sk = keys.get(&i).ok_or(Error::MissingKey(i))?;
        acc += dot_binary(ct.block(i), &sk.s);
    }
    Ok(acc)
}

/// Single-decryptor baseline holding every key.
pub fn decrypt_naive(ct: &MKCiphertext, keys: &[SecretKey]) -> Result<u8> {
    Ok(decode_quarter_bit(phase(ct, keys)?).bit)
}

pub fn decrypt_naive_flagged(ct: &MKCiphertext, keys: &[SecretKey]) -> Result<Decoded> {
    Ok(decode_quarter_bit(phase(ct, keys)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialDec {
    pub party_index: usize,
    pub p: Torus32,
}

/// `p_i = b + <a_i, s_i>`. Slots beyond the ciphertext width are zero, so
/// they contribute `p_i = b`.
pub fn part_dec(ct: &MKCiphertext, sk: &SecretKey) -> Result<PartialDec> {
    if sk.party_index == 0 {
        return Err(Error::PartyOutOfRange { index: 0, k: ct.k });
    }
    let p = if sk.party_index <= ct.k { ct.b + dot_binary(ct.block(sk.party_index), &sk.s) } else { ct.b };
    Ok(PartialDec { party_index: sk.party_index, p })
}

/// `sum_i p_i - (k-1) b`: the noisy scaled message before rounding.
pub fn fin_dec(partials: &[PartialDec], b: Torus32, k: usize) -> Result<Torus32> {
    let mut seen = BTreeSet::new();
    for pd in partials {
        if pd.party_index == 0 || pd.party_index > k {
            return Err(Error::PartyOutOfRange { index: pd.party_index, k });
        }
        if !seen.insert(pd.party_index) {
            return Err(Error::DuplicateParty(pd.party_index));
        }
    }
    if let Some(missing) = (1..=k).find(|i| !seen.contains(i)) {
        return Err(Error::MissingParty(missing));
    }
    let sum: Torus32 = partials.iter().map(|pd| pd.p).sum();
    Ok(sum - b * (k as i64 - 1))
}

impl WordCodec for MKCiphertext {
    /// `[n, k, active_count, active.., a.., b]`
    fn to_words(&self) -> Vec<u32> {
        let mut w = Vec::with_capacity(4 + self.active.len() + self.a.len());
        w.push(self.n as u32);
        w.push(self.k as u32);
        w.push(self.active.len() as u32);
        w.extend(self.active.iter().map(|&i| i as u32));
        w.extend(self.a.iter().map(|t| t.0));
        w.push(self.b.0);
        w
    }

    fn from_words(words: &[u32]) -> Result<Self> {
        let bad = || Error::Codec("truncated ciphertext".into());
        let n = *words.first().ok_or_else(bad)? as usize;
        let k = *words.get(1).ok_or_else(bad)? as usize;
        let count = *words.get(2).ok_or_else(bad)? as usize;
        let expected = 3 + count + k * n + 1;
        if words.len() != expected {
            return Err(Error::Codec(format!("ciphertext needs {expected} words, got {}", words.len())));
        }
        let active: BTreeSet<usize> = words[3..3 + count].iter().map(|&i| i as usize).collect();
        if active.iter().any(|&i| i == 0 || i > k) {
            return Err(Error::Codec("active slot out of range".into()));
        }
        let a: Vec<Torus32> = words[3 + count..3 + count + k * n].iter().map(|&x| Torus32(x)).collect();
        let b = Torus32(words[expected - 1]);
        Ok(MKCiphertext { n, k, a, b, active })
    }
}

impl WordCodec for SecretKey {
    /// `[party_index, n, s..]`
    fn to_words(&self) -> Vec<u32> {
        let mut w = vec![self.party_index as u32, self.s.len() as u32];
        w.extend(self.s.iter().map(|&b| b as u32));
        w
    }

    fn from_words(words: &[u32]) -> Result<Self> {
        if words.len() < 2 || words.len() != 2 + words[1] as usize {
            return Err(Error::Codec("malformed secret key".into()));
        }
        if words[2..].iter().any(|&b| b > 1) {
            return Err(Error::Codec("secret key bits must be 0 or 1".into()));
        }
        Ok(SecretKey { party_index: words[0] as usize, s: words[2..].iter().map(|&b| b as u8).collect() })
    }
}

impl WordCodec for PartialDec {
    /// `[party_index, p]`
    fn to_words(&self) -> Vec<u32> {
        vec![self.party_index as u32, self.p.0]
    }

    fn from_words(words: &[u32]) -> Result<Self> {
        match words {
            [i, p] => Ok(PartialDec { party_index: *i as usize, p: Torus32(*p) }),
            _ => Err(Error::Codec("partial decryption is two words".into())),
        }
    }
}
