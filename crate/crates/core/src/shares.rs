//! Two-party additive secret sharing over `Z_{2^32}`.
//!
//! Only local linear evaluation is supported: the aggregation the servers
//! perform is a signed sum plus a public constant, so no multiplication
//! triples or oblivious transfer are needed. Public constants are folded into
//! server 0's share only.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Holder {
    Server0,
    Server1,
}

impl Holder {
    pub fn tag(self) -> u8 {
        match self {
            Holder::Server0 => 0,
            Holder::Server1 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Holder> {
        match tag {
            0 => Ok(Holder::Server0),
            1 => Ok(Holder::Server1),
            t => Err(Error::Codec(format!("unknown holder tag {t}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArithShare {
    pub holder: Holder,
    pub v: u32,
}

/// `[x]_0 = x - r`, `[x]_1 = r` with `r` uniform.
pub fn share<R: Rng + ?Sized>(x: u32, rng: &mut R) -> (ArithShare, ArithShare) {
    share_with_mask(x, rng.random())
}

pub fn share_with_mask(x: u32, r: u32) -> (ArithShare, ArithShare) {
    (
        ArithShare { holder: Holder::Server0, v: x.wrapping_sub(r) },
        ArithShare { holder: Holder::Server1, v: r },
    )
}

pub fn reconstruct(x0: ArithShare, x1: ArithShare) -> Result<u32> {
    if x0.holder == x1.holder {
        return Err(Error::SameHolder(x0.holder));
    }
    Ok(x0.v.wrapping_add(x1.v))
}

/// `sum_i coeffs[i] * shares[i]`, plus `constant` when the holder is server 0.
pub fn linear_eval(shares: &[ArithShare], coeffs: &[i64], constant: u32) -> Result<ArithShare> {
    if shares.len() != coeffs.len() {
        return Err(Error::LengthMismatch(shares.len(), coeffs.len()));
    }
    let holder = shares.first().map(|s| s.holder).ok_or(Error::LengthMismatch(0, 0))?;
    if shares.iter().any(|s| s.holder != holder) {
        return Err(Error::MixedHolders);
    }
    let mut v = shares.iter().zip(coeffs).fold(0u32, |acc, (s, &c)| acc.wrapping_add(s.v.wrapping_mul(c as u32)));
    if holder == Holder::Server0 {
        v = v.wrapping_add(constant);
    }
    Ok(ArithShare { holder, v })
}

/// Lane-wise batch of shares held by one server; one message carries a whole batch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareBatch {
    pub holder: Holder,
    pub values: Vec<u32>,
}

impl ShareBatch {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Serialized as `holder: u8 | count: u32 LE | count x u32 LE`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + 4 * self.values.len());
        out.push(self.holder.tag());
        out.extend_from_slice(&(self.values.len() as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ShareBatch> {
        let holder = Holder::from_tag(*bytes.first().ok_or_else(|| Error::Codec("empty share batch".into()))?)?;
        let count = crate::codec::read_u32(bytes, 1)? as usize;
        if bytes.len() != 5 + 4 * count {
            return Err(Error::Codec(format!("share batch of {count} needs {} bytes, got {}", 5 + 4 * count, bytes.len())));
        }
        let values = bytes[5..].chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        Ok(ShareBatch { holder, values })
    }
}

/// Shares every lane of `xs`, returning the server-0 and server-1 batches.
pub fn share_batch<R: Rng + ?Sized>(xs: &[u32], rng: &mut R) -> (ShareBatch, ShareBatch) {
    let mut s0 = Vec::with_capacity(xs.len());
    let mut s1 = Vec::with_capacity(xs.len());
    for &x in xs {
        let (a, b) = share(x, rng);
        s0.push(a.v);
        s1.push(b.v);
    }
    (ShareBatch { holder: Holder::Server0, values: s0 }, ShareBatch { holder: Holder::Server1, values: s1 })
}

pub fn reconstruct_batch(x0: &ShareBatch, x1: &ShareBatch) -> Result<Vec<u32>> {
    if x0.holder == x1.holder {
        return Err(Error::SameHolder(x0.holder));
    }
    if x0.len() != x1.len() {
        return Err(Error::LengthMismatch(x0.len(), x1.len()));
    }
    Ok(x0.values.iter().zip(&x1.values).map(|(a, b)| a.wrapping_add(*b)).collect())
}

/// Lane-wise [`linear_eval`]: `out[j] = sum_i coeffs[i] * batches[i][j] (+ constants[j] on server 0)`.
pub fn linear_eval_batch(batches: &[ShareBatch], coeffs: &[i64], constants: &[u32]) -> Result<ShareBatch> {
    if batches.len() != coeffs.len() {
        return Err(Error::LengthMismatch(batches.len(), coeffs.len()));
    }
    let first = batches.first().ok_or(Error::LengthMismatch(0, 0))?;
    let holder = first.holder;
    let lanes = first.len();
    if batches.iter().any(|b| b.holder != holder) {
        return Err(Error::MixedHolders);
    }
    if let Some(b) = batches.iter().find(|b| b.len() != lanes) {
        return Err(Error::LengthMismatch(lanes, b.len()));
    }
    if constants.len() != lanes {
        return Err(Error::LengthMismatch(lanes, constants.len()));
    }
    let mut out = vec![0u32; lanes];
    for (batch, &c) in batches.iter().zip(coeffs) {
        for (o, v) in out.iter_mut().zip(&batch.values) {
            *o = o.wrapping_add(v.wrapping_mul(c as u32));
        }
    }
    if holder == Holder::Server0 {
        for (o, c) in out.iter_mut().zip(constants) {
            *o = o.wrapping_add(*c);
        }
    }
    Ok(ShareBatch { holder, values: out })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::torus::role_rng;

    #[test]
    fn share_examples() {
        let (a, b) = share_with_mask(0, 0);
        assert_eq!((a.v, b.v), (0, 0));
        let (a, b) = share_with_mask(0x4000_0000, 0xFFFF_FFFF);
        assert_eq!((a.v, b.v), (0x4000_0001, 0xFFFF_FFFF));
    }

    #[test]
    fn reconstruct_round_trip() {
        let mut rng = role_rng(1, 0);
        for x in [0, 1, 1 << 31, 0xDEAD_BEEF] {
            let (a, b) = share(x, &mut rng);
            assert_eq!(reconstruct(a, b).unwrap(), x);
            assert_eq!(reconstruct(b, a).unwrap(), x);
        }
        let (a, _) = share(5, &mut rng);
        assert!(matches!(reconstruct(a, a), Err(Error::SameHolder(Holder::Server0))));
    }

    /// Max deviation of 256 byte buckets from the uniform expectation, in sigmas.
    pub(crate) fn max_bucket_sigma(samples: impl Iterator<Item = u8>) -> f64 {
        let mut buckets = [0u64; 256];
        let mut n = 0u64;
        for b in samples {
            buckets[b as usize] += 1;
            n += 1;
        }
        let p = 1.0 / 256.0;
        let mean = n as f64 * p;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        buckets.iter().map(|&c| (c as f64 - mean).abs() / sd).fold(0.0, f64::max)
    }

    #[test]
    fn share_marginals_are_uniform() {
        let mut rng = role_rng(2, 0);
        let x = 0x1234_5678;
        let s0: Vec<u32> = (0..100_000).map(|_| share(x, &mut rng).0.v).collect();
        for byte in 0..4 {
            let dev = max_bucket_sigma(s0.iter().map(|v| (v >> (8 * byte)) as u8));
            assert!(dev < 5.0, "byte {byte}: {dev} sigma");
        }
    }

    #[test]
    fn linear_eval_examples() {
        let mut rng = role_rng(3, 0);
        let (x0, x1) = share(10, &mut rng);
        let (y0, y1) = share(32, &mut rng);
        let z0 = linear_eval(&[x0, y0], &[1, 1], 0).unwrap();
        let z1 = linear_eval(&[x1, y1], &[1, 1], 0).unwrap();
        assert_eq!(reconstruct(z0, z1).unwrap(), 42);

        let t0 = linear_eval(&[x0], &[3], 0).unwrap();
        let t1 = linear_eval(&[x1], &[3], 0).unwrap();
        assert_eq!(reconstruct(t0, t1).unwrap(), 30);

        assert!(matches!(linear_eval(&[x0, y1], &[1, 1], 0), Err(Error::MixedHolders)));
    }

    #[test]
    fn fin_dec_form_on_shares() {
        // k = 2: sum p_i - (k-1) b, with -b folded into server 0's share.
        let mut rng = role_rng(4, 0);
        let (p1, p2, b) = (0x1111_0000u32, 0x2222_0000u32, 0x0F00_0000u32);
        let (a0, a1) = share(p1, &mut rng);
        let (c0, c1) = share(p2, &mut rng);
        let neg_b = b.wrapping_neg();
        let r0 = linear_eval(&[a0, c0], &[1, 1], neg_b).unwrap();
        let r1 = linear_eval(&[a1, c1], &[1, 1], neg_b).unwrap();
        assert_eq!(reconstruct(r0, r1).unwrap(), p1.wrapping_add(p2).wrapping_sub(b));
    }

    #[test]
    fn constant_touches_only_server0() {
        let mut rng = role_rng(5, 0);
        let (x0, x1) = share(77, &mut rng);
        let plain0 = linear_eval(&[x0], &[1], 0).unwrap();
        let plus0 = linear_eval(&[x0], &[1], 9).unwrap();
        let plain1 = linear_eval(&[x1], &[1], 0).unwrap();
        let plus1 = linear_eval(&[x1], &[1], 9).unwrap();
        assert_eq!(plus0.v.wrapping_sub(plain0.v), 9);
        assert_eq!(plus1.v, plain1.v);
    }

    #[test]
    fn batch_codec() {
        let b = ShareBatch { holder: Holder::Server1, values: vec![1, 0xFFFF_FFFF] };
        let bytes = b.to_bytes();
        assert_eq!(bytes, vec![1, 2, 0, 0, 0, 1, 0, 0, 0, 0xFF, 0xFF, 0xFF, 0xFF]);
        assert_eq!(ShareBatch::from_bytes(&bytes).unwrap(), b);
        assert!(ShareBatch::from_bytes(&bytes[..8]).is_err());
        assert!(ShareBatch::from_bytes(&[7, 0, 0, 0, 0]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn linear_homomorphism(
                xs in proptest::collection::vec(any::<u32>(), 1..8),
                seed in any::<u64>(),
                cs in proptest::collection::vec(-1000i64..1000, 8),
                constant in any::<u32>(),
            ) {
                let mut rng = role_rng(seed, 0);
                let coeffs = &cs[..xs.len()];
                let (s0, s1): (Vec<_>, Vec<_>) = xs.iter().map(|&x| share(x, &mut rng)).unzip();
                let r0 = linear_eval(&s0, coeffs, constant).unwrap();
                let r1 = linear_eval(&s1, coeffs, constant).unwrap();
                let want = xs.iter().zip(coeffs).fold(constant, |acc, (&x, &c)| acc.wrapping_add(x.wrapping_mul(c as u32)));
                prop_assert_eq!(reconstruct(r0, r1).unwrap(), want);
            }

            #[test]
            fn batch_matches_scalar(xs in proptest::collection::vec(any::<u32>(), 1..32), seed in any::<u64>()) {
                let mut rng = role_rng(seed, 1);
                let (b0, b1) = share_batch(&xs, &mut rng);
                let consts = vec![3u32; xs.len()];
                let r0 = linear_eval_batch(&[b0.clone(), b0], &[2, -1], &consts).unwrap();
                let r1 = linear_eval_batch(&[b1.clone(), b1], &[2, -1], &consts).unwrap();
                let got = reconstruct_batch(&r0, &r1).unwrap();
                let want: Vec<u32> = xs.iter().map(|x| x.wrapping_add(3)).collect();
                prop_assert_eq!(got, want);
            }
        }
    }
}
