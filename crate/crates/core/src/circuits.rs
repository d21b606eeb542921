//! Two's-complement words of encrypted bits and the integer operator set.
//!
//! Every operator has data-independent control flow, so its gate cost
//! depends only on the operand widths. The `cost_*` functions state those
//! costs in closed form and the tests pin them.

use crate::backend::{EncBit, Session};
use crate::error::{Error, Result};

/// Encrypted two's-complement integer, least significant bit first.
#[derive(Clone, Debug)]
pub struct EncWord {
    bits: Vec<EncBit>,
}

impl EncWord {
    pub fn from_bits(bits: Vec<EncBit>) -> Result<EncWord> {
        if bits.is_empty() {
            return Err(Error::InvalidParams("a word needs at least one bit".into()));
        }
        Ok(EncWord { bits })
    }

    pub fn width(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[EncBit] {
        &self.bits
    }

    pub fn bit(&self, i: usize) -> &EncBit {
        &self.bits[i]
    }
}

/// Selection-combiner used by [`compare_quads_with`]. The masked halves are
/// disjoint, so both give the same value; `Add` is the ripple adder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combiner {
    #[default]
    Or,
    Add,
}

pub fn fits(m: i64, l: usize) -> bool {
    if l >= 64 {
        return true;
    }
    let half = 1i64 << (l - 1);
    (-half..half).contains(&m)
}

/// Reduces `m` into `l`-bit two's complement.
pub fn wrap_to_width(m: i64, l: usize) -> i64 {
    if l >= 64 {
        return m;
    }
    let shift = 64 - l as u32;
    (m << shift) >> shift
}

fn check_fits(m: i64, l: usize) -> Result<()> {
    if l == 0 || !fits(m, l) {
        return Err(Error::Overflow { value: m, width: l });
    }
    Ok(())
}

fn same_width(a: &EncWord, b: &EncWord) -> Result<usize> {
    if a.width() != b.width() {
        return Err(Error::WidthMismatch(a.width(), b.width()));
    }
    Ok(a.width())
}

/// Fresh joint encryption of `m` as an `l`-bit word.
pub fn mk_enc_word(s: &Session, m: i64, l: usize) -> Result<EncWord> {
    check_fits(m, l)?;
    Ok(EncWord { bits: (0..l).map(|i| s.encrypt((m >> i.min(63)) & 1 == 1)).collect() })
}

/// Encryption of `m` under a single participant's key.
pub fn mk_enc_word_for(s: &Session, party: usize, m: i64, l: usize) -> Result<EncWord> {
    check_fits(m, l)?;
    let bits = (0..l).map(|i| s.encrypt_for(party, (m >> i.min(63)) & 1 == 1)).collect::<Result<_>>()?;
    Ok(EncWord { bits })
}

/// Noiseless public constant word.
pub fn trivial_word(s: &Session, m: i64, l: usize) -> Result<EncWord> {
    check_fits(m, l)?;
    Ok(EncWord { bits: (0..l).map(|i| s.trivial((m >> i.min(63)) & 1 == 1)).collect() })
}

pub fn decode_word(s: &Session, w: &EncWord) -> Result<i64> {
    let mut v = 0i64;
    for (i, b) in w.bits.iter().enumerate() {
        if s.decrypt(b)? {
            v |= 1 << i;
        }
    }
    Ok(wrap_to_width(v, w.width()))
}

/// The most significant bit. Costs nothing.
pub fn extract_sign(w: &EncWord) -> EncBit {
    w.bits.last().expect("non-empty word").clone()
}

pub fn cost_add(l: usize) -> u64 {
    5 * l as u64 - 3
}

pub fn cost_sub(l: usize) -> u64 {
    cost_add(l)
}

pub fn cost_homogenize(from: usize, to: usize) -> u64 {
    (to - from) as u64
}

pub fn cost_compare_quads(l: usize, combiner: Combiner) -> u64 {
    let combine = match combiner {
        Combiner::Or => l as u64,
        Combiner::Add => cost_add(l),
    };
    2 * cost_homogenize(l, l + 1) + cost_sub(l + 1) + 2 * l as u64 + combine
}

pub fn cost_mul(l: usize) -> u64 {
    let l = l as u64;
    // Sign-extend `a`, one full-width AND row, then one (AND row + adder)
    // per remaining bit of `b`, each over the `2l - i` live columns.
    let rows: u64 = (1..l).map(|i| (2 * l - i) + cost_add((2 * l - i) as usize)).sum();
    l + 2 * l + rows
}

/// Ripple-carry `a + b + carry_in`; the final carry is discarded, so the top
/// bit computes only the sum (2 gates) and the rest use full adders (5 gates).
fn ripple(s: &Session, a: &[EncBit], b: &[EncBit], carry_in: EncBit) -> Result<Vec<EncBit>> {
    debug_assert_eq!(a.len(), b.len());
    let l = a.len();
    let mut out = Vec::with_capacity(l);
    let mut carry = carry_in;
    for i in 0..l {
        let t = s.xor(&a[i], &b[i])?;
        out.push(s.xor(&t, &carry)?);
        if i + 1 < l {
            let g = s.and(&a[i], &b[i])?;
            let p = s.and(&t, &carry)?;
            carry = s.or(&g, &p)?;
        }
    }
    Ok(out)
}

pub fn mk_add(s: &Session, a: &EncWord, b: &EncWord) -> Result<EncWord> {
    same_width(a, b)?;
    Ok(EncWord { bits: ripple(s, &a.bits, &b.bits, s.trivial(false))? })
}

/// `a + !b + 1`. The inversion is free.
pub fn mk_sub(s: &Session, a: &EncWord, b: &EncWord) -> Result<EncWord> {
    same_width(a, b)?;
    let nb = b.bits.iter().map(|x| s.not(x)).collect::<Result<Vec<_>>>()?;
    Ok(EncWord { bits: ripple(s, &a.bits, &nb, s.trivial(true))? })
}

/// Sign extension to `to` bits. Each new high bit is a fresh encryption of
/// the sign obtained as `AND(trivial(1), sign)`, one gate per bit.
pub fn homogenize(s: &Session, w: &EncWord, to: usize) -> Result<EncWord> {
    extend_with(s, w, to, true)
}

/// The variant that feeds `trivial(0)` into the AND. Its high bits are all
/// zero, so negative values are not preserved; kept to document that.
pub fn homogenize_literal(s: &Session, w: &EncWord, to: usize) -> Result<EncWord> {
    extend_with(s, w, to, false)
}

fn extend_with(s: &Session, w: &EncWord, to: usize, one: bool) -> Result<EncWord> {
    if to < w.width() {
        return Err(Error::WidthMismatch(w.width(), to));
    }
    let sign = extract_sign(w);
    let k = s.trivial(one);
    let mut bits = w.bits.clone();
    for _ in w.width()..to {
        bits.push(s.and(&k, &sign)?);
    }
    Ok(EncWord { bits })
}

/// Keeps the low `to` bits (modular narrowing, no gates).
pub fn truncate(w: &EncWord, to: usize) -> Result<EncWord> {
    if to == 0 || to > w.width() {
        return Err(Error::WidthMismatch(w.width(), to));
    }
    Ok(EncWord { bits: w.bits[..to].to_vec() })
}

/// Homogenizes up or truncates down to `to` bits.
pub fn resize(s: &Session, w: &EncWord, to: usize) -> Result<EncWord> {
    if to >= w.width() {
        homogenize(s, w, to)
    } else {
        truncate(w, to)
    }
}

/// Arithmetic shift right by `shift` followed by narrowing to `to` bits.
/// Bits above the source width are sign copies minted by [`homogenize`].
pub fn rescale(s: &Session, w: &EncWord, shift: usize, to: usize) -> Result<EncWord> {
    let need = shift + to;
    let src = if need > w.width() { homogenize(s, w, need)? } else { w.clone() };
    Ok(EncWord { bits: src.bits[shift..need].to_vec() })
}

/// Division by `2^shift` rounded toward zero, narrowed to `to` bits. Adds
/// `2^shift - 1` when the input is negative (the sign bit copied into the
/// low `shift` positions) before the floor shift, so it costs one adder.
pub fn rescale_toward_zero(s: &Session, w: &EncWord, shift: usize, to: usize) -> Result<EncWord> {
    if shift == 0 {
        return rescale(s, w, 0, to);
    }
    if shift >= w.width() {
        return Err(Error::WidthMismatch(w.width(), shift));
    }
    let sign = extract_sign(w);
    let mut bits: Vec<EncBit> = vec![sign; shift];
    bits.extend((shift..w.width()).map(|_| s.trivial(false)));
    rescale(s, &mk_add(s, w, &EncWord { bits })?, shift, to)
}

/// Bit relabeling with trivial-zero fill. Costs nothing.
pub fn shift_left_const(s: &Session, w: &EncWord, k: usize) -> EncWord {
    let l = w.width();
    let mut bits: Vec<EncBit> = (0..k.min(l)).map(|_| s.trivial(false)).collect();
    bits.extend(w.bits[..l - k.min(l)].iter().cloned());
    EncWord { bits }
}

pub fn add_const(s: &Session, w: &EncWord, c: i64) -> Result<EncWord> {
    mk_add(s, w, &trivial_word(s, wrap_to_width(c, w.width()), w.width())?)
}

pub fn sub_const(s: &Session, w: &EncWord, c: i64) -> Result<EncWord> {
    mk_sub(s, w, &trivial_word(s, wrap_to_width(c, w.width()), w.width())?)
}

/// Non-adjacent form of `c`, least significant digit first.
fn naf(mut c: i64) -> Vec<i8> {
    let mut digits = Vec::new();
    while c != 0 {
        if c & 1 == 1 {
            let d = 2 - (c & 3) as i8;
            digits.push(d);
            c -= d as i64;
        } else {
            digits.push(0);
        }
        c >>= 1;
    }
    digits
}

/// Gates used by [`mul_const`] at width `l`.
pub fn cost_mul_const(c: i64, l: usize) -> u64 {
    let d = naf(c);
    let nonzero = d.iter().filter(|&&x| x != 0).count() as u64;
    let first_negative = d.iter().find(|&&x| x != 0).is_some_and(|&x| x < 0);
    (nonzero.saturating_sub(1) + first_negative as u64) * cost_add(l)
}

/// `c * w` modulo `2^l` by signed shift-and-add over the NAF digits of `c`.
pub fn mul_const(s: &Session, w: &EncWord, c: i64) -> Result<EncWord> {
    let l = w.width();
    let mut acc: Option<EncWord> = None;
    for (k, &d) in naf(c).iter().enumerate() {
        if d == 0 || k >= l {
            continue;
        }
        let term = shift_left_const(s, w, k);
        acc = Some(match (acc, d > 0) {
            (None, true) => term,
            (None, false) => mk_sub(s, &trivial_word(s, 0, l)?, &term)?,
            (Some(a), true) => mk_add(s, &a, &term)?,
            (Some(a), false) => mk_sub(s, &a, &term)?,
        });
    }
    match acc {
        Some(a) => Ok(a),
        None => trivial_word(s, 0, l),
    }
}

/// Signed `l x l -> 2l` product.
///
/// `a` is sign-extended to `2l` bits and multiplied schoolbook-style by the
/// bits of `b` modulo `2^2l`. Sign-extending `b` as well would append rows
/// `l-1 .. 2l-1` that all use `b`'s sign bit. Modulo `2^2l` they sum to
/// `-a * sign * 2^(l-1)`, so they are folded into one subtracted row.
pub fn mk_mul(s: &Session, a: &EncWord, b: &EncWord) -> Result<EncWord> {
    let l = same_width(a, b)?;
    let wide = 2 * l;
    let ax = homogenize(s, a, wide)?;
    let mut acc: Vec<EncBit> = ax.bits.iter().map(|x| s.and(x, &b.bits[0])).collect::<Result<_>>()?;
    if l == 1 {
        // The single bit is the sign row: a * (-b0) = -(a * b0).
        let neg = mk_sub(s, &trivial_word(s, 0, wide)?, &EncWord { bits: acc })?;
        return Ok(neg);
    }
    for i in 1..l {
        let live = wide - i;
        let row: Vec<EncBit> = ax.bits[..live].iter().map(|x| s.and(x, &b.bits[i])).collect::<Result<_>>()?;
        let top = &acc[i..];
        let sum = if i == l - 1 {
            let nrow = row.iter().map(|x| s.not(x)).collect::<Result<Vec<_>>>()?;
            ripple(s, top, &nrow, s.trivial(true))?
        } else {
            ripple(s, top, &row, s.trivial(false))?
        };
        acc.truncate(i);
        acc.extend(sum);
    }
    Ok(EncWord { bits: acc })
}

/// `(w xor s) + s`: negates when `sign` is set. XOR per bit, then a
/// half-adder increment chain.
pub fn cond_negate(s: &Session, w: &EncWord, sign: &EncBit) -> Result<EncWord> {
    let flipped = w.bits.iter().map(|x| s.xor(x, sign)).collect::<Result<Vec<_>>>()?;
    let mut carry = sign.clone();
    let mut bits = Vec::with_capacity(flipped.len());
    for (i, x) in flipped.iter().enumerate() {
        bits.push(s.xor(x, &carry)?);
        if i + 1 < flipped.len() {
            carry = s.and(x, &carry)?;
        }
    }
    Ok(EncWord { bits })
}

/// `(sel AND x) OR (NOT sel AND y)` per bit.
fn mux(s: &Session, sel: &EncBit, x: &[EncBit], y: &[EncBit]) -> Result<Vec<EncBit>> {
    let nsel = s.not(sel)?;
    x.iter()
        .zip(y)
        .map(|(xi, yi)| {
            let l = s.and(sel, xi)?;
            let r = s.and(&nsel, yi)?;
            s.or(&l, &r)
        })
        .collect()
}

/// Signed `2l / l -> l` division truncating toward zero.
///
/// Restoring division on the magnitudes, then the sign `sa xor sb` is
/// reapplied. Quotients that overflow `l` bits wrap. A zero divisor yields
/// the all-ones word (`-1`).
pub fn mk_div(s: &Session, a: &EncWord, b: &EncWord) -> Result<EncWord> {
    let l = b.width();
    if a.width() != 2 * l {
        return Err(Error::WidthMismatch(a.width(), 2 * l));
    }
    let sa = extract_sign(a);
    let sb = extract_sign(b);
    let ma = cond_negate(s, a, &sa)?;
    let mb = cond_negate(s, b, &sb)?;
    // |b| <= 2^(l-1), so the remainder always fits in l - 1 bits and the
    // shifted remainder fits in l. One spare bit makes the trial signed.
    let mut divisor = mb.bits.clone();
    divisor.push(s.trivial(false));
    let ndiv = divisor.iter().map(|x| s.not(x)).collect::<Result<Vec<_>>>()?;
    let mut rem: Vec<EncBit> = (0..l).map(|_| s.trivial(false)).collect();
    let mut quotient = vec![s.trivial(false); 2 * l];
    for i in (0..2 * l).rev() {
        let mut shifted = Vec::with_capacity(l + 1);
        shifted.push(ma.bits[i].clone());
        shifted.extend(rem.iter().cloned());
        let trial = ripple(s, &shifted, &ndiv, s.trivial(true))?;
        let q = s.not(&trial[l])?;
        rem = mux(s, &q, &trial[..l], &shifted[..l])?;
        quotient[i] = q;
    }
    let sign = s.xor(&sa, &sb)?;
    let signed = cond_negate(s, &EncWord { bits: quotient[..l].to_vec() }, &sign)?;
    let mut any = b.bits[0].clone();
    for x in &b.bits[1..] {
        any = s.or(&any, x)?;
    }
    let zero = s.not(&any)?;
    let bits = signed.bits.iter().map(|x| s.or(x, &zero)).collect::<Result<_>>()?;
    Ok(EncWord { bits })
}

/// Returns `d` when `a >= b`, else `c`.
pub fn compare_quads(s: &Session, a: &EncWord, b: &EncWord, c: &EncWord, d: &EncWord) -> Result<EncWord> {
    compare_quads_with(s, a, b, c, d, Combiner::Or)
}

pub fn compare_quads_with(
    s: &Session,
    a: &EncWord,
    b: &EncWord,
    c: &EncWord,
    d: &EncWord,
    combiner: Combiner,
) -> Result<EncWord> {
    let l = same_width(a, b)?;
    same_width(a, c)?;
    same_width(a, d)?;
    let diff = mk_sub(s, &homogenize(s, a, l + 1)?, &homogenize(s, b, l + 1)?)?;
    let sign = extract_sign(&diff);
    let nsign = s.not(&sign)?;
    let mc = c.bits.iter().map(|x| s.and(&sign, x)).collect::<Result<Vec<_>>>()?;
    let md = d.bits.iter().map(|x| s.and(&nsign, x)).collect::<Result<Vec<_>>>()?;
    match combiner {
        Combiner::Or => {
            let bits = mc.iter().zip(&md).map(|(x, y)| s.or(x, y)).collect::<Result<_>>()?;
            Ok(EncWord { bits })
        }
        Combiner::Add => mk_add(s, &EncWord { bits: mc }, &EncWord { bits: md }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn clear() -> Session {
        Session::clear()
    }

    fn enc(s: &Session, m: i64, l: usize) -> EncWord {
        mk_enc_word(s, m, l).unwrap()
    }

    #[test]
    fn encoding_examples() {
        let s = clear();
        let w = enc(&s, -3, 8);
        let bits: Vec<bool> = w.bits().iter().map(|b| s.decrypt(b).unwrap()).collect();
        assert_eq!(bits, (0..8).map(|i| (0xFDu8 >> i) & 1 == 1).collect::<Vec<_>>());
        assert!(enc(&s, 0, 16).bits().iter().all(|b| !s.decrypt(b).unwrap()));
        for m in -128..128 {
            assert_eq!(decode_word(&s, &enc(&s, m, 8)).unwrap(), m);
        }
        assert!(matches!(mk_enc_word(&s, 128, 8), Err(Error::Overflow { value: 128, width: 8 })));
        assert!(mk_enc_word(&s, -129, 8).is_err());
    }

    #[test]
    fn wrap_helper() {
        assert_eq!(wrap_to_width(128, 8), -128);
        assert_eq!(wrap_to_width(-129, 8), 127);
        assert_eq!(wrap_to_width(0x1_0000_0005, 32), 5);
    }

    #[test]
    fn add_sub_examples() {
        let s = clear();
        let v = |w: EncWord| decode_word(&s, &w).unwrap();
        assert_eq!(v(mk_add(&s, &enc(&s, 5, 8), &enc(&s, -3, 8)).unwrap()), 2);
        assert_eq!(v(mk_add(&s, &enc(&s, 127, 8), &enc(&s, 1, 8)).unwrap()), -128);
        assert_eq!(v(mk_sub(&s, &enc(&s, 0, 8), &enc(&s, -128, 8)).unwrap()), -128);
        assert!(matches!(mk_add(&s, &enc(&s, 1, 8), &enc(&s, 1, 9)), Err(Error::WidthMismatch(8, 9))));
    }

    #[test]
    fn add_sub_exhaustive_l8() {
        let s = clear();
        let words: Vec<EncWord> = (-128..128).map(|m| enc(&s, m, 8)).collect();
        for a in -128i64..128 {
            for b in -128i64..128 {
                let (wa, wb) = (&words[(a + 128) as usize], &words[(b + 128) as usize]);
                assert_eq!(decode_word(&s, &mk_add(&s, wa, wb).unwrap()).unwrap(), wrap_to_width(a + b, 8));
                assert_eq!(decode_word(&s, &mk_sub(&s, wa, wb).unwrap()).unwrap(), wrap_to_width(a - b, 8));
            }
        }
    }

    #[test]
    fn add_sub_costs() {
        let s = clear();
        for l in [1, 2, 8, 16, 32] {
            let (a, b) = (enc(&s, 0, l), enc(&s, -1, l));
            let sc = s.scope();
            mk_add(&s, &a, &b).unwrap();
            assert_eq!(sc.elapsed().bootstrapped, cost_add(l));
            let sc = s.scope();
            mk_sub(&s, &a, &b).unwrap();
            assert_eq!(sc.elapsed().bootstrapped, cost_sub(l));
            assert_eq!(sc.elapsed().free, l as u64);
        }
    }

    #[test]
    fn mul_examples_and_cost() {
        let s = clear();
        let p = mk_mul(&s, &enc(&s, -3, 8), &enc(&s, 5, 8)).unwrap();
        assert_eq!(p.width(), 16);
        assert_eq!(decode_word(&s, &p).unwrap(), -15);
        let p = mk_mul(&s, &enc(&s, -128, 8), &enc(&s, -128, 8)).unwrap();
        assert_eq!(decode_word(&s, &p).unwrap(), 16384);
        for l in [2, 4, 8, 16] {
            let sc = s.scope();
            mk_mul(&s, &enc(&s, 1, l), &enc(&s, -1, l)).unwrap();
            assert_eq!(sc.elapsed().bootstrapped, cost_mul(l), "l={l}");
        }
        assert_eq!(cost_mul(16), 2163);
    }

    #[test]
    fn mul_exhaustive_small_and_random_l16() {
        let s = clear();
        for l in 1..=5usize {
            let h = 1i64 << (l - 1);
            for a in -h..h {
                for b in -h..h {
                    let p = mk_mul(&s, &enc(&s, a, l), &enc(&s, b, l)).unwrap();
                    assert_eq!(decode_word(&s, &p).unwrap(), a * b, "{a}*{b} at l={l}");
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..500 {
            let a = rng.random_range(-32768..32768i64);
            let b = rng.random_range(-32768..32768i64);
            assert_eq!(decode_word(&s, &mk_mul(&s, &enc(&s, a, 16), &enc(&s, b, 16)).unwrap()).unwrap(), a * b);
        }
    }

    fn div_oracle(a: i64, b: i64, l: usize) -> i64 {
        if b == 0 {
            -1
        } else {
            wrap_to_width(a / b, l)
        }
    }

    #[test]
    fn div_examples() {
        let s = clear();
        let d = |a, b| decode_word(&s, &mk_div(&s, &enc(&s, a, 16), &enc(&s, b, 8)).unwrap()).unwrap();
        assert_eq!(d(100, 7), 14);
        assert_eq!(d(-100, 7), -14);
        assert_eq!(d(100, -7), -14);
        assert_eq!(d(-100, -7), 14);
        assert_eq!(d(5, 0), -1);
        assert_eq!(d(0, 0), -1);
        assert_eq!(d(-32768, -128), wrap_to_width(256, 8));
        assert_eq!(d(-32768, 1), wrap_to_width(-32768, 8));
        assert!(mk_div(&s, &enc(&s, 1, 15), &enc(&s, 1, 8)).is_err());
    }

    #[test]
    fn div_exhaustive_reduced_width() {
        let s = clear();
        let l = 5;
        for a in -512i64..512 {
            let wa = enc(&s, a, 2 * l);
            for b in -16i64..16 {
                let q = decode_word(&s, &mk_div(&s, &wa, &enc(&s, b, l)).unwrap()).unwrap();
                assert_eq!(q, div_oracle(a, b, l), "{a}/{b}");
            }
        }
    }

    #[test]
    fn sign_and_homogenize() {
        let s = clear();
        let sg = |m: i64| s.decrypt(&extract_sign(&enc(&s, m, 8))).unwrap();
        assert!(sg(-1));
        assert!(!sg(0));
        assert!(!sg(127));
        for m in -128..128 {
            let w = homogenize(&s, &enc(&s, m, 8), 16).unwrap();
            assert_eq!(w.width(), 16);
            assert_eq!(decode_word(&s, &w).unwrap(), m);
            let twice = homogenize(&s, &w, 16).unwrap();
            assert_eq!(decode_word(&s, &twice).unwrap(), m);
        }
        let w = homogenize(&s, &enc(&s, 5, 8), 16).unwrap();
        assert!(w.bits()[8..].iter().all(|b| !s.decrypt(b).unwrap()));
        let sc = s.scope();
        homogenize(&s, &enc(&s, -3, 8), 16).unwrap();
        assert_eq!(sc.elapsed().bootstrapped, 8);
        assert!(homogenize(&s, &enc(&s, 1, 8), 4).is_err());
    }

    #[test]
    fn literal_homogenizer_drops_the_sign() {
        let s = clear();
        let w = homogenize_literal(&s, &enc(&s, -3, 8), 16).unwrap();
        assert_eq!(decode_word(&s, &w).unwrap(), 253);
        let w = homogenize_literal(&s, &enc(&s, 3, 8), 16).unwrap();
        assert_eq!(decode_word(&s, &w).unwrap(), 3);
    }

    #[test]
    fn compare_quads_examples_and_cost() {
        let s = clear();
        let cq = |a, b, c, d| {
            let w = |m| enc(&s, m, 8);
            decode_word(&s, &compare_quads(&s, &w(a), &w(b), &w(c), &w(d)).unwrap()).unwrap()
        };
        assert_eq!(cq(3, 3, 7, 9), 9);
        assert_eq!(cq(-5, 2, 7, 9), 7);
        assert_eq!(cq(-128, 127, 1, 2), 1);
        assert_eq!(cq(127, -128, 1, 2), 2);
        for comb in [Combiner::Or, Combiner::Add] {
            for l in [4, 6, 16] {
                let w = |m| enc(&s, m, l);
                let sc = s.scope();
                compare_quads_with(&s, &w(1), &w(2), &w(3), &w(4), comb).unwrap();
                assert_eq!(sc.elapsed().bootstrapped, cost_compare_quads(l, comb));
            }
        }
        assert_eq!(cost_compare_quads(16, Combiner::Or), 8 * 16 + 4);
    }

    #[test]
    fn compare_quads_exhaustive_l6() {
        let s = clear();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for a in -16i64..16 {
            for b in -16i64..16 {
                let c = rng.random_range(-32..32);
                let d = rng.random_range(-32..32);
                let want = if a >= b { d } else { c };
                let w = |m| enc(&s, m, 6);
                for comb in [Combiner::Or, Combiner::Add] {
                    let got = compare_quads_with(&s, &w(a), &w(b), &w(c), &w(d), comb).unwrap();
                    assert_eq!(decode_word(&s, &got).unwrap(), want);
                }
            }
        }
    }

    #[test]
    fn constant_helpers() {
        let s = clear();
        let v = |w: &EncWord| decode_word(&s, w).unwrap();
        let x = enc(&s, 3, 8);
        assert_eq!(v(&shift_left_const(&s, &x, 2)), 12);
        assert_eq!(v(&shift_left_const(&s, &x, 0)), 3);
        assert_eq!(v(&add_const(&s, &x, 8).unwrap()), 11);
        assert_eq!(v(&sub_const(&s, &x, 8).unwrap()), -5);
        let sc = s.scope();
        shift_left_const(&s, &x, 3);
        assert_eq!(sc.elapsed().bootstrapped, 0);
        for c in [-85i64, -17, -1, 0, 1, 2, 3, 7, 21, 85, 1000] {
            for m in [-100i64, -7, 0, 1, 33, 127] {
                let w = enc(&s, m, 16);
                let sc = s.scope();
                let got = mul_const(&s, &w, c).unwrap();
                assert_eq!(sc.elapsed().bootstrapped, cost_mul_const(c, 16), "c={c}");
                assert_eq!(v(&got), wrap_to_width(c * m, 16), "{c}*{m}");
            }
        }
    }

    #[test]
    fn rescale_and_resize() {
        let s = clear();
        let v = |w: &EncWord| decode_word(&s, w).unwrap();
        let w = enc(&s, -1000, 32);
        assert_eq!(v(&rescale(&s, &w, 4, 16).unwrap()), -1000 >> 4);
        let w = enc(&s, -7, 8);
        assert_eq!(v(&rescale(&s, &w, 1, 16).unwrap()), -4);
        assert_eq!(v(&resize(&s, &w, 4).unwrap()), wrap_to_width(-7, 4));
        assert_eq!(v(&resize(&s, &w, 12).unwrap()), -7);
    }

    #[test]
    fn rescale_toward_zero_exhaustive_l10() {
        let s = clear();
        for x in -512i64..512 {
            let w = enc(&s, x, 10);
            for shift in 0..4 {
                let got = decode_word(&s, &rescale_toward_zero(&s, &w, shift, 10).unwrap()).unwrap();
                assert_eq!(got, x / (1 << shift), "{x} {shift}");
            }
        }
        let before = s.counter();
        rescale_toward_zero(&s, &enc(&s, -3, 16), 4, 16).unwrap();
        assert_eq!((s.counter() - before).bootstrapped, cost_add(16) + cost_homogenize(16, 20));
    }

    #[test]
    fn cond_negate_values() {
        let s = clear();
        for m in -128..128 {
            for neg in [false, true] {
                let got = cond_negate(&s, &enc(&s, m, 8), &s.encrypt(neg)).unwrap();
                let want = if neg { wrap_to_width(-m, 8) } else { m };
                assert_eq!(decode_word(&s, &got).unwrap(), want);
            }
        }
    }

    #[test]
    fn noise_sim_matches_clear() {
        let c = clear();
        let n = Session::noise_sim(16, 2, 2f64.powi(-25), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let a = rng.random_range(-128..128i64);
            let b = rng.random_range(-128..128i64);
            for s in [&c, &n] {
                let (wa, wb) = (enc(s, a, 8), enc(s, b, 8));
                assert_eq!(decode_word(s, &mk_add(s, &wa, &wb).unwrap()).unwrap(), wrap_to_width(a + b, 8));
                assert_eq!(decode_word(s, &mk_mul(s, &wa, &wb).unwrap()).unwrap(), a * b);
                let q = mk_div(s, &homogenize(s, &wa, 16).unwrap(), &wb).unwrap();
                assert_eq!(decode_word(s, &q).unwrap(), div_oracle(a, b, 8));
            }
        }
    }
}
