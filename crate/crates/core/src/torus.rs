//! Discretized torus arithmetic and noise sampling.
//!
//! A [`Torus32`] is an element of `R/Z` stored as `value / 2^32`. All ring
//! operations are plain wrapping `u32` arithmetic, which is exactly addition
//! modulo one on the torus.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

const TWO_POW_32: f64 = 4_294_967_296.0;

/// One eighth of the torus; the decryption noise budget.
pub const EIGHTH: Torus32 = Torus32(1 << 29);
/// One quarter of the torus; the encoding of message bit 1.
pub const QUARTER: Torus32 = Torus32(1 << 30);
/// One half of the torus.
pub const HALF: Torus32 = Torus32(1 << 31);

#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Torus32(pub u32);

impl Torus32 {
    pub const ZERO: Torus32 = Torus32(0);

    /// Maps a real number onto the 32-bit torus grid: `round(frac(r) * 2^32) mod 2^32`.
    pub fn from_real(r: f64) -> Self {
        assert!(r.is_finite(), "torus_from_real needs a finite input");
        let frac = r - r.floor();
        let scaled = (frac * TWO_POW_32).round();
        Torus32((scaled as u64 & 0xFFFF_FFFF) as u32)
    }

    /// The centered real representative in `[-1/2, 1/2)`.
    pub fn to_real(self) -> f64 {
        self.signed() as f64 / TWO_POW_32
    }

    /// The value reinterpreted as a signed offset from zero.
    pub fn signed(self) -> i32 {
        self.0 as i32
    }

    /// Distance to `other` on the torus, as an unsigned grid distance.
    pub fn distance(self, other: Torus32) -> u32 {
        (self - other).signed().unsigned_abs()
    }
}

/// Free-function spelling of [`Torus32::from_real`].
pub fn torus_from_real(r: f64) -> Torus32 {
    Torus32::from_real(r)
}

impl fmt::Debug for Torus32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Torus32({:#010x})", self.0)
    }
}

impl Add for Torus32 {
    type Output = Torus32;
    fn add(self, rhs: Torus32) -> Torus32 {
        Torus32(self.0.wrapping_add(rhs.0))
    }
}

impl AddAssign for Torus32 {
    fn add_assign(&mut self, rhs: Torus32) {
        self.0 = self.0.wrapping_add(rhs.0);
    }
}

impl Sub for Torus32 {
    type Output = Torus32;
    fn sub(self, rhs: Torus32) -> Torus32 {
        Torus32(self.0.wrapping_sub(rhs.0))
    }
}

impl SubAssign for Torus32 {
    fn sub_assign(&mut self, rhs: Torus32) {
        self.0 = self.0.wrapping_sub(rhs.0);
    }
}

impl Neg for Torus32 {
    type Output = Torus32;
    fn neg(self) -> Torus32 {
        Torus32(self.0.wrapping_neg())
    }
}

impl Mul<i64> for Torus32 {
    type Output = Torus32;
    fn mul(self, rhs: i64) -> Torus32 {
        Torus32(self.0.wrapping_mul(rhs as u32))
    }
}

impl std::iter::Sum for Torus32 {
    fn sum<I: Iterator<Item = Torus32>>(iter: I) -> Torus32 {
        iter.fold(Torus32::ZERO, Add::add)
    }
}

/// Inner product of a torus vector with a binary key.
pub fn dot_binary(a: &[Torus32], s: &[u8]) -> Torus32 {
    debug_assert_eq!(a.len(), s.len());
    let acc = a
        .iter()
        .zip(s)
        .fold(0u32, |acc, (ai, &si)| acc.wrapping_add(ai.0 & (si as u32).wrapping_neg()));
    Torus32(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Standard deviation of the torus Gaussian.
    pub alpha: f64,
    pub rng_seed: u64,
}

impl NoiseParams {
    /// Placeholder default: `2^-15`. No concrete experimental value is on record,
    /// so this is configuration, not a measured parameter.
    pub const DEFAULT_ALPHA: f64 = 1.0 / 32768.0;

    pub fn new(alpha: f64, rng_seed: u64) -> Self {
        NoiseParams { alpha, rng_seed }
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams::new(Self::DEFAULT_ALPHA, 0)
    }
}

/// Seeded, splittable generator. Stream `s` of seed `x` is the same in every
/// process, so independently started roles replay identically.
pub fn role_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Rounded Gaussian sampler on the torus grid. Each role owns its own.
#[derive(Clone, Debug)]
pub struct NoiseSampler {
    alpha: f64,
    normal: Option<Normal<f64>>,
    rng: ChaCha20Rng,
}

impl NoiseSampler {
    pub fn new(params: NoiseParams) -> Self {
        Self::with_rng(params.alpha, ChaCha20Rng::seed_from_u64(params.rng_seed))
    }

    pub fn with_rng(alpha: f64, rng: ChaCha20Rng) -> Self {
        assert!(alpha >= 0.0 && alpha.is_finite(), "noise alpha must be finite and >= 0");
        let normal = (alpha > 0.0).then(|| Normal::new(0.0, alpha).expect("valid stddev"));
        NoiseSampler { alpha, normal, rng }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sample(&mut self) -> Torus32 {
        match &self.normal {
            None => Torus32::ZERO,
            Some(normal) => {
                let e = normal.sample(&mut self.rng);
                Torus32((e * TWO_POW_32).round() as i64 as u32)
            }
        }
    }

    /// Uniform torus element from the same stream (used for masks).
    pub fn uniform(&mut self) -> Torus32 {
        Torus32(self.rng.random())
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }
}

/// Result of decoding a phase in the `mu/4` message space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Decoded {
    pub bit: u8,
    /// Set when the phase lies in neither `[1/8, 3/8)` nor `[7/8, 1/8)`.
    pub out_of_band: bool,
}

/// Decodes a phase encoding `mu/4 + e`.
///
/// Bit 1 owns `[1/8, 3/8)` and bit 0 owns `[7/8, 1) ∪ [0, 1/8)`. Phases
/// outside both bands decode to the nearer message (`[3/8, 5/8)` to 1,
/// `[5/8, 7/8)` to 0) with the out-of-band flag raised.
pub fn decode_quarter_bit(phase: Torus32) -> Decoded {
    let v = phase.0;
    const E1: u32 = 1 << 29; // 1/8
    const E3: u32 = 3 << 29; // 3/8
    const E5: u32 = 5 << 29; // 5/8
    const E7: u32 = 7 << 29; // 7/8
    match v {
        _ if v < E1 || v >= E7 => Decoded { bit: 0, out_of_band: false },
        _ if v < E3 => Decoded { bit: 1, out_of_band: false },
        _ if v < E5 => Decoded { bit: 1, out_of_band: true },
        _ => Decoded { bit: 0, out_of_band: true },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_real_examples() {
        assert_eq!(torus_from_real(0.0), Torus32(0));
        assert_eq!(torus_from_real(0.25), Torus32(0x4000_0000));
        assert_eq!(torus_from_real(5.0 / 8.0), Torus32(0xA000_0000));
        assert_eq!(torus_from_real(-1.0 / 8.0), Torus32(0xE000_0000));
        assert_eq!(torus_from_real(3.75), Torus32(0xC000_0000));
    }

    #[test]
    fn zero_alpha_sampler_is_silent() {
        let mut s = NoiseSampler::new(NoiseParams::new(0.0, 9));
        for _ in 0..100 {
            assert_eq!(s.sample(), Torus32::ZERO);
        }
    }

    #[test]
    fn sampler_tail_bound() {
        // P(|N(0,1)| >= 8) is about 1.2e-15, so 10^5 draws should never cross.
        let alpha = 2f64.powi(-25);
        let bound = (TWO_POW_32 * 8.0 * alpha) as u32;
        let mut s = NoiseSampler::new(NoiseParams::new(alpha, 42));
        let inside = (0..100_000).filter(|_| s.sample().signed().unsigned_abs() < bound).count();
        assert!(inside as f64 >= 0.9999 * 100_000.0);
    }

    #[test]
    fn sampler_seed_sensitivity() {
        let alpha = 2f64.powi(-25);
        let mut a = NoiseSampler::new(NoiseParams::new(alpha, 1));
        let mut b = NoiseSampler::new(NoiseParams::new(alpha, 2));
        let xs: Vec<_> = (0..32).map(|_| a.sample()).collect();
        let ys: Vec<_> = (0..32).map(|_| b.sample()).collect();
        assert_ne!(xs, ys);
        let mut c = NoiseSampler::new(NoiseParams::new(alpha, 1));
        let zs: Vec<_> = (0..32).map(|_| c.sample()).collect();
        assert_eq!(xs, zs);
    }

    #[test]
    fn sampler_stddev_matches_alpha() {
        let alpha = 2f64.powi(-20);
        let mut s = NoiseSampler::new(NoiseParams::new(alpha, 5));
        let n = 20_000;
        let var: f64 = (0..n).map(|_| s.sample().to_real().powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        assert!((sd / alpha - 1.0).abs() < 0.05, "sd={sd}");
    }

    #[test]
    fn split_streams_differ() {
        let mut a = role_rng(7, 1);
        let mut b = role_rng(7, 2);
        assert_ne!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode_quarter_bit(Torus32(0x4000_0000)).bit, 1);
        assert_eq!(decode_quarter_bit(Torus32(0x0000_0001)).bit, 0);
        // 3/16 is 1/16 away from 1/4.
        assert_eq!(
            decode_quarter_bit(Torus32(0x3000_0000)),
            Decoded { bit: 1, out_of_band: false }
        );
    }

    #[test]
    fn decode_band_edges() {
        assert_eq!(decode_quarter_bit(EIGHTH), Decoded { bit: 1, out_of_band: false });
        assert_eq!(decode_quarter_bit(EIGHTH - Torus32(1)), Decoded { bit: 0, out_of_band: false });
        assert_eq!(decode_quarter_bit(Torus32(3 << 29)), Decoded { bit: 1, out_of_band: true });
        assert_eq!(decode_quarter_bit(Torus32(5 << 29)), Decoded { bit: 0, out_of_band: true });
        assert_eq!(decode_quarter_bit(Torus32(7 << 29)), Decoded { bit: 0, out_of_band: false });
    }

    #[test]
    fn decode_grid_within_budget() {
        // e on a 2^-12 grid strictly inside (-1/8, 1/8).
        let step = 1u32 << 20;
        for m in 0..2u8 {
            let center = if m == 1 { QUARTER } else { Torus32::ZERO };
            for i in 1..(1u32 << 9) {
                for e in [Torus32(i * step), -Torus32(i * step)] {
                    let d = decode_quarter_bit(center + e);
                    assert_eq!(d.bit, m);
                    assert!(!d.out_of_band);
                }
            }
            assert_eq!(decode_quarter_bit(center).bit, m);
        }
    }

    #[test]
    fn negated_small_error_decodes_zero() {
        for i in 0..512u32 {
            let e = torus_from_real(i as f64 / 4096.0);
            assert_eq!(decode_quarter_bit(-e).bit, 0);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn dyadic_addition_is_exact(x in any::<u32>(), y in any::<u32>()) {
                let rx = x as f64 / TWO_POW_32;
                let ry = y as f64 / TWO_POW_32;
                prop_assert_eq!(torus_from_real(rx) + torus_from_real(ry), torus_from_real(rx + ry));
            }

            #[test]
            fn scalar_mul_distributes(x in any::<u32>(), y in any::<u32>(), c in -1000i64..1000) {
                let (a, b) = (Torus32(x), Torus32(y));
                prop_assert_eq!((a + b) * c, a * c + b * c);
            }
        }
    }
}
