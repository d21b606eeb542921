//! Sigmoid substitutes that evaluate cheaply over encrypted words.
//!
//! `g` is the piecewise-linear function `0` for `x < -2`, `4x + 8` on
//! `[-2, 2]` and `16` above. It is sigmoid scaled by 16 and built from two
//! compare-quads selections. The Taylor baselines expand sigmoid around 0 to
//! order 3 or 7 and run in fixed point with real multipliers.
//!
//! Every encrypted routine here has an integer twin (`*_int`) that follows
//! the same schedule, including wraparound, so the two agree bit for bit.

use serde::{Deserialize, Serialize};

use crate::backend::Session;
use crate::circuits::{
    add_const, compare_quads_with, cost_add, cost_compare_quads, homogenize, mk_mul, mul_const, rescale, resize,
    shift_left_const, trivial_word, truncate, wrap_to_width, Combiner, EncWord,
};
use crate::error::{Error, Result};

/// Output scale of every activation: `1.0` maps to 16.
pub const ACT_SCALE: i64 = 16;
/// Fixed-point fraction bits of the Taylor coefficients.
pub const TAYLOR_FRAC_BITS: u32 = 12;
/// Extra high bits `act_g` adds internally so that `4x + 8` cannot overflow.
pub const G_HEADROOM: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActKind {
    /// The piecewise function `g`.
    G,
    Taylor3,
    Taylor7,
    /// Exact logistic function; float mode only.
    Sigmoid,
}

impl std::str::FromStr for ActKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "g" => Ok(ActKind::G),
            "taylor3" => Ok(ActKind::Taylor3),
            "taylor7" => Ok(ActKind::Taylor7),
            "sigmoid" => Ok(ActKind::Sigmoid),
            other => Err(Error::InvalidParams(format!("unknown activation {other:?}, expected g|taylor3|taylor7|sigmoid"))),
        }
    }
}

impl std::fmt::Display for ActKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ActKind::G => "g",
            ActKind::Taylor3 => "taylor3",
            ActKind::Taylor7 => "taylor7",
            ActKind::Sigmoid => "sigmoid",
        })
    }
}

impl ActKind {
    pub fn taylor_order(self) -> Option<u32> {
        match self {
            ActKind::Taylor3 => Some(3),
            ActKind::Taylor7 => Some(7),
            _ => None,
        }
    }
}

/// Activation plus the scale `q` of its input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActSpec {
    pub kind: ActKind,
    pub q: i64,
}

impl ActSpec {
    pub fn new(kind: ActKind, q: i64) -> Result<ActSpec> {
        if q < 2 || q.count_ones() != 1 {
            return Err(Error::InvalidParams(format!("scale q must be a power of two >= 2, got {q}")));
        }
        Ok(ActSpec { kind, q })
    }

    pub fn q_bits(&self) -> u32 {
        self.q.trailing_zeros()
    }
}

pub fn sigmoid_clear(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `g` on reals, at output scale 16.
pub fn g_clear(x: f64) -> f64 {
    if x > 2.0 {
        16.0
    } else if x >= -2.0 {
        4.0 * x + 8.0
    } else {
        0.0
    }
}

/// Maclaurin coefficients of sigmoid for odd powers 1, 3, 5, 7.
const SIGMOID_ODD: [f64; 4] = [1.0 / 4.0, -1.0 / 48.0, 1.0 / 480.0, -17.0 / 80640.0];

/// Truncated Taylor series of sigmoid at 0 (unscaled).
pub fn taylor_clear(x: f64, order: u32) -> f64 {
    let terms = (order as usize).div_ceil(2);
    0.5 + SIGMOID_ODD[..terms].iter().enumerate().map(|(i, c)| c * x.powi(2 * i as i32 + 1)).sum::<f64>()
}

/// The integer piecewise oracle, including both boundaries: `-2` takes the
/// linear branch (giving 0), `2` gives 16 from either branch.
pub fn g_int(x: i64) -> i64 {
    if x >= 2 {
        16
    } else if x >= -2 {
        4 * x + 8
    } else {
        0
    }
}

pub fn cost_act_g(l: usize, combiner: Combiner) -> u64 {
    let w = l + G_HEADROOM;
    G_HEADROOM as u64 + 2 * cost_compare_quads(w, combiner) + cost_add(w)
}

/// `g` over an unscaled encrypted integer.
pub fn act_g(s: &Session, x: &EncWord) -> Result<EncWord> {
    act_g_with(s, x, Combiner::Or)
}

/// `g` with a chosen compare-quads combiner.
///
/// The input is widened by [`G_HEADROOM`] bits so that `4x + 8` is exact
/// for every representable `x`. The result (always in `0..=16`) is narrowed
/// back to the input width, which must be at least 6 bits.
pub fn act_g_with(s: &Session, x: &EncWord, combiner: Combiner) -> Result<EncWord> {
    let l = x.width();
    if l < 6 {
        return Err(Error::InvalidParams(format!("act_g needs at least 6 bits, got {l}")));
    }
    let w = l + G_HEADROOM;
    let xw = homogenize(s, x, w)?;
    let linear = add_const(s, &shift_left_const(s, &xw, 2), 8)?;
    let mid = compare_quads_with(s, &xw, &trivial_word(s, -2, w)?, &trivial_word(s, 0, w)?, &linear, combiner)?;
    let sixteen = trivial_word(s, 16, w)?;
    let top = compare_quads_with(s, &mid, &sixteen, &mid, &sixteen, combiner)?;
    truncate(&top, l)
}

/// Integer twin of [`act_g_with`]; identical for any combiner.
pub fn act_g_int(x: i64) -> i64 {
    g_int(x)
}

/// Coefficients of the order-`order` expansion at scale `2^TAYLOR_FRAC_BITS`,
/// constant term first, then odd powers ascending.
pub fn taylor_coefficients(order: u32) -> Result<(i64, Vec<i64>)> {
    if order != 3 && order != 7 {
        return Err(Error::InvalidParams(format!("Taylor order must be 3 or 7, got {order}")));
    }
    let scale = (1i64 << TAYLOR_FRAC_BITS) as f64;
    let odd = SIGMOID_ODD[..(order as usize).div_ceil(2)].iter().map(|c| (c * scale).round() as i64).collect();
    Ok(((0.5 * scale).round() as i64, odd))
}

fn taylor_check(l: usize, order: u32) -> Result<(i64, Vec<i64>)> {
    let coeffs = taylor_coefficients(order)?;
    if !crate::circuits::fits(coeffs.0, l) || l < TAYLOR_FRAC_BITS as usize + 2 {
        return Err(Error::InvalidParams(format!("Taylor evaluation needs at least {} bits", TAYLOR_FRAC_BITS + 2)));
    }
    Ok(coeffs)
}

/// Sigmoid Taylor polynomial on an encrypted input at scale `2^q_bits`.
///
/// Horner in `t = x^2`: `c1 + t (c3 + t (c5 + t c7))`, then one product
/// with `x` and the constant term. The top coefficient enters by constant
/// multiplication (shift-and-add at double width); the remaining products
/// are full multipliers, each rescaled by `q_bits` and narrowed back to
/// `l` bits. The result is returned at scale 16.
pub fn act_taylor(s: &Session, x: &EncWord, order: u32, q_bits: u32) -> Result<EncWord> {
    let l = x.width();
    let (c0, odd) = taylor_check(l, order)?;
    let qb = q_bits as usize;
    let t = rescale(s, &mk_mul(s, x, x)?, qb, l)?;
    let top = *odd.last().expect("at least one odd term");
    let wide_t = homogenize(s, &t, 2 * l)?;
    let mut u = rescale(s, &mul_const(s, &wide_t, top)?, qb, l)?;
    for &c in odd[1..odd.len() - 1].iter().rev() {
        let h = add_const(s, &u, c)?;
        u = rescale(s, &mk_mul(s, &h, &t)?, qb, l)?;
    }
    let h = add_const(s, &u, odd[0])?;
    let r = add_const(s, &rescale(s, &mk_mul(s, &h, x)?, qb, l)?, c0)?;
    rescale(s, &r, (TAYLOR_FRAC_BITS - 4) as usize, l)
}

/// Integer twin of [`act_taylor`] at word width `l`.
pub fn act_taylor_int(x: i64, order: u32, q_bits: u32, l: usize) -> Result<i64> {
    let (c0, odd) = taylor_check(l, order)?;
    let w = |v: i64| wrap_to_width(v, l);
    let t = w((x * x) >> q_bits);
    let top = *odd.last().expect("at least one odd term");
    let mut u = w(wrap_to_width(top * t, 2 * l) >> q_bits);
    for &c in odd[1..odd.len() - 1].iter().rev() {
        u = w((w(u + c) * t) >> q_bits);
    }
    let h = w(u + odd[0]);
    let r = w(w((h * x) >> q_bits) + c0);
    Ok(w(r >> (TAYLOR_FRAC_BITS - 4)))
}

/// Applies `spec` to an encrypted input at scale `spec.q` (any width),
/// producing an `out`-bit word at scale 16. `g` reads its input unscaled,
/// so the input is first shifted down by `log2 q`; the Taylor circuits take
/// the scaled input narrowed to `out` bits.
pub fn apply_activation(s: &Session, spec: &ActSpec, x_q: &EncWord, out: usize, combiner: Combiner) -> Result<EncWord> {
    match spec.kind {
        ActKind::G => act_g_with(s, &rescale(s, x_q, spec.q_bits() as usize, out)?, combiner),
        ActKind::Taylor3 => act_taylor(s, &resize(s, x_q, out)?, 3, spec.q_bits()),
        ActKind::Taylor7 => act_taylor(s, &resize(s, x_q, out)?, 7, spec.q_bits()),
        ActKind::Sigmoid => Err(Error::InvalidParams("sigmoid has no integer form".into())),
    }
}

/// Integer twin of [`apply_activation`].
pub fn apply_activation_int(spec: &ActSpec, x_q: i64, out: usize) -> Result<i64> {
    match spec.kind {
        ActKind::G => Ok(act_g_int(wrap_to_width(x_q >> spec.q_bits(), out))),
        ActKind::Taylor3 => act_taylor_int(wrap_to_width(x_q, out), 3, spec.q_bits(), out),
        ActKind::Taylor7 => act_taylor_int(wrap_to_width(x_q, out), 7, spec.q_bits(), out),
        ActKind::Sigmoid => Err(Error::InvalidParams("sigmoid has no integer form".into())),
    }
}

/// Float activation at unit scale (output in `[0, 1]` for sigmoid and `g`).
pub fn apply_activation_float(kind: ActKind, x: f64) -> f64 {
    match kind {
        ActKind::G => g_clear(x) / ACT_SCALE as f64,
        ActKind::Taylor3 => taylor_clear(x, 3),
        ActKind::Taylor7 => taylor_clear(x, 7),
        ActKind::Sigmoid => sigmoid_clear(x),
    }
}

/// The bare activation circuit on an `l`-bit word at output scale 16. `g`
/// reads an unscaled integer; the Taylor circuits read `x` at scale
/// `2^q_bits`.
pub fn act_circuit(s: &Session, kind: ActKind, x: &EncWord, q_bits: u32, combiner: Combiner) -> Result<EncWord> {
    match kind {
        ActKind::G => act_g_with(s, x, combiner),
        ActKind::Taylor3 => act_taylor(s, x, 3, q_bits),
        ActKind::Taylor7 => act_taylor(s, x, 7, q_bits),
        ActKind::Sigmoid => Err(Error::InvalidParams("sigmoid has no circuit".into())),
    }
}

/// Integer twin of [`act_circuit`] for an `l`-bit input.
pub fn act_circuit_int(kind: ActKind, x: i64, q_bits: u32, l: usize) -> Result<i64> {
    match kind {
        ActKind::G => Ok(act_g_int(x)),
        ActKind::Taylor3 => act_taylor_int(x, 3, q_bits, l),
        ActKind::Taylor7 => act_taylor_int(x, 7, q_bits, l),
        ActKind::Sigmoid => Err(Error::InvalidParams("sigmoid has no circuit".into())),
    }
}

/// Bootstrapped gates of one activation at width `l` (and scale `2^4`),
/// measured on a clear session.
pub fn activation_gate_cost(kind: ActKind, l: usize, combiner: Combiner) -> Result<u64> {
    let s = Session::clear();
    let x = trivial_word(&s, 0, l)?;
    let scope = s.scope();
    act_circuit(&s, kind, &x, 4, combiner)?;
    Ok(scope.elapsed().bootstrapped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{decode_word, mk_enc_word};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn clear_reference_values() {
        assert_eq!(sigmoid_clear(0.0), 0.5);
        assert_eq!(g_clear(1.0), 12.0);
        assert_eq!(g_clear(3.0), 16.0);
        assert_eq!(g_clear(-5.0), 0.0);
        assert_eq!(taylor_clear(0.0, 3), 0.5);
        assert_eq!(taylor_clear(0.0, 7), 0.5);
        for x in [-1.0, -0.3, 0.2, 0.9] {
            assert!((taylor_clear(x, 7) - sigmoid_clear(x)).abs() < 1e-4);
            assert!((taylor_clear(x, 3) - sigmoid_clear(x)).abs() < 2e-3);
        }
    }

    #[test]
    fn g_examples() {
        let s = Session::clear();
        let g = |x| decode_word(&s, &act_g(&s, &mk_enc_word(&s, x, 8).unwrap()).unwrap()).unwrap();
        assert_eq!(g(0), 8);
        assert_eq!(g(3), 16);
        assert_eq!(g(-5), 0);
        assert_eq!(g(-2), 0);
        assert_eq!(g(2), 16);
        assert_eq!(g(1), 12);
    }

    #[test]
    fn g_exhaustive_l8_monotone_and_saturating() {
        let s = Session::clear();
        let mut prev = i64::MIN;
        for x in -128..128 {
            for comb in [Combiner::Or, Combiner::Add] {
                let w = act_g_with(&s, &mk_enc_word(&s, x, 8).unwrap(), comb).unwrap();
                assert_eq!(w.width(), 8);
                let y = decode_word(&s, &w).unwrap();
                assert_eq!(y, g_int(x), "x={x}");
                assert_eq!(y as f64, g_clear(x as f64));
                assert!((0..=16).contains(&y));
                if !(-2..=2).contains(&x) {
                    assert!(y == 0 || y == 16);
                }
                assert!(y >= prev);
                prev = y;
            }
        }
    }

    #[test]
    fn g_cost_is_exact() {
        let s = Session::clear();
        for l in [8, 16] {
            for comb in [Combiner::Or, Combiner::Add] {
                let x = mk_enc_word(&s, 1, l).unwrap();
                let scope = s.scope();
                act_g_with(&s, &x, comb).unwrap();
                assert_eq!(scope.elapsed().bootstrapped, cost_act_g(l, comb));
            }
        }
        assert_eq!(cost_act_g(16, Combiner::Or), 407);
        assert_eq!(cost_act_g(16, Combiner::Add), 553);
        assert!(act_g(&s, &mk_enc_word(&s, 1, 5).unwrap()).is_err());
    }

    #[test]
    fn taylor_coefficient_table() {
        assert_eq!(taylor_coefficients(3).unwrap(), (2048, vec![1024, -85]));
        assert_eq!(taylor_coefficients(7).unwrap(), (2048, vec![1024, -85, 9, -1]));
        assert!(taylor_coefficients(5).is_err());
    }

    #[test]
    fn taylor_matches_integer_twin() {
        let s = Session::clear();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for order in [3, 7] {
            assert_eq!(act_taylor_int(0, order, 4, 16).unwrap(), 8);
            let zero = act_taylor(&s, &mk_enc_word(&s, 0, 16).unwrap(), order, 4).unwrap();
            assert_eq!(decode_word(&s, &zero).unwrap(), 8);
            let n = if order == 3 { 1000 } else { 200 };
            for i in 0..n {
                // Mostly the useful range, sometimes the full word.
                let x = if i % 4 == 0 { rng.random_range(-32768..32768) } else { rng.random_range(-96..96) };
                let got = decode_word(&s, &act_taylor(&s, &mk_enc_word(&s, x, 16).unwrap(), order, 4).unwrap()).unwrap();
                assert_eq!(got, act_taylor_int(x, order, 4, 16).unwrap(), "order {order}, x={x}");
            }
        }
    }

    #[test]
    fn taylor_int_tracks_float() {
        for order in [3, 7] {
            for x16 in -40i64..=40 {
                let x = x16 as f64 / 16.0;
                let got = act_taylor_int(x16, order, 4, 16).unwrap() as f64;
                assert!((got - 16.0 * taylor_clear(x, order)).abs() <= 1.5, "order {order} x={x}");
            }
        }
    }

    #[test]
    fn apply_dispatch_matches_int() {
        let s = Session::clear();
        for kind in [ActKind::G, ActKind::Taylor3, ActKind::Taylor7] {
            for q in [16, 64] {
                let spec = ActSpec::new(kind, q).unwrap();
                for x in [-300i64, -40, -17, 0, 5, 31, 33, 250, 70_000, -1_000_000] {
                    for width in [16, 32] {
                        if !crate::circuits::fits(x, width) {
                            continue;
                        }
                        let w = mk_enc_word(&s, x, width).unwrap();
                        let got = apply_activation(&s, &spec, &w, 16, Combiner::Or).unwrap();
                        assert_eq!(got.width(), 16);
                        let got = decode_word(&s, &got).unwrap();
                        assert_eq!(got, apply_activation_int(&spec, x, 16).unwrap(), "{kind} q={q} x={x}");
                    }
                }
            }
        }
        assert!(ActSpec::new(ActKind::G, 12).is_err());
    }

    #[test]
    fn cost_ratios_at_16_bits() {
        let g_or = activation_gate_cost(ActKind::G, 16, Combiner::Or).unwrap();
        let g_add = activation_gate_cost(ActKind::G, 16, Combiner::Add).unwrap();
        let t3 = activation_gate_cost(ActKind::Taylor3, 16, Combiner::Or).unwrap();
        let t7 = activation_gate_cost(ActKind::Taylor7, 16, Combiner::Or).unwrap();
        println!("g_or={g_or} g_add={g_add} taylor3={t3} taylor7={t7}");
        assert_eq!((g_or, g_add), (407, 553));
        assert!(t7 > 2 * t3 - 2000 && t7 > t3);
        // Deterministic.
        assert_eq!(t7, activation_gate_cost(ActKind::Taylor7, 16, Combiner::Add).unwrap());
    }
}
