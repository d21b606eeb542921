//! Logistic regression (full-batch gradient descent) and a one-hidden-layer
//! network (per-sample gradient descent with momentum) in three modes.
//!
//! * **Float** trains on the raw real features and is the accuracy reference.
//! * **Int** runs the scaled-integer schedule with native `i64` arithmetic,
//!   wrapping at the same widths the circuits use and counting overflows.
//! * **Enc** runs the same schedule over encrypted words.
//!
//! Int and Enc share one implementation of the schedule, written against
//! the [`Arith`] trait. Every stored quantity is `value * q`. Every product
//! is followed by a division by `q`, and activation outputs and labels sit
//! at scale 16. In the schedules below `>> s` denotes that division rounded
//! toward zero. A plain floor shift would turn a momentum of `-1` into a
//! fixed point (`(beta' * -1) >> s == -1`) and drift every weight by one
//! unit per step.
//!
//! # Integer schedules
//!
//! Logistic regression, per iteration (`x_i0 = 1` is the bias input):
//!
//! ```text
//! z_i   = sum_j theta_j * x_ij                  (wide, scale q)
//! h_i   = act(z_i)                              (word, scale 16)
//! e_i   = h_i - 16 y_i
//! G_j   = div(sum_i e_i * x_ij, m)              (word, scale 16)
//! theta_j -= (alpha' * G_j) >> 4
//! ```
//!
//! Network, per sample, with `o(1 - o)` as the activation slope:
//!
//! ```text
//! o_j    = act((sum_i w_ji x_i) >> s) rescaled to q      s = log2 q
//! yhat_k = (sum_j v_kj o_j) >> s
//! d_k    = yhat_k - q y_k
//! gV_kj  = (d_k o_j) >> s
//! delta_j = (((sum_k d_k v_kj) >> s) * ((o_j (q - o_j)) >> s)) >> s
//! gW_ji  = (delta_j x_i) >> s
//! D      = (beta' D + (q - beta') g) >> s            per weight, D starts at 0
//! w      -= (alpha' D) >> s
//! ```

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::{apply_activation, apply_activation_float, apply_activation_int, ActKind, ActSpec, ACT_SCALE};
use crate::backend::{GateCounter, Session};
use crate::circuits::{
    decode_word, fits, mk_add, mk_div, mk_enc_word, mk_mul, mk_sub, mul_const, rescale_toward_zero, resize, shift_left_const,
    trivial_word, wrap_to_width, Combiner, EncWord,
};
use crate::data::{Dataset, RawDataset};
use crate::error::{Error, Result};

const ACT_BITS: u32 = ACT_SCALE.trailing_zeros();

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Float,
    Int,
    Enc,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "float" => Ok(Mode::Float),
            "int" => Ok(Mode::Int),
            "enc" => Ok(Mode::Enc),
            other => Err(Error::InvalidParams(format!("unknown mode {other:?}, expected float|int|enc"))),
        }
    }
}

/// Scale factor, integer rates and word widths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleConfig {
    /// Expansion factor, a power of two.
    pub q: i64,
    /// Logistic-regression rate `alpha' = alpha * q`.
    pub alpha: i64,
    /// Network rates and momenta for the hidden (`1`) and output (`2`) layers.
    pub alpha1: i64,
    pub alpha2: i64,
    pub beta1: i64,
    pub beta2: i64,
    /// Narrow word width.
    pub word: usize,
    /// Product and accumulator width.
    pub wide: usize,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        ScaleConfig { q: 16, alpha: 8, alpha1: 4, alpha2: 4, beta1: 8, beta2: 8, word: 16, wide: 32 }
    }
}

impl ScaleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q < 2 || self.q.count_ones() != 1 {
            return Err(Error::InvalidParams(format!("q must be a power of two >= 2, got {}", self.q)));
        }
        for (name, v) in [("alpha", self.alpha), ("alpha1", self.alpha1), ("alpha2", self.alpha2), ("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0..=self.q).contains(&v) {
                return Err(Error::InvalidParams(format!("{name} = {v} must lie in [0, q = {}]", self.q)));
            }
        }
        if self.word < 14 || self.wide < 2 * self.word || self.wide > 62 {
            return Err(Error::InvalidParams(format!("widths word = {}, wide = {} unsupported", self.word, self.wide)));
        }
        Ok(())
    }

    pub fn q_bits(&self) -> u32 {
        self.q.trailing_zeros()
    }
}

/// The arithmetic the integer schedules are written against.
pub trait Arith: Sync {
    type V: Clone + Send + Sync;
    /// A private input (encrypted in enc mode).
    fn input(&self, v: i64, width: usize) -> Result<Self::V>;
    /// A public constant.
    fn constant(&self, v: i64, width: usize) -> Result<Self::V>;
    fn add(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn sub(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    /// Exact `l x l -> 2l` product.
    fn mul(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    /// `c * a` modulo the width of `a`.
    fn mul_const(&self, a: &Self::V, c: i64) -> Result<Self::V>;
    /// Division by `2^shift` rounded toward zero, then narrowed to `to` bits.
    fn rescale(&self, a: &Self::V, shift: usize, to: usize) -> Result<Self::V>;
    /// Left shift within the same width.
    fn shl(&self, a: &Self::V, k: usize) -> Result<Self::V>;
    fn resize(&self, a: &Self::V, to: usize) -> Result<Self::V>;
    /// Signed `2l / l -> l` division.
    fn div(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    /// Activation of a scale-`q` input to an `out`-bit word at scale 16.
    fn activation(&self, spec: &ActSpec, x: &Self::V, out: usize) -> Result<Self::V>;
    fn decode(&self, v: &Self::V) -> Result<i64>;
}

/// Native integers with explicit widths.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IntVal {
    pub v: i64,
    pub width: usize,
}

/// Clear-integer reference arithmetic. Wraps at every width like the
/// circuits and counts each value that had to wrap.
#[derive(Debug, Default)]
pub struct IntArith {
    overflows: AtomicU64,
}

impl IntArith {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn overflows(&self) -> u64 {
        self.overflows.load(Ordering::Relaxed)
    }

    fn wrap(&self, v: i64, width: usize) -> IntVal {
        let w = wrap_to_width(v, width);
        if w != v {
            self.overflows.fetch_add(1, Ordering::Relaxed);
        }
        IntVal { v: w, width }
    }
}

fn check_width(a: &IntVal, b: &IntVal) -> Result<usize> {
    if a.width != b.width {
        return Err(Error::WidthMismatch(a.width, b.width));
    }
    Ok(a.width)
}

impl Arith for IntArith {
    type V = IntVal;

    fn input(&self, v: i64, width: usize) -> Result<IntVal> {
        if !fits(v, width) {
            return Err(Error::Overflow { value: v, width });
        }
        Ok(IntVal { v, width })
    }

    fn constant(&self, v: i64, width: usize) -> Result<IntVal> {
        self.input(v, width)
    }

    fn add(&self, a: &IntVal, b: &IntVal) -> Result<IntVal> {
        let w = check_width(a, b)?;
        Ok(self.wrap(a.v + b.v, w))
    }

    fn sub(&self, a: &IntVal, b: &IntVal) -> Result<IntVal> {
        let w = check_width(a, b)?;
        Ok(self.wrap(a.v - b.v, w))
    }

    fn mul(&self, a: &IntVal, b: &IntVal) -> Result<IntVal> {
        let w = check_width(a, b)?;
        Ok(IntVal { v: a.v * b.v, width: 2 * w })
    }

    fn mul_const(&self, a: &IntVal, c: i64) -> Result<IntVal> {
        Ok(self.wrap(a.v.wrapping_mul(c), a.width))
    }

    fn rescale(&self, a: &IntVal, shift: usize, to: usize) -> Result<IntVal> {
        Ok(self.wrap(a.v / (1i64 << shift), to))
    }

    fn shl(&self, a: &IntVal, k: usize) -> Result<IntVal> {
        Ok(self.wrap(a.v << k, a.width))
    }

    fn resize(&self, a: &IntVal, to: usize) -> Result<IntVal> {
        Ok(self.wrap(a.v, to))
    }

    fn div(&self, a: &IntVal, b: &IntVal) -> Result<IntVal> {
        if a.width != 2 * b.width {
            return Err(Error::WidthMismatch(a.width, 2 * b.width));
        }
        if b.v == 0 {
            return Ok(IntVal { v: -1, width: b.width });
        }
        Ok(self.wrap(a.v / b.v, b.width))
    }

    fn activation(&self, spec: &ActSpec, x: &IntVal, out: usize) -> Result<IntVal> {
        Ok(IntVal { v: apply_activation_int(spec, x.v, out)?, width: out })
    }

    fn decode(&self, v: &IntVal) -> Result<i64> {
        Ok(v.v)
    }
}

/// Encrypted words under a session.
#[derive(Clone, Debug)]
pub struct EncArith {
    pub session: Session,
    pub combiner: Combiner,
}

impl EncArith {
    pub fn new(session: Session) -> Self {
        EncArith { session, combiner: Combiner::Or }
    }
}

impl Arith for EncArith {
    type V = EncWord;

    fn input(&self, v: i64, width: usize) -> Result<EncWord> {
        mk_enc_word(&self.session, v, width)
    }

    fn constant(&self, v: i64, width: usize) -> Result<EncWord> {
        trivial_word(&self.session, v, width)
    }

    fn add(&self, a: &EncWord, b: &EncWord) -> Result<EncWord> {
        mk_add(&self.session, a, b)
    }

    fn sub(&self, a: &EncWord, b: &EncWord) -> Result<EncWord> {
        mk_sub(&self.session, a, b)
    }

    fn mul(&self, a: &EncWord, b: &EncWord) -> Result<EncWord> {
        mk_mul(&self.session, a, b)
    }

    fn mul_const(&self, a: &EncWord, c: i64) -> Result<EncWord> {
        mul_const(&self.session, a, c)
    }

    fn rescale(&self, a: &EncWord, shift: usize, to: usize) -> Result<EncWord> {
        rescale_toward_zero(&self.session, a, shift, to)
    }

    fn shl(&self, a: &EncWord, k: usize) -> Result<EncWord> {
        Ok(shift_left_const(&self.session, a, k))
    }

    fn resize(&self, a: &EncWord, to: usize) -> Result<EncWord> {
        resize(&self.session, a, to)
    }

    fn div(&self, a: &EncWord, b: &EncWord) -> Result<EncWord> {
        mk_div(&self.session, a, b)
    }

    fn activation(&self, spec: &ActSpec, x: &EncWord, out: usize) -> Result<EncWord> {
        apply_activation(&self.session, spec, x, out, self.combiner)
    }

    fn decode(&self, v: &EncWord) -> Result<i64> {
        decode_word(&self.session, v)
    }
}

fn sum<A: Arith>(ar: &A, items: &[A::V]) -> Result<A::V> {
    let (first, rest) = items.split_first().ok_or_else(|| Error::InvalidParams("empty sum".into()))?;
    rest.iter().try_fold(first.clone(), |acc, x| ar.add(&acc, x))
}

/// `(a * b) >> s`, narrowed to the word width.
fn mul_rescale<A: Arith>(ar: &A, a: &A::V, b: &A::V, s: usize, word: usize) -> Result<A::V> {
    ar.rescale(&ar.mul(a, b)?, s, word)
}

/// `(c * a) >> s` computed at the wide width, narrowed to the word width.
fn cmul_rescale<A: Arith>(ar: &A, a: &A::V, c: i64, s: usize, cfg: &ScaleConfig) -> Result<A::V> {
    ar.rescale(&ar.mul_const(&ar.resize(a, cfg.wide)?, c)?, s, cfg.word)
}

// ---------------------------------------------------------------------------
// Logistic regression

/// Integer model: `theta[0]` is the bias, all at scale `q`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntLrModel {
    pub theta: Vec<i64>,
    pub q: i64,
    pub act: ActKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloatLrModel {
    pub theta: Vec<f64>,
    pub act: ActKind,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    /// Decoded parameters after every iteration, when requested.
    pub history: Vec<Vec<i64>>,
    pub overflows: u64,
    pub gates: GateCounter,
}

fn with_bias(row: &[i64], one: i64) -> impl Iterator<Item = i64> + '_ {
    std::iter::once(one).chain(row.iter().copied())
}

fn check_lr(ds: &Dataset, cfg: &ScaleConfig, act: ActKind) -> Result<ActSpec> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Dataset("empty training set".into()));
    }
    if ds.y.iter().any(|&y| y > 1) {
        return Err(Error::Dataset("logistic regression needs 0/1 labels".into()));
    }
    if !fits(ds.len() as i64, cfg.word) {
        return Err(Error::Overflow { value: ds.len() as i64, width: cfg.word });
    }
    ActSpec::new(act, cfg.q)
}

fn lr_forward<A: Arith>(ar: &A, spec: &ActSpec, theta: &[A::V], x: &[A::V], cfg: &ScaleConfig) -> Result<A::V> {
    let terms = theta.iter().zip(x).map(|(t, v)| ar.mul(t, v)).collect::<Result<Vec<_>>>()?;
    ar.activation(spec, &sum(ar, &terms)?, cfg.word)
}

/// Runs the integer logistic-regression schedule over any [`Arith`].
/// Returns the final parameters, decoded.
pub fn train_lr_with<A: Arith>(
    ar: &A,
    ds: &Dataset,
    cfg: &ScaleConfig,
    act: ActKind,
    iters: usize,
    record_history: bool,
) -> Result<(Vec<i64>, Vec<Vec<i64>>)> {
    let spec = check_lr(ds, cfg, act)?;
    let one = if ds.mode == crate::data::PrepMode::Zoom { ds.q } else { 1 };
    let x: Vec<Vec<A::V>> = ds
        .x
        .par_iter()
        .map(|row| with_bias(row, one).map(|v| ar.input(v, cfg.word)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let y16: Vec<A::V> = ds.y.iter().map(|&y| ar.input(y as i64 * ACT_SCALE, cfg.word)).collect::<Result<_>>()?;
    let m = ar.constant(ds.len() as i64, cfg.word)?;
    let d = ds.n_features() + 1;
    let mut theta: Vec<A::V> = (0..d).map(|_| ar.input(0, cfg.word)).collect::<Result<_>>()?;
    let mut history = Vec::new();
    for _ in 0..iters {
        let err: Vec<A::V> = x
            .par_iter()
            .zip(&y16)
            .map(|(xi, yi)| ar.sub(&lr_forward(ar, &spec, &theta, xi, cfg)?, yi))
            .collect::<Result<_>>()?;
        theta = (0..d)
            .into_par_iter()
            .map(|j| {
                let terms = err.iter().zip(&x).map(|(e, xi)| ar.mul(e, &xi[j])).collect::<Result<Vec<_>>>()?;
                let grad = ar.div(&sum(ar, &terms)?, &m)?;
                let step = cmul_rescale(ar, &grad, cfg.alpha, ACT_BITS as usize, cfg)?;
                ar.sub(&theta[j], &step)
            })
            .collect::<Result<_>>()?;
        if record_history {
            history.push(theta.iter().map(|t| ar.decode(t)).collect::<Result<_>>()?);
        }
    }
    let out = theta.iter().map(|t| ar.decode(t)).collect::<Result<_>>()?;
    Ok((out, history))
}

pub fn train_lr_int(ds: &Dataset, cfg: &ScaleConfig, act: ActKind, iters: usize, record: bool) -> Result<(IntLrModel, TrainStats)> {
    let ar = IntArith::new();
    let (theta, history) = train_lr_with(&ar, ds, cfg, act, iters, record)?;
    let stats = TrainStats { history, overflows: ar.overflows(), gates: GateCounter::default() };
    Ok((IntLrModel { theta, q: cfg.q, act }, stats))
}

pub fn train_lr_enc(
    session: &Session,
    ds: &Dataset,
    cfg: &ScaleConfig,
    act: ActKind,
    iters: usize,
    record: bool,
) -> Result<(IntLrModel, TrainStats)> {
    let ar = EncArith::new(session.clone());
    let scope = session.scope();
    let (theta, history) = train_lr_with(&ar, ds, cfg, act, iters, record)?;
    let stats = TrainStats { history, overflows: 0, gates: scope.elapsed() };
    Ok((IntLrModel { theta, q: cfg.q, act }, stats))
}

/// Scaled activation output for each row, using the integer forward pass.
pub fn lr_scores_int(model: &IntLrModel, ds: &Dataset, cfg: &ScaleConfig) -> Result<Vec<i64>> {
    let ar = IntArith::new();
    let spec = ActSpec::new(model.act, model.q)?;
    let one = if ds.mode == crate::data::PrepMode::Zoom { ds.q } else { 1 };
    let theta: Vec<IntVal> = model.theta.iter().map(|&t| ar.input(wrap_to_width(t, cfg.word), cfg.word)).collect::<Result<_>>()?;
    ds.x.iter()
        .map(|row| {
            let x: Vec<IntVal> = with_bias(row, one).map(|v| ar.input(v, cfg.word)).collect::<Result<_>>()?;
            lr_forward(&ar, &spec, &theta, &x, cfg).map(|h| h.v)
        })
        .collect()
}

/// Fraction of rows whose activation reaches the midpoint 8 exactly when
/// the label is 1.
pub fn predict_lr_int(model: &IntLrModel, ds: &Dataset, cfg: &ScaleConfig) -> Result<f64> {
    let scores = lr_scores_int(model, ds, cfg)?;
    let hits = scores.iter().zip(&ds.y).filter(|(&h, &y)| (h >= ACT_SCALE / 2) == (y == 1)).count();
    Ok(hits as f64 / ds.len().max(1) as f64)
}

fn dot_bias(theta: &[f64], row: &[f64]) -> f64 {
    theta[0] + theta[1..].iter().zip(row).map(|(a, b)| a * b).sum::<f64>()
}

/// Mean cross-entropy of a float model (activation clamped into (0, 1)).
pub fn lr_loss_float(model: &FloatLrModel, ds: &RawDataset) -> f64 {
    let eps = 1e-12;
    let total: f64 = ds
        .x
        .iter()
        .zip(&ds.y)
        .map(|(row, &y)| {
            let h = apply_activation_float(model.act, dot_bias(&model.theta, row)).clamp(eps, 1.0 - eps);
            if y == 1 {
                -h.ln()
            } else {
                -(1.0 - h).ln()
            }
        })
        .sum();
    total / ds.len().max(1) as f64
}

/// Full-batch gradient descent on real features. Returns the model and the
/// loss before each iteration plus after the last.
pub fn train_lr_float(ds: &RawDataset, act: ActKind, alpha: f64, iters: usize) -> Result<(FloatLrModel, Vec<f64>)> {
    if ds.is_empty() || ds.y.iter().any(|&y| y > 1) {
        return Err(Error::Dataset("logistic regression needs a non-empty 0/1-labelled set".into()));
    }
    let d = ds.n_features() + 1;
    let m = ds.len() as f64;
    let mut model = FloatLrModel { theta: vec![0.0; d], act };
    let mut losses = vec![lr_loss_float(&model, ds)];
    for _ in 0..iters {
        let mut grad = vec![0.0; d];
        for (row, &y) in ds.x.iter().zip(&ds.y) {
            let e = apply_activation_float(act, dot_bias(&model.theta, row)) - y as f64;
            grad[0] += e;
            for (g, v) in grad[1..].iter_mut().zip(row) {
                *g += e * v;
            }
        }
        for (t, g) in model.theta.iter_mut().zip(&grad) {
            *t -= alpha * g / m;
        }
        losses.push(lr_loss_float(&model, ds));
    }
    Ok((model, losses))
}

pub fn predict_lr_float(model: &FloatLrModel, ds: &RawDataset) -> f64 {
    let hits = ds
        .x
        .iter()
        .zip(&ds.y)
        .filter(|(row, &y)| (apply_activation_float(model.act, dot_bias(&model.theta, row)) >= 0.5) == (y == 1))
        .count();
    hits as f64 / ds.len().max(1) as f64
}

// ---------------------------------------------------------------------------
// Neural network

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnShape {
    /// Inputs including the bias input.
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
}

/// Integer network parameters at scale `q`, row-major: `w[j][i]`, `v[k][j]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntNnModel {
    pub w: Vec<Vec<i64>>,
    pub v: Vec<Vec<i64>>,
    pub q: i64,
    pub act: ActKind,
}

impl IntNnModel {
    /// Every weight, hidden layer first, for history snapshots.
    pub fn flatten(&self) -> Vec<i64> {
        self.w.iter().chain(&self.v).flatten().copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloatNnModel {
    pub w: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub act: ActKind,
}

/// Seeded small integers in `[-q/4, q/4]`.
pub fn init_nn(shape: &NnShape, q: i64, seed: u64) -> (Vec<Vec<i64>>, Vec<Vec<i64>>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let r = (q / 4).max(1);
    let mut draw = |rows: usize, cols: usize| -> Vec<Vec<i64>> {
        (0..rows).map(|_| (0..cols).map(|_| rng.random_range(-r..=r)).collect()).collect()
    };
    let w = draw(shape.hidden, shape.inputs);
    let v = draw(shape.outputs, shape.hidden);
    (w, v)
}

fn check_nn(ds: &Dataset, cfg: &ScaleConfig, act: ActKind, hidden: usize) -> Result<(ActSpec, NnShape)> {
    cfg.validate()?;
    if ds.is_empty() || hidden == 0 {
        return Err(Error::InvalidParams("network needs data and at least one hidden unit".into()));
    }
    let shape = NnShape { inputs: ds.n_features() + 1, hidden, outputs: ds.n_classes.max(2) };
    Ok((ActSpec::new(act, cfg.q)?, shape))
}

struct NnState<V> {
    w: Vec<Vec<V>>,
    v: Vec<Vec<V>>,
    dw: Vec<Vec<V>>,
    dv: Vec<Vec<V>>,
}

/// Hidden activations at scale `q` and outputs at scale `q`.
fn nn_forward<A: Arith>(
    ar: &A,
    spec: &ActSpec,
    w: &[Vec<A::V>],
    v: &[Vec<A::V>],
    x: &[A::V],
    cfg: &ScaleConfig,
) -> Result<(Vec<A::V>, Vec<A::V>)> {
    let s = cfg.q_bits() as usize;
    let o: Vec<A::V> = w
        .par_iter()
        .map(|wj| {
            let terms = wj.iter().zip(x).map(|(a, b)| ar.mul(a, b)).collect::<Result<Vec<_>>>()?;
            let z = ar.rescale(&sum(ar, &terms)?, s, cfg.word)?;
            let o16 = ar.activation(spec, &z, cfg.word)?;
            if s >= ACT_BITS as usize {
                ar.shl(&o16, s - ACT_BITS as usize)
            } else {
                ar.rescale(&o16, ACT_BITS as usize - s, cfg.word)
            }
        })
        .collect::<Result<_>>()?;
    let yhat: Vec<A::V> = v
        .par_iter()
        .map(|vk| {
            let terms = vk.iter().zip(&o).map(|(a, b)| ar.mul(a, b)).collect::<Result<Vec<_>>>()?;
            ar.rescale(&sum(ar, &terms)?, s, cfg.word)
        })
        .collect::<Result<_>>()?;
    Ok((o, yhat))
}

/// `(beta' D + (q - beta') g) >> s` and `w - (alpha' D) >> s`.
fn momentum_step<A: Arith>(
    ar: &A,
    w: &A::V,
    d: &A::V,
    g: &A::V,
    alpha: i64,
    beta: i64,
    cfg: &ScaleConfig,
) -> Result<(A::V, A::V)> {
    let s = cfg.q_bits() as usize;
    let a = ar.mul_const(&ar.resize(d, cfg.wide)?, beta)?;
    let b = ar.mul_const(&ar.resize(g, cfg.wide)?, cfg.q - beta)?;
    let d_new = ar.rescale(&ar.add(&a, &b)?, s, cfg.word)?;
    let w_new = ar.sub(w, &cmul_rescale(ar, &d_new, alpha, s, cfg)?)?;
    Ok((w_new, d_new))
}

fn nn_step<A: Arith>(ar: &A, spec: &ActSpec, st: &mut NnState<A::V>, x: &[A::V], target: &[A::V], cfg: &ScaleConfig) -> Result<()> {
    let s = cfg.q_bits() as usize;
    let (o, yhat) = nn_forward(ar, spec, &st.w, &st.v, x, cfg)?;
    let d: Vec<A::V> = yhat.iter().zip(target).map(|(a, b)| ar.sub(a, b)).collect::<Result<_>>()?;
    let q_word = ar.constant(cfg.q, cfg.word)?;
    let hidden = st.w.len();
    let delta: Vec<A::V> = (0..hidden)
        .into_par_iter()
        .map(|j| {
            let terms = d.iter().zip(&st.v).map(|(dk, vk)| ar.mul(dk, &vk[j])).collect::<Result<Vec<_>>>()?;
            let e = ar.rescale(&sum(ar, &terms)?, s, cfg.word)?;
            let slope = mul_rescale(ar, &o[j], &ar.sub(&q_word, &o[j])?, s, cfg.word)?;
            mul_rescale(ar, &e, &slope, s, cfg.word)
        })
        .collect::<Result<_>>()?;
    let new_v: Vec<(Vec<A::V>, Vec<A::V>)> = (0..st.v.len())
        .into_par_iter()
        .map(|k| {
            (0..hidden)
                .map(|j| {
                    let g = mul_rescale(ar, &d[k], &o[j], s, cfg.word)?;
                    momentum_step(ar, &st.v[k][j], &st.dv[k][j], &g, cfg.alpha2, cfg.beta2, cfg)
                })
                .collect::<Result<Vec<_>>>()
                .map(|pairs| pairs.into_iter().unzip())
        })
        .collect::<Result<_>>()?;
    let new_w: Vec<(Vec<A::V>, Vec<A::V>)> = (0..hidden)
        .into_par_iter()
        .map(|j| {
            (0..x.len())
                .map(|i| {
                    let g = mul_rescale(ar, &delta[j], &x[i], s, cfg.word)?;
                    momentum_step(ar, &st.w[j][i], &st.dw[j][i], &g, cfg.alpha1, cfg.beta1, cfg)
                })
                .collect::<Result<Vec<_>>>()
                .map(|pairs| pairs.into_iter().unzip())
        })
        .collect::<Result<_>>()?;
    (st.v, st.dv) = new_v.into_iter().unzip();
    (st.w, st.dw) = new_w.into_iter().unzip();
    Ok(())
}

fn decode_matrix<A: Arith>(ar: &A, m: &[Vec<A::V>]) -> Result<Vec<Vec<i64>>> {
    m.iter().map(|row| row.iter().map(|v| ar.decode(v)).collect()).collect()
}

fn nn_inputs(ds: &Dataset) -> Vec<Vec<i64>> {
    let one = if ds.mode == crate::data::PrepMode::Zoom { ds.q } else { 1 };
    ds.x.iter().map(|row| with_bias(row, one).collect()).collect()
}

/// Runs the integer network schedule for `epochs` passes over the data in
/// order. History (when requested) holds the flattened weights after every
/// per-sample step.
#[allow(clippy::too_many_arguments)]
pub fn train_nn_with<A: Arith>(
    ar: &A,
    ds: &Dataset,
    cfg: &ScaleConfig,
    act: ActKind,
    hidden: usize,
    epochs: usize,
    seed: u64,
    record_history: bool,
) -> Result<(IntNnModel, Vec<Vec<i64>>)> {
    let (spec, shape) = check_nn(ds, cfg, act, hidden)?;
    let (w0, v0) = init_nn(&shape, cfg.q, seed);
    let enc = |m: &[Vec<i64>]| -> Result<Vec<Vec<A::V>>> {
        m.iter().map(|r| r.iter().map(|&x| ar.input(x, cfg.word)).collect()).collect()
    };
    let zeros = |rows: usize, cols: usize| -> Result<Vec<Vec<A::V>>> { enc(&vec![vec![0; cols]; rows]) };
    let mut st = NnState {
        w: enc(&w0)?,
        v: enc(&v0)?,
        dw: zeros(shape.hidden, shape.inputs)?,
        dv: zeros(shape.outputs, shape.hidden)?,
    };
    let xs: Vec<Vec<A::V>> = nn_inputs(ds).par_iter().map(|row| row.iter().map(|&v| ar.input(v, cfg.word)).collect()).collect::<Result<_>>()?;
    let targets: Vec<Vec<A::V>> = ds
        .y
        .iter()
        .map(|&y| (0..shape.outputs).map(|k| ar.input(if k == y { cfg.q } else { 0 }, cfg.word)).collect())
        .collect::<Result<_>>()?;
    let mut history = Vec::new();
    let snapshot = |st: &NnState<A::V>| -> Result<IntNnModel> {
        Ok(IntNnModel { w: decode_matrix(ar, &st.w)?, v: decode_matrix(ar, &st.v)?, q: cfg.q, act })
    };
    for _ in 0..epochs {
        for (x, t) in xs.iter().zip(&targets) {
            nn_step(ar, &spec, &mut st, x, t, cfg)?;
            if record_history {
                history.push(snapshot(&st)?.flatten());
            }
        }
    }
    Ok((snapshot(&st)?, history))
}

#[allow(clippy::too_many_arguments)]
pub fn train_nn_int(
    ds: &Dataset,
    cfg: &ScaleConfig,
    act: ActKind,
    hidden: usize,
    epochs: usize,
    seed: u64,
    record: bool,
) -> Result<(IntNnModel, TrainStats)> {
    let ar = IntArith::new();
    let (model, history) = train_nn_with(&ar, ds, cfg, act, hidden, epochs, seed, record)?;
    Ok((model, TrainStats { history, overflows: ar.overflows(), gates: GateCounter::default() }))
}

#[allow(clippy::too_many_arguments)]
pub fn train_nn_enc(
    session: &Session,
    ds: &Dataset,
    cfg: &ScaleConfig,
    act: ActKind,
    hidden: usize,
    epochs: usize,
    seed: u64,
    record: bool,
) -> Result<(IntNnModel, TrainStats)> {
    let ar = EncArith::new(session.clone());
    let scope = session.scope();
    let (model, history) = train_nn_with(&ar, ds, cfg, act, hidden, epochs, seed, record)?;
    Ok((model, TrainStats { history, overflows: 0, gates: scope.elapsed() }))
}

fn argmax<T: PartialOrd + Copy>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn predict_nn_int(model: &IntNnModel, ds: &Dataset, cfg: &ScaleConfig) -> Result<f64> {
    let ar = IntArith::new();
    let spec = ActSpec::new(model.act, model.q)?;
    let lift = |m: &[Vec<i64>]| -> Result<Vec<Vec<IntVal>>> {
        m.iter().map(|r| r.iter().map(|&x| ar.input(x, cfg.word)).collect()).collect()
    };
    let (w, v) = (lift(&model.w)?, lift(&model.v)?);
    let mut hits = 0;
    for (row, &y) in nn_inputs(ds).iter().zip(&ds.y) {
        let x: Vec<IntVal> = row.iter().map(|&v| ar.input(v, cfg.word)).collect::<Result<_>>()?;
        let (_, yhat) = nn_forward(&ar, &spec, &w, &v, &x, cfg)?;
        let out: Vec<i64> = yhat.iter().map(|v| v.v).collect();
        hits += (argmax(&out) == y) as usize;
    }
    Ok(hits as f64 / ds.len().max(1) as f64)
}

fn float_slope(o: f64) -> f64 {
    o * (1.0 - o)
}

fn nn_forward_float(model: &FloatNnModel, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let o: Vec<f64> = model
        .w
        .iter()
        .map(|wj| apply_activation_float(model.act, wj.iter().zip(x).map(|(a, b)| a * b).sum()))
        .collect();
    let yhat = model.v.iter().map(|vk| vk.iter().zip(&o).map(|(a, b)| a * b).sum()).collect();
    (o, yhat)
}

/// Real-valued rates and momenta for the float network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloatNnRates {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl FloatNnRates {
    /// The real rates an integer configuration stands for.
    pub fn from_scale(cfg: &ScaleConfig) -> Self {
        let q = cfg.q as f64;
        FloatNnRates {
            alpha1: cfg.alpha1 as f64 / q,
            alpha2: cfg.alpha2 as f64 / q,
            beta1: cfg.beta1 as f64 / q,
            beta2: cfg.beta2 as f64 / q,
        }
    }
}

/// Per-sample momentum descent on real features. Weights start from the
/// same seeded integers as the integer schedule, divided by `q`.
pub fn train_nn_float(
    ds: &RawDataset,
    act: ActKind,
    rates: &FloatNnRates,
    hidden: usize,
    epochs: usize,
    q: i64,
    seed: u64,
) -> Result<FloatNnModel> {
    if ds.is_empty() || hidden == 0 {
        return Err(Error::InvalidParams("network needs data and at least one hidden unit".into()));
    }
    let shape = NnShape { inputs: ds.n_features() + 1, hidden, outputs: ds.n_classes().max(2) };
    let (w0, v0) = init_nn(&shape, q, seed);
    let scale = |m: Vec<Vec<i64>>| -> Vec<Vec<f64>> {
        m.into_iter().map(|r| r.into_iter().map(|x| x as f64 / q as f64).collect()).collect()
    };
    let mut model = FloatNnModel { w: scale(w0), v: scale(v0), act };
    let mut dw = vec![vec![0.0; shape.inputs]; hidden];
    let mut dv = vec![vec![0.0; hidden]; shape.outputs];
    for _ in 0..epochs {
        for (row, &y) in ds.x.iter().zip(&ds.y) {
            let x: Vec<f64> = std::iter::once(1.0).chain(row.iter().copied()).collect();
            let (o, yhat) = nn_forward_float(&model, &x);
            let d: Vec<f64> = yhat.iter().enumerate().map(|(k, &p)| p - (k == y) as u8 as f64).collect();
            let delta: Vec<f64> = (0..hidden)
                .map(|j| d.iter().zip(&model.v).map(|(dk, vk)| dk * vk[j]).sum::<f64>() * float_slope(o[j]))
                .collect();
            for k in 0..shape.outputs {
                for j in 0..hidden {
                    dv[k][j] = rates.beta2 * dv[k][j] + (1.0 - rates.beta2) * d[k] * o[j];
                    model.v[k][j] -= rates.alpha2 * dv[k][j];
                }
            }
            for j in 0..hidden {
                for i in 0..shape.inputs {
                    dw[j][i] = rates.beta1 * dw[j][i] + (1.0 - rates.beta1) * delta[j] * x[i];
                    model.w[j][i] -= rates.alpha1 * dw[j][i];
                }
            }
        }
    }
    Ok(model)
}

pub fn predict_nn_float(model: &FloatNnModel, ds: &RawDataset) -> f64 {
    let hits = ds
        .x
        .iter()
        .zip(&ds.y)
        .filter(|(row, &y)| {
            let x: Vec<f64> = std::iter::once(1.0).chain(row.iter().copied()).collect();
            argmax(&nn_forward_float(model, &x).1) == y
        })
        .count();
    hits as f64 / ds.len().max(1) as f64
}
