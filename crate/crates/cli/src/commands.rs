use std::fs;
use std::io::Write;
use std::net::{SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use mktorus::activation::{act_circuit, act_circuit_int};
use mktorus::circuits::{decode_word, mk_enc_word, wrap_to_width};
use mktorus::codec::{decode_words, WordCodec};
use mktorus::data::{gen_linear, Dataset};
use mktorus::protocol::tcp::{participate, serve};
use mktorus::protocol::{
    demo_workload, distributed_decrypt, distributed_decrypt_threaded, DistDecConfig, DistDecOutcome,
};
use mktorus::recipes::{LrRecipe, NnData, NnRecipe};
use mktorus::report::{DataKind, ModelKind, Record, ReportLine};
use mktorus::tlwe::{decrypt_naive, encrypt_bit_joint, keygen, setup};
use mktorus::torus::role_rng;
use mktorus::train::{
    predict_lr_int, predict_nn_int, train_lr_enc, train_lr_int, train_nn_enc, train_nn_int, IntLrModel, IntNnModel,
    TrainStats,
};
use mktorus::{ActKind, MKCiphertext, MKParams, Mode, NoiseParams, NoiseSampler, PublicKey, RawDataset, SecretKey, Session};

use crate::config::RunConfig;

const IRIS_CSV: &str = include_str!("../../../data/iris.csv");

/// RNG streams of the key-management commands.
const STREAM_KEYGEN: u64 = 0x6b65;
const STREAM_ENCRYPT: u64 = 0x656e;

/// Records produced by a command plus any failed `--check` assertions.
#[derive(Debug, Default)]
pub struct Outcome {
    pub lines: Vec<ReportLine>,
    pub failures: Vec<String>,
}

impl Outcome {
    fn push(&mut self, cfg: &RunConfig, record: Record) {
        self.lines.push(ReportLine::new(&cfg.command, cfg.params.seed, record));
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }
}

fn key_path(dir: &Path, party: usize) -> PathBuf {
    dir.join(format!("party{party}.sk"))
}

pub fn keygen_cmd(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let p = &cfg.params;
    let params = setup(p.n, p.k, NoiseParams::new(p.alpha, p.seed))?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("params.json"), serde_json::to_string_pretty(&params)?)?;
    let mut rng = role_rng(p.seed, STREAM_KEYGEN);
    for i in 1..=p.k {
        let (sk, pk) = keygen(&params, i, &mut rng)?;
        fs::write(key_path(dir, i), sk.to_bytes())?;
        fs::write(dir.join(format!("party{i}.pk.json")), serde_json::to_string(&pk)?)?;
    }
    eprintln!("wrote params and {} key pairs to {}", p.k, dir.display());
    Ok(())
}

pub fn load_keys(dir: &Path) -> Result<(MKParams, Vec<SecretKey>)> {
    let text = fs::read_to_string(dir.join("params.json")).with_context(|| format!("no params.json in {}", dir.display()))?;
    let params: MKParams = serde_json::from_str(&text).context("parsing params.json")?;
    let mut keys = Vec::with_capacity(params.k);
    for i in 1..=params.k {
        let path = key_path(dir, i);
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        let sk = SecretKey::from_bytes(&bytes).with_context(|| format!("decoding {}", path.display()))?;
        ensure!(sk.party_index == i && sk.s.len() == params.n, "{} does not match params.json", path.display());
        let pk: PublicKey = serde_json::from_str(&fs::read_to_string(dir.join(format!("party{i}.pk.json")))?)?;
        ensure!(pk.party_index == i, "public key {i} is mislabeled");
        keys.push(sk);
    }
    Ok((params, keys))
}

pub fn parse_bits(s: &str) -> Result<Vec<u8>> {
    s.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => bail!("bit string may only contain 0 and 1, found {other:?}"),
        })
        .collect()
}

pub fn encrypt_cmd(cfg: &RunConfig, keys_dir: &Path, bits: &str, out: &Path) -> Result<()> {
    let (params, keys) = load_keys(keys_dir)?;
    let bits = parse_bits(bits)?;
    let mut sampler = NoiseSampler::with_rng(params.noise.alpha, role_rng(cfg.params.seed, STREAM_ENCRYPT));
    let mut bytes = Vec::new();
    for &b in &bits {
        bytes.extend(encrypt_bit_joint(b, &keys, &params, &mut sampler).to_bytes());
    }
    fs::write(out, bytes).with_context(|| format!("writing {}", out.display()))?;
    eprintln!("encrypted {} bits for {} parties", bits.len(), keys.len());
    Ok(())
}

pub fn read_ciphertexts(path: &Path) -> Result<Vec<MKCiphertext>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rest = bytes.as_slice();
    let mut out = Vec::new();
    while !rest.is_empty() {
        let (words, used) = decode_words(rest)?;
        out.push(MKCiphertext::from_words(&words)?);
        rest = &rest[used..];
    }
    Ok(out)
}

/// Decrypts through the two-server protocol and returns the bit string.
pub fn decrypt_cmd(cfg: &RunConfig, keys_dir: &Path, input: &Path) -> Result<String> {
    let (_, keys) = load_keys(keys_dir)?;
    let cts = read_ciphertexts(input)?;
    let out = distributed_decrypt(&cts, &keys, &DistDecConfig::new(cfg.params.seed))?;
    if let Some(i) = out.outputs[0].iter().position(|d| d.out_of_band) {
        eprintln!("warning: bit {i} decoded outside its band");
    }
    Ok(out.bits().iter().map(|b| char::from(b'0' + b)).collect())
}

pub fn gen_data_cmd(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let raw = gen_linear(&cfg.generator)?;
    match out {
        Some(p) => raw.write_csv(p)?,
        None => std::io::stdout().write_all(raw.to_csv_string()?.as_bytes())?,
    }
    Ok(())
}

/// How the demo reaches the servers.
#[derive(Clone, Copy, Debug)]
pub enum Transport {
    InProcess,
    Threads,
    Listen(SocketAddr),
    Connect(SocketAddr),
}

fn group_seed(seed: u64, g: usize) -> u64 {
    seed.wrapping_add((g as u64) << 32)
}

pub fn distdec_cmd(cfg: &RunConfig, transport: Transport, timeout: Duration, check: bool) -> Result<Outcome> {
    let p = &cfg.params;
    let mut outcome = Outcome::default();
    let listener = match transport {
        Transport::Listen(addr) => Some(TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?),
        _ => None,
    };
    let (mut correct, mut matches_naive, mut messages, mut s2s) = (0usize, true, 0usize, 0usize);
    let start = Instant::now();
    for g in 0..cfg.groups {
        let seed = group_seed(p.seed, g);
        let w = demo_workload(p.n, p.k, cfg.bits, p.alpha, seed)?;
        let dcfg = DistDecConfig { seed, timeout };
        let out: DistDecOutcome = match transport {
            Transport::Listen(_) => {
                let b: Vec<_> = w.cts.iter().map(|c| c.b()).collect();
                serve(listener.as_ref().expect("bound above"), dcfg.session_id(), p.k, &b, timeout)?;
                eprintln!("group {g}: served {} parties", p.k);
                continue;
            }
            Transport::Connect(addr) => participate(addr, &w.cts, &w.keys, &dcfg)?,
            Transport::Threads => distributed_decrypt_threaded(&w.cts, &w.keys, &dcfg)?,
            Transport::InProcess => distributed_decrypt(&w.cts, &w.keys, &dcfg)?,
        };
        let bits = out.bits();
        correct += bits.iter().zip(&w.plaintext).filter(|(a, b)| a == b).count();
        for (ct, &b) in w.cts.iter().zip(&bits) {
            matches_naive &= decrypt_naive(ct, &w.keys)? == b;
        }
        matches_naive &= out.outputs.iter().all(|o| o == &out.outputs[0]);
        messages += out.transcript.len();
        s2s += out.transcript.server_to_server();
    }
    if listener.is_some() {
        return Ok(outcome);
    }
    let total = cfg.bits * cfg.groups;
    let accuracy = correct as f64 / total as f64;
    outcome.push(
        cfg,
        Record::Decryption {
            parties: p.k,
            bits: cfg.bits,
            groups: cfg.groups,
            alpha: p.alpha,
            accuracy,
            matches_naive,
            messages,
            server_to_server: s2s,
            seconds: start.elapsed().as_secs_f64(),
        },
    );
    if check {
        outcome.check(accuracy == 1.0, format!("accuracy {accuracy} != 1"));
        outcome.check(matches_naive, "protocol output differs from naive decryption");
        outcome.check(s2s == 0, format!("{s2s} server-to-server messages"));
        // A participant-only process sees its own 2k sends; the servers'
        // replies are recorded on their side of the socket.
        let per_group = if matches!(transport, Transport::Connect(_)) { 2 * p.k } else { 4 * p.k };
        let expected = per_group * cfg.groups;
        outcome.check(messages == expected, format!("{messages} messages, expected {expected}"));
    }
    Ok(outcome)
}

fn load_raw(cfg: &RunConfig, fallback: impl FnOnce() -> Result<RawDataset>) -> Result<RawDataset> {
    match &cfg.dataset {
        Some(p) => RawDataset::load_csv(p).with_context(|| format!("loading dataset {}", p.display())),
        None => fallback(),
    }
}

pub fn bundled_iris() -> Result<RawDataset> {
    Ok(RawDataset::from_csv_reader(IRIS_CSV.as_bytes())?)
}

fn session(cfg: &RunConfig) -> Result<Session> {
    let p = &cfg.params;
    Ok(Session::new(cfg.backend, p.n, p.k, p.alpha, p.seed)?)
}

fn warn_overflows(stats: &TrainStats) {
    if stats.overflows > 0 {
        eprintln!("warning: {} integer results wrapped; consider a wider word or smaller rates", stats.overflows);
    }
}

fn lr_recipe(cfg: &RunConfig) -> LrRecipe {
    LrRecipe {
        data: cfg.generator,
        scale: cfg.scale,
        iters: cfg.iters,
        float_alpha: cfg.float_rate,
        float_iters: cfg.iters,
    }
}

pub fn train_lr_cmd(cfg: &RunConfig, check: bool) -> Result<Outcome> {
    let recipe = lr_recipe(cfg);
    let raw = load_raw(cfg, || Ok(recipe.raw()?))?;
    ensure!(raw.n_classes() <= 2, "logistic regression needs binary labels, found {} classes", raw.n_classes());
    let mut outcome = Outcome::default();
    let act = cfg.activation;
    if cfg.mode == Mode::Float {
        let accuracy = recipe.float_accuracy(&raw, act)?;
        outcome.push(cfg, Record::PlainAccuracy { model: ModelKind::Lr, data: DataKind::Float, activation: act, accuracy });
        return Ok(outcome);
    }
    let ds = recipe.dataset(&raw)?;
    let int = train_lr_int(&ds, &cfg.scale, act, cfg.iters, check)?;
    warn_overflows(&int.1);
    let enc = if cfg.mode == Mode::Enc || check {
        let s = session(cfg)?;
        let start = Instant::now();
        let r = train_lr_enc(&s, &ds, &cfg.scale, act, cfg.iters, check)?;
        Some((r, start.elapsed().as_secs_f64()))
    } else {
        None
    };
    let same = |e: &(IntLrModel, TrainStats)| e.0 == int.0 && e.1.history == int.1.history;
    match (cfg.mode, &enc) {
        (Mode::Enc, Some((e, seconds))) => {
            let accuracy = predict_lr_int(&e.0, &ds, &cfg.scale)?;
            outcome.push(
                cfg,
                Record::CipherAccuracy {
                    model: ModelKind::Lr,
                    activation: act,
                    backend: cfg.backend,
                    accuracy,
                    matches_int: e.0 == int.0,
                    bootstrapped: e.1.gates.bootstrapped,
                    free: e.1.gates.free,
                    seconds: *seconds,
                },
            );
        }
        _ => {
            let accuracy = predict_lr_int(&int.0, &ds, &cfg.scale)?;
            outcome.push(cfg, Record::PlainAccuracy { model: ModelKind::Lr, data: DataKind::Int, activation: act, accuracy });
        }
    }
    if check {
        let e = &enc.as_ref().expect("check runs the encrypted model").0;
        outcome.check(same(e), "encrypted training diverged from the integer reference");
    }
    Ok(outcome)
}

pub fn nn_recipe(cfg: &RunConfig) -> NnRecipe {
    NnRecipe {
        scale: cfg.scale,
        hidden: cfg.hidden,
        epochs: cfg.iters,
        train_fraction: cfg.train_fraction,
        split_seed: cfg.params.seed,
        init_seed: cfg.init_seed,
        float_epochs: cfg.iters,
        ..NnRecipe::default()
    }
}

pub fn train_nn_cmd(cfg: &RunConfig, check: bool) -> Result<Outcome> {
    let recipe = nn_recipe(cfg);
    let raw = load_raw(cfg, bundled_iris)?;
    let d: NnData = recipe.prepare(&raw)?;
    ensure!(!d.train.is_empty() && !d.test.is_empty(), "split left an empty train or test set");
    let mut outcome = Outcome::default();
    let act = cfg.activation;
    if cfg.mode == Mode::Float {
        let accuracy = recipe.float_accuracy(&d, act)?;
        outcome.push(cfg, Record::PlainAccuracy { model: ModelKind::Nn, data: DataKind::Float, activation: act, accuracy });
        return Ok(outcome);
    }
    let train = |ds: &Dataset, s: Option<&Session>| -> Result<(IntNnModel, TrainStats)> {
        let (sc, h, e, seed) = (&cfg.scale, cfg.hidden, cfg.iters, cfg.init_seed);
        Ok(match s {
            Some(s) => train_nn_enc(s, ds, sc, act, h, e, seed, check)?,
            None => train_nn_int(ds, sc, act, h, e, seed, check)?,
        })
    };
    let int = train(&d.train_int, None)?;
    warn_overflows(&int.1);
    let enc = if cfg.mode == Mode::Enc || check {
        let s = session(cfg)?;
        let start = Instant::now();
        let r = train(&d.train_int, Some(&s))?;
        Some((r, start.elapsed().as_secs_f64()))
    } else {
        None
    };
    match (cfg.mode, &enc) {
        (Mode::Enc, Some((e, seconds))) => {
            let accuracy = predict_nn_int(&e.0, &d.test_int, &cfg.scale)?;
            outcome.push(
                cfg,
                Record::CipherAccuracy {
                    model: ModelKind::Nn,
                    activation: act,
                    backend: cfg.backend,
                    accuracy,
                    matches_int: e.0 == int.0,
                    bootstrapped: e.1.gates.bootstrapped,
                    free: e.1.gates.free,
                    seconds: *seconds,
                },
            );
        }
        _ => {
            let accuracy = predict_nn_int(&int.0, &d.test_int, &cfg.scale)?;
            outcome.push(cfg, Record::PlainAccuracy { model: ModelKind::Nn, data: DataKind::Int, activation: act, accuracy });
        }
    }
    if check {
        let e = &enc.as_ref().expect("check runs the encrypted model").0;
        outcome.check(e.0 == int.0 && e.1.history == int.1.history, "encrypted training diverged from the integer reference");
    }
    Ok(outcome)
}

/// Evenly spaced inputs over the range where each activation changes:
/// `[-8, 8]` for `g`, `[-4, 4]` at scale `q` for the polynomials.
fn bench_inputs(kind: ActKind, q: i64, samples: usize, width: usize) -> Vec<i64> {
    let (lo, hi) = match kind {
        ActKind::G => (-8, 8),
        _ => (-4 * q, 4 * q),
    };
    (0..samples)
        .map(|i| {
            let x = if samples == 1 { 0 } else { lo + (hi - lo) * i as i64 / (samples as i64 - 1) };
            wrap_to_width(x, width)
        })
        .collect()
}

pub fn bench_activation_cmd(cfg: &RunConfig, check: bool) -> Result<Outcome> {
    let s = session(cfg)?;
    let (kind, l, q_bits) = (cfg.activation, cfg.width, cfg.scale.q_bits());
    let mut outcome = Outcome::default();
    let mut gates = None;
    let mut seconds = 0.0;
    for x in bench_inputs(kind, cfg.scale.q, cfg.samples, l) {
        let w = mk_enc_word(&s, x, l)?;
        let scope = s.scope();
        let start = Instant::now();
        let y = act_circuit(&s, kind, &w, q_bits, cfg.combiner)?;
        seconds += start.elapsed().as_secs_f64();
        let used = scope.elapsed();
        if *gates.get_or_insert(used) != used {
            outcome.failures.push(format!("gate count depends on the input ({used:?} at x = {x})"));
        }
        if check {
            let want = act_circuit_int(kind, x, q_bits, l)?;
            let got = decode_word(&s, &y)?;
            outcome.check(got == want, format!("{kind}({x}) decrypted to {got}, expected {want}"));
        }
    }
    let gates = gates.expect("at least one sample");
    outcome.push(
        cfg,
        Record::ActivationCost {
            activation: kind,
            width: l,
            backend: cfg.backend,
            combiner: cfg.combiner,
            bootstrapped: gates.bootstrapped,
            free: gates.free,
            seconds: seconds / cfg.samples as f64,
        },
    );
    Ok(outcome)
}
