//! `mktorus`: key management, encrypted training, the distributed
//! decryption demo and report rendering.

mod commands;
mod config;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mktorus::report::{append_lines, read_lines, render_markdown};
use mktorus::{ActKind, BackendKind, Combiner, Mode};

use commands::Transport;
use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "mktorus", version, about = "Multi-key torus encryption toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed. Overrides MKTORUS_SEED and the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the effective configuration as JSON and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Args, Debug, Clone, Default)]
struct CryptoArgs {
    /// Number of parties.
    #[arg(long)]
    parties: Option<usize>,
    /// TLWE dimension per party.
    #[arg(long)]
    n: Option<usize>,
    /// Noise standard deviation on the torus.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
struct TrainArgs {
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long, value_parser = parse_backend)]
    backend: Option<BackendKind>,
    /// g, taylor3, taylor7 or sigmoid (float mode only).
    #[arg(long, value_parser = parse_act)]
    activation: Option<ActKind>,
    /// CSV dataset with the label in the last column.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Iterations (logistic regression) or epochs (network).
    #[arg(long)]
    iters: Option<usize>,
    /// Scale factor q.
    #[arg(long)]
    q: Option<i64>,
    /// Word width of stored values.
    #[arg(long)]
    word: Option<usize>,
    /// Width of products before rescaling.
    #[arg(long)]
    wide: Option<usize>,
    /// Append report records to this file.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Also run the other integer mode and fail unless both agree.
    #[arg(long)]
    check: bool,
    #[command(flatten)]
    crypto: CryptoArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate parameters and one key pair per party.
    Keygen {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        crypto: CryptoArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Jointly encrypt a bit string under every key in a key directory.
    Encrypt {
        #[arg(long)]
        keys: PathBuf,
        /// Bits to encrypt, e.g. 1011.
        #[arg(long)]
        bits: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Decrypt a ciphertext file through the two-server protocol.
    Decrypt {
        #[arg(long)]
        keys: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train logistic regression.
    TrainLr {
        #[command(flatten)]
        train: TrainArgs,
        /// Integer learning rate.
        #[arg(long)]
        lr: Option<i64>,
        #[command(flatten)]
        common: Common,
    },
    /// Train the one-hidden-layer network.
    TrainNn {
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        hidden: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Run distributed decryption on random bits and report accuracy.
    DistdecDemo {
        #[command(flatten)]
        crypto: CryptoArgs,
        #[arg(long)]
        bits: Option<usize>,
        #[arg(long)]
        groups: Option<usize>,
        /// Host both servers on this address.
        #[arg(long, conflicts_with = "connect")]
        listen: Option<SocketAddr>,
        /// Run the participants against servers at this address.
        #[arg(long)]
        connect: Option<SocketAddr>,
        /// Give every in-process role its own thread.
        #[arg(long)]
        threads: bool,
        /// Network timeout in seconds.
        #[arg(long, default_value_t = 30)]
        timeout: u64,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        check: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Count the gates of one activation circuit.
    BenchActivation {
        #[arg(long)]
        width: Option<usize>,
        #[arg(long, value_parser = parse_act)]
        function: Option<ActKind>,
        #[arg(long, value_parser = parse_backend)]
        backend: Option<BackendKind>,
        /// or | add
        #[arg(long, value_parser = parse_combiner)]
        combiner: Option<Combiner>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Compare every decrypted output with the integer oracle.
        #[arg(long)]
        check: bool,
        #[command(flatten)]
        crypto: CryptoArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic linearly separable dataset as CSV.
    GenData {
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        features: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        /// Features are uniform on [-range, range].
        #[arg(long)]
        range: Option<f64>,
        /// Output path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Render a JSON-lines report as Markdown tables.
    Report {
        input: PathBuf,
        /// Write the Markdown here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: mktorus::Error| e.to_string())
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    s.parse().map_err(|e: mktorus::Error| e.to_string())
}

fn parse_act(s: &str) -> Result<ActKind, String> {
    s.parse().map_err(|e: mktorus::Error| e.to_string())
}

fn parse_combiner(s: &str) -> Result<Combiner, String> {
    match s {
        "or" => Ok(Combiner::Or),
        "add" => Ok(Combiner::Add),
        other => Err(format!("unknown combiner {other:?}, expected or|add")),
    }
}

fn base_config(command: &str, common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p, command)?,
        None => RunConfig::for_command(command),
    };
    cfg.apply_seed_env()?;
    if let Some(s) = common.seed {
        cfg.params.seed = s;
        cfg.generator.seed = s;
    }
    Ok(cfg)
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_crypto(cfg: &mut RunConfig, c: &CryptoArgs) {
    set(&mut cfg.params.k, c.parties);
    set(&mut cfg.params.n, c.n);
    set(&mut cfg.params.alpha, c.alpha);
}

fn apply_train(cfg: &mut RunConfig, t: &TrainArgs) {
    set(&mut cfg.mode, t.mode);
    set(&mut cfg.backend, t.backend);
    set(&mut cfg.activation, t.activation);
    set(&mut cfg.iters, t.iters);
    set(&mut cfg.scale.q, t.q);
    set(&mut cfg.scale.word, t.word);
    set(&mut cfg.scale.wide, t.wide);
    if t.data.is_some() {
        cfg.dataset = t.data.clone();
    }
    if t.report.is_some() {
        cfg.output = t.report.clone();
    }
    apply_crypto(cfg, &t.crypto);
}

/// Validates, then either prints the config or hands it to `run`.
fn finish(cfg: RunConfig, dump: bool, run: impl FnOnce(&RunConfig) -> Result<commands::Outcome>) -> Result<bool> {
    cfg.validate()?;
    if dump {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(true);
    }
    let outcome = run(&cfg)?;
    for l in &outcome.lines {
        println!("{}", l.to_json());
    }
    if let Some(path) = &cfg.output {
        append_lines(path, &outcome.lines).with_context(|| format!("appending to {}", path.display()))?;
    }
    for f in &outcome.failures {
        eprintln!("check failed: {f}");
    }
    Ok(outcome.failures.is_empty())
}

fn no_records(run: impl FnOnce() -> Result<()>) -> Result<commands::Outcome> {
    run().map(|()| commands::Outcome::default())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Keygen { out, crypto, common } => {
            let mut cfg = base_config("keygen", &common)?;
            apply_crypto(&mut cfg, &crypto);
            finish(cfg, common.dump_config, |c| no_records(|| commands::keygen_cmd(c, &out)))
        }
        Command::Encrypt { keys, bits, out, common } => {
            let cfg = base_config("encrypt", &common)?;
            finish(cfg, common.dump_config, |c| no_records(|| commands::encrypt_cmd(c, &keys, &bits, &out)))
        }
        Command::Decrypt { keys, input, common } => {
            let cfg = base_config("decrypt", &common)?;
            finish(cfg, common.dump_config, |c| {
                no_records(|| {
                    println!("{}", commands::decrypt_cmd(c, &keys, &input)?);
                    Ok(())
                })
            })
        }
        Command::TrainLr { train, lr, common } => {
            let mut cfg = base_config("train-lr", &common)?;
            apply_train(&mut cfg, &train);
            set(&mut cfg.scale.alpha, lr);
            finish(cfg, common.dump_config, |c| commands::train_lr_cmd(c, train.check))
        }
        Command::TrainNn { train, hidden, common } => {
            let mut cfg = base_config("train-nn", &common)?;
            apply_train(&mut cfg, &train);
            set(&mut cfg.hidden, hidden);
            finish(cfg, common.dump_config, |c| commands::train_nn_cmd(c, train.check))
        }
        Command::DistdecDemo { crypto, bits, groups, listen, connect, threads, timeout, report, check, common } => {
            let mut cfg = base_config("distdec-demo", &common)?;
            apply_crypto(&mut cfg, &crypto);
            set(&mut cfg.bits, bits);
            set(&mut cfg.groups, groups);
            if report.is_some() {
                cfg.output = report;
            }
            let transport = match (listen, connect, threads) {
                (Some(a), _, _) => Transport::Listen(a),
                (_, Some(a), _) => Transport::Connect(a),
                (_, _, true) => Transport::Threads,
                _ => Transport::InProcess,
            };
            let timeout = Duration::from_secs(timeout);
            finish(cfg, common.dump_config, |c| commands::distdec_cmd(c, transport, timeout, check))
        }
        Command::BenchActivation { width, function, backend, combiner, samples, report, check, crypto, common } => {
            let mut cfg = base_config("bench-activation", &common)?;
            apply_crypto(&mut cfg, &crypto);
            set(&mut cfg.width, width);
            set(&mut cfg.activation, function);
            set(&mut cfg.backend, backend);
            set(&mut cfg.combiner, combiner);
            set(&mut cfg.samples, samples);
            if report.is_some() {
                cfg.output = report;
            }
            finish(cfg, common.dump_config, |c| commands::bench_activation_cmd(c, check))
        }
        Command::GenData { samples, features, noise, range, out, common } => {
            let mut cfg = base_config("gen-data", &common)?;
            set(&mut cfg.generator.samples, samples);
            set(&mut cfg.generator.features, features);
            set(&mut cfg.generator.noise, noise);
            set(&mut cfg.generator.range, range);
            finish(cfg, common.dump_config, |c| no_records(|| commands::gen_data_cmd(c, out.as_deref())))
        }
        Command::Report { input, out } => {
            let md = render_markdown(&read_lines(&input).with_context(|| format!("reading {}", input.display()))?);
            match out {
                Some(p) => std::fs::write(&p, md).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{md}"),
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod end_to_end;
