//! JSON-lines run reports and their Markdown rendering.
//!
//! Each line is one measurement. Records come in four shapes: distributed
//! decryption runs, plaintext training accuracy, encrypted training
//! accuracy with cost, and activation gate cost.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activation::ActKind;
use crate::backend::BackendKind;
use crate::circuits::Combiner;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lr,
    Nn,
}

/// Whether plaintext training ran on real or integer-preprocessed data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Float,
    Int,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "table", rename_all = "snake_case")]
pub enum Record {
    Decryption {
        parties: usize,
        bits: usize,
        groups: usize,
        alpha: f64,
        accuracy: f64,
        matches_naive: bool,
        messages: usize,
        server_to_server: usize,
        seconds: f64,
    },
    PlainAccuracy {
        model: ModelKind,
        data: DataKind,
        activation: ActKind,
        accuracy: f64,
    },
    CipherAccuracy {
        model: ModelKind,
        activation: ActKind,
        backend: BackendKind,
        accuracy: f64,
        matches_int: bool,
        bootstrapped: u64,
        free: u64,
        seconds: f64,
    },
    ActivationCost {
        activation: ActKind,
        width: usize,
        backend: BackendKind,
        combiner: Combiner,
        bootstrapped: u64,
        free: u64,
        seconds: f64,
    },
}

impl Record {
    /// Copy with every wall-clock field zeroed.
    pub fn without_timing(&self) -> Record {
        let mut r = self.clone();
        match &mut r {
            Record::Decryption { seconds, .. }
            | Record::CipherAccuracy { seconds, .. }
            | Record::ActivationCost { seconds, .. } => *seconds = 0.0,
            Record::PlainAccuracy { .. } => {}
        }
        r
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    pub os: String,
    pub arch: String,
    pub threads: usize,
    pub version: String,
}

impl Environment {
    pub fn current() -> Self {
        Environment {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportLine {
    pub schema: u32,
    pub command: String,
    pub seed: u64,
    #[serde(flatten)]
    pub record: Record,
    pub env: Environment,
}

impl ReportLine {
    pub fn new(command: &str, seed: u64, record: Record) -> Self {
        ReportLine { schema: SCHEMA_VERSION, command: command.into(), seed, record, env: Environment::current() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report lines serialize")
    }

    /// The replayable part: everything except timing and environment.
    pub fn payload(&self) -> String {
        let v = serde_json::json!({
            "schema": self.schema,
            "command": self.command,
            "seed": self.seed,
            "record": self.record.without_timing(),
        });
        v.to_string()
    }
}

pub fn append_lines(path: impl AsRef<Path>, lines: &[ReportLine]) -> Result<()> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    for l in lines {
        writeln!(f, "{}", l.to_json())?;
    }
    Ok(())
}

pub fn parse_lines<R: BufRead>(reader: R) -> Result<Vec<ReportLine>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ReportLine =
            serde_json::from_str(&line).map_err(|e| Error::Codec(format!("report line {}: {e}", i + 1)))?;
        if rec.schema != SCHEMA_VERSION {
            return Err(Error::Codec(format!("report line {}: schema {} unsupported", i + 1, rec.schema)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_lines(path: impl AsRef<Path>) -> Result<Vec<ReportLine>> {
    parse_lines(std::io::BufReader::new(std::fs::File::open(path)?))
}

fn act_label(a: ActKind) -> &'static str {
    match a {
        ActKind::Taylor7 => "7-order Taylor",
        ActKind::Taylor3 => "3-order Taylor",
        ActKind::G => "g (piecewise)",
        ActKind::Sigmoid => "Sigmoid",
    }
}

const ACT_ORDER: [ActKind; 4] = [ActKind::Taylor7, ActKind::Taylor3, ActKind::G, ActKind::Sigmoid];

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

/// Renders the records as Markdown tables, one per record shape and model.
/// Later records replace earlier ones with the same key.
pub fn render_markdown(lines: &[ReportLine]) -> String {
    let mut out = String::new();
    let mut dec = Vec::new();
    let mut plain: BTreeMap<(ModelKind, DataKind, ActKind), f64> = BTreeMap::new();
    let mut cipher: BTreeMap<(ModelKind, ActKind), (f64, bool, u64, f64, BackendKind)> = BTreeMap::new();
    let mut cost: BTreeMap<(usize, Combiner, ActKind), (u64, u64, f64, BackendKind)> = BTreeMap::new();
    for l in lines {
        match &l.record {
            Record::Decryption { .. } => dec.push(l.record.clone()),
            Record::PlainAccuracy { model, data, activation, accuracy } => {
                plain.insert((*model, *data, *activation), *accuracy);
            }
            Record::CipherAccuracy { model, activation, backend, accuracy, matches_int, bootstrapped, seconds, .. } => {
                cipher.insert((*model, *activation), (*accuracy, *matches_int, *bootstrapped, *seconds, *backend));
            }
            Record::ActivationCost { activation, width, backend, combiner, bootstrapped, free, seconds } => {
                cost.insert((*width, *combiner, *activation), (*bootstrapped, *free, *seconds, *backend));
            }
        }
    }

    if !dec.is_empty() {
        out.push_str("## Distributed decryption\n\n");
        out.push_str("| Parties | Bits | Groups | alpha | Accuracy | Matches naive | Messages | Server-server | Time (s) |\n");
        out.push_str("|---|---|---|---|---|---|---|---|---|\n");
        for r in &dec {
            if let Record::Decryption { parties, bits, groups, alpha, accuracy, matches_naive, messages, server_to_server, seconds } = r {
                let _ = writeln!(
                    out,
                    "| {parties} | {bits} | {groups} | {alpha:e} | {} | {} | {messages} | {server_to_server} | {seconds:.3} |",
                    pct(*accuracy),
                    if *matches_naive { "yes" } else { "no" }
                );
            }
        }
        out.push('\n');
    }

    for model in [ModelKind::Lr, ModelKind::Nn] {
        let acts: Vec<ActKind> =
            ACT_ORDER.iter().copied().filter(|a| plain.keys().any(|(m, _, x)| *m == model && x == a)).collect();
        if acts.is_empty() {
            continue;
        }
        let title = if model == ModelKind::Lr { "Logistic regression" } else { "Neural network" };
        let _ = writeln!(out, "## {title}: plaintext accuracy\n");
        out.push_str("| Data type |");
        for a in &acts {
            let _ = write!(out, " {} |", act_label(*a));
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(acts.len()));
        out.push('\n');
        for (data, label) in [(DataKind::Int, "Integer data"), (DataKind::Float, "Floating data")] {
            let _ = write!(out, "| {label} |");
            for a in &acts {
                let cell = plain.get(&(model, data, *a)).map_or("-".to_string(), |v| pct(*v));
                let _ = write!(out, " {cell} |");
            }
            out.push('\n');
        }
        out.push('\n');
    }

    for model in [ModelKind::Lr, ModelKind::Nn] {
        let rows: Vec<_> = ACT_ORDER.iter().filter_map(|a| cipher.get(&(model, *a)).map(|v| (*a, *v))).collect();
        if rows.is_empty() {
            continue;
        }
        let title = if model == ModelKind::Lr { "Logistic regression" } else { "Neural network" };
        let _ = writeln!(out, "## {title}: ciphertext training\n");
        out.push_str("| Activation | Backend | Accuracy | Same as integer | Bootstrapped gates | Time (s) |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        for (a, (acc, same, gates, secs, backend)) in rows {
            let _ = writeln!(
                out,
                "| {} | {backend:?} | {} | {} | {gates} | {secs:.3} |",
                act_label(a),
                pct(acc),
                if same { "yes" } else { "no" }
            );
        }
        out.push('\n');
    }

    if !cost.is_empty() {
        out.push_str("## Activation cost in ciphertext\n\n");
        out.push_str("| Activation | Width | Combiner | Backend | Bootstrapped gates | Free gates | Time (s) | Ratio to g |\n");
        out.push_str("|---|---|---|---|---|---|---|---|\n");
        for ((width, combiner, a), (boot, free, secs, backend)) in &cost {
            let ratio = cost
                .get(&(*width, *combiner, ActKind::G))
                .filter(|g| g.0 > 0)
                .map_or("-".to_string(), |g| format!("{:.2}", *boot as f64 / g.0 as f64));
            let _ = writeln!(
                out,
                "| {} | {width} | {combiner:?} | {backend:?} | {boot} | {free} | {secs:.3} | {ratio} |",
                act_label(*a)
            );
        }
        out.push('\n');
    }
    out
}
