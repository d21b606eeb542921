//! Every subcommand driven through argument parsing on tiny inputs.

use std::path::{Path, PathBuf};

use clap::Parser;
use mktorus::report::{read_lines, Record};

use crate::{commands, run, Cli};

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> Self {
        let p = std::env::temp_dir().join(format!("mktorus-e2e-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&p);
        std::fs::create_dir_all(&p).unwrap();
        TempDir(p)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn cli(args: &[&str]) -> anyhow::Result<bool> {
    let mut full = vec!["mktorus"];
    full.extend_from_slice(args);
    run(Cli::try_parse_from(full)?)
}

fn ok(args: &[&str]) {
    assert!(cli(args).unwrap(), "{args:?} failed its checks");
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Eight samples written by the generator.
fn tiny_csv(dir: &TempDir) -> PathBuf {
    let p = dir.path("tiny.csv");
    ok(&["gen-data", "--samples", "8", "--features", "2", "--noise", "0.1", "--seed", "4", "--out", s(&p)]);
    p
}

#[test]
fn keygen_encrypt_decrypt() {
    let d = TempDir::new("keys");
    let keys = d.path("keys");
    let ct = d.path("ct.bin");
    ok(&["keygen", "--parties", "3", "--n", "32", "--seed", "2", "--out", s(&keys)]);
    ok(&["encrypt", "--keys", s(&keys), "--bits", "10110", "--out", s(&ct)]);
    ok(&["decrypt", "--keys", s(&keys), "--input", s(&ct)]);
    let cfg = crate::config::RunConfig::for_command("decrypt");
    assert_eq!(commands::decrypt_cmd(&cfg, &keys, &ct).unwrap(), "10110");
    assert_eq!(commands::read_ciphertexts(&ct).unwrap().len(), 5);
    assert!(cli(&["encrypt", "--keys", s(&keys), "--bits", "12", "--out", s(&ct)]).is_err());
    assert!(cli(&["decrypt", "--keys", s(&d.path("missing")), "--input", s(&ct)]).is_err());
}

#[test]
fn gen_data_is_seeded() {
    let d = TempDir::new("gen");
    let (a, b, c) = (d.path("a.csv"), d.path("b.csv"), d.path("c.csv"));
    ok(&["gen-data", "--samples", "6", "--seed", "3", "--out", s(&a)]);
    ok(&["gen-data", "--samples", "6", "--seed", "3", "--out", s(&b)]);
    ok(&["gen-data", "--samples", "6", "--seed", "4", "--out", s(&c)]);
    let read = |p: &Path| std::fs::read_to_string(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(read(&a).lines().count(), 7);
}

#[test]
fn train_lr_every_mode() {
    let d = TempDir::new("lr");
    let data = tiny_csv(&d);
    let report = d.path("r.jsonl");
    for mode in ["float", "int", "enc"] {
        ok(&["train-lr", "--data", s(&data), "--mode", mode, "--iters", "3", "--check", "--report", s(&report)]);
    }
    ok(&["train-lr", "--data", s(&data), "--mode", "float", "--activation", "sigmoid", "--report", s(&report)]);
    ok(&["train-lr", "--data", s(&data), "--mode", "enc", "--backend", "noisesim", "--n", "16", "--iters", "2", "--check"]);
    let lines = read_lines(&report).unwrap();
    assert_eq!(lines.len(), 4);
    assert!(matches!(lines[2].record, Record::CipherAccuracy { matches_int: true, .. }));
    assert!(cli(&["train-lr", "--data", s(&data), "--activation", "sigmoid"]).is_err());
}

#[test]
fn train_nn_every_mode() {
    let d = TempDir::new("nn");
    let data = tiny_csv(&d);
    let report = d.path("r.jsonl");
    for mode in ["float", "int", "enc"] {
        let args = ["train-nn", "--data", s(&data), "--mode", mode, "--iters", "2", "--hidden", "2"];
        ok(&[&args[..], &["--check", "--report", s(&report)]].concat());
    }
    let lines = read_lines(&report).unwrap();
    assert_eq!(lines.len(), 3);
    for l in &lines {
        match l.record {
            Record::PlainAccuracy { accuracy, .. } | Record::CipherAccuracy { accuracy, .. } => {
                assert!((0.0..=1.0).contains(&accuracy))
            }
            _ => panic!("unexpected record {l:?}"),
        }
    }
}

#[test]
fn training_reports_replay() {
    let d = TempDir::new("replay");
    let data = tiny_csv(&d);
    let (a, b) = (d.path("a.jsonl"), d.path("b.jsonl"));
    for r in [&a, &b] {
        ok(&["train-lr", "--data", s(&data), "--mode", "enc", "--iters", "2", "--seed", "9", "--report", s(r)]);
    }
    let (a, b) = (read_lines(&a).unwrap(), read_lines(&b).unwrap());
    assert_eq!(a[0].payload(), b[0].payload());
}

#[test]
fn distdec_demo_transports() {
    let d = TempDir::new("dd");
    let report = d.path("r.jsonl");
    let common = ["distdec-demo", "--parties", "3", "--bits", "20", "--groups", "2", "--n", "32", "--check"];
    ok(&[&common[..], &["--report", s(&report)]].concat());
    ok(&[&common[..], &["--threads"]].concat());
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    drop(listener);
    std::thread::scope(|sc| {
        let server = sc.spawn(|| cli(&[&common[..], &["--listen", &addr]].concat()));
        ok(&[&common[..], &["--connect", &addr]].concat());
        assert!(server.join().unwrap().unwrap());
    });
    let lines = read_lines(&report).unwrap();
    assert!(matches!(
        lines[0].record,
        Record::Decryption { accuracy, server_to_server: 0, messages: 24, .. } if accuracy == 1.0
    ));
    // Noise far past the decoding margin makes the accuracy check fail.
    assert!(!cli(&["distdec-demo", "--parties", "2", "--bits", "200", "--n", "16", "--alpha", "0.3", "--check"]).unwrap());
}

#[test]
fn bench_activation_and_report() {
    let d = TempDir::new("bench");
    let report = d.path("r.jsonl");
    for f in ["g", "taylor3", "taylor7"] {
        ok(&["bench-activation", "--function", f, "--width", "16", "--samples", "3", "--check", "--report", s(&report)]);
    }
    ok(&["bench-activation", "--function", "g", "--backend", "noisesim", "--n", "16", "--check", "--samples", "2"]);
    assert!(cli(&["bench-activation", "--function", "sigmoid"]).is_err());
    let md = d.path("r.md");
    ok(&["report", s(&report), "--out", s(&md)]);
    let md = std::fs::read_to_string(md).unwrap();
    assert!(md.contains("## Activation cost in ciphertext"));
    assert!(md.contains("| 7-order Taylor | 16 |"));
}

#[test]
fn config_file_and_flags() {
    let d = TempDir::new("cfg");
    let cfg = d.path("run.json");
    std::fs::write(&cfg, r#"{"params": {"seed": 11}, "iters": 2, "generator": {"samples": 8}}"#).unwrap();
    let report = d.path("r.jsonl");
    ok(&["train-lr", "--config", s(&cfg), "--report", s(&report)]);
    ok(&["train-lr", "--config", s(&cfg), "--seed", "12", "--report", s(&report)]);
    let lines = read_lines(&report).unwrap();
    assert_eq!((lines[0].seed, lines[1].seed), (11, 12));
    ok(&["train-lr", "--config", s(&cfg), "--dump-config"]);
    std::fs::write(&cfg, r#"{"scale": {"q": 10}}"#).unwrap();
    let err = cli(&["train-lr", "--config", s(&cfg)]).unwrap_err();
    assert!(format!("{err:#}").contains("power of two"), "{err:#}");
}
