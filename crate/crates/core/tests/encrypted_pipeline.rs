//! Library-level flows across modules: data owned by different parties is
//! combined under encryption and opened with the two-server protocol.

use mktorus::circuits::{decode_word, mk_add, mk_enc_word_for, mk_mul, EncWord};
use mktorus::protocol::DistDecConfig;
use mktorus::train::{train_lr_enc, train_lr_int};
use mktorus::{ActKind, GenConfig, PrepMode, ScaleConfig, Session};

fn open(s: &Session, w: &EncWord, seed: u64) -> i64 {
    let bits = s.decrypt_distributed(w.bits(), &DistDecConfig::new(seed)).unwrap();
    let l = bits.len();
    let raw = bits.iter().enumerate().fold(0i64, |acc, (i, &b)| acc | ((b as i64) << i));
    (raw << (64 - l)) >> (64 - l)
}

#[test]
fn two_parties_multiply_and_open_jointly() {
    let s = Session::noise_sim(32, 3, 2f64.powi(-20), 8).unwrap();
    let a = mk_enc_word_for(&s, 1, -37, 12).unwrap();
    let b = mk_enc_word_for(&s, 2, 21, 12).unwrap();
    let c = mk_enc_word_for(&s, 3, 400, 24).unwrap();
    let prod = mk_mul(&s, &a, &b).unwrap();
    let sum = mk_add(&s, &prod, &c).unwrap();
    assert_eq!(open(&s, &sum, 1), -37 * 21 + 400);
    assert_eq!(decode_word(&s, &sum).unwrap(), -37 * 21 + 400);
}

#[test]
fn encrypted_lr_on_noise_sim_matches_clear_integers() {
    let raw = mktorus::data::gen_linear(&GenConfig { samples: 6, seed: 12, ..GenConfig::default() }).unwrap();
    let cfg = ScaleConfig { alpha: 4, ..ScaleConfig::default() };
    let ds = mktorus::data::preprocess(&raw, PrepMode::Rounding, cfg.q, cfg.word).unwrap();
    let s = Session::noise_sim(16, 2, 2f64.powi(-25), 3).unwrap();
    let (enc, stats) = train_lr_enc(&s, &ds, &cfg, ActKind::G, 2, true).unwrap();
    let (int, reference) = train_lr_int(&ds, &cfg, ActKind::G, 2, true).unwrap();
    assert_eq!(enc, int);
    assert_eq!(stats.history, reference.history);
    assert!(stats.gates.bootstrapped > 0);
    assert_eq!(reference.gates.bootstrapped, 0);
}
