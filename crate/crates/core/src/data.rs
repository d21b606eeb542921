//! Datasets: CSV I/O, the synthetic linear generator, splitting and the
//! integer preprocessing applied before encryption.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::circuits::fits;
use crate::error::{Error, Result};

/// Real-valued features with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    pub feature_names: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.y.iter().max().map_or(0, |m| m + 1)
    }

    /// Header row, numeric columns, label last.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<RawDataset> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Dataset(e.to_string()))?.clone();
        if headers.len() < 2 {
            return Err(Error::Dataset("need at least one feature column and a label column".into()));
        }
        let feature_names: Vec<String> = headers.iter().take(headers.len() - 1).map(str::to_string).collect();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Dataset(e.to_string()))?;
            let row = line + 2;
            if rec.len() != headers.len() {
                return Err(Error::Dataset(format!("row {row}: expected {} columns, got {}", headers.len(), rec.len())));
            }
            let mut feats = Vec::with_capacity(feature_names.len());
            for (c, field) in rec.iter().take(feature_names.len()).enumerate() {
                let v: f64 = field.parse().map_err(|_| Error::Dataset(format!("row {row}, column {c}: {field:?}")))?;
                if !v.is_finite() {
                    return Err(Error::Dataset(format!("row {row}, column {c}: non-finite value")));
                }
                feats.push(v);
            }
            let label = rec.get(feature_names.len()).unwrap_or_default();
            let label: f64 = label.parse().map_err(|_| Error::Dataset(format!("row {row}: bad label {label:?}")))?;
            if label < 0.0 || label.fract() != 0.0 {
                return Err(Error::Dataset(format!("row {row}: label must be a non-negative integer")));
            }
            x.push(feats);
            y.push(label as usize);
        }
        Ok(RawDataset { feature_names, x, y })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<RawDataset> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
        RawDataset::from_csv_reader(f)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = self.feature_names.clone();
        header.push("label".into());
        w.write_record(&header).map_err(|e| Error::Dataset(e.to_string()))?;
        for (row, label) in self.x.iter().zip(&self.y) {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
            rec.push(label.to_string());
            w.write_record(&rec).map_err(|e| Error::Dataset(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Dataset(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Dataset(e.to_string()))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }

    fn subset(&self, idx: &[usize]) -> RawDataset {
        RawDataset {
            feature_names: self.feature_names.clone(),
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Seeded stratified split; `train_fraction` of each class goes to the
    /// first set (rounded down, at least one row).
    pub fn split_stratified(&self, train_fraction: f64, seed: u64) -> (RawDataset, RawDataset) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for c in 0..self.n_classes() {
            let mut idx: Vec<usize> = (0..self.len()).filter(|&i| self.y[i] == c).collect();
            idx.shuffle(&mut rng);
            let cut = ((idx.len() as f64 * train_fraction) as usize).clamp(1.min(idx.len()), idx.len());
            train.extend_from_slice(&idx[..cut]);
            test.extend_from_slice(&idx[cut..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        (self.subset(&train), self.subset(&test))
    }
}

/// Per-feature mean and standard deviation, fitted on one set and applied
/// to others so test data never leaks into the scaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(ds: &RawDataset) -> Standardizer {
        let n = ds.len().max(1) as f64;
        let d = ds.n_features();
        let mut mean = vec![0.0; d];
        for row in &ds.x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; d];
        for row in &ds.x {
            for ((s, v), m) in std.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let std = std.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, ds: &RawDataset) -> RawDataset {
        let x = ds
            .x
            .iter()
            .map(|row| row.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect())
            .collect();
        RawDataset { feature_names: ds.feature_names.clone(), x, y: ds.y.clone() }
    }
}

/// Parameters of the synthetic linearly separable (up to noise) binary set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub samples: usize,
    pub features: usize,
    /// Standard deviation of the Gaussian noise added to the decision value.
    pub noise: f64,
    /// Features are uniform on `[-range, range]`.
    pub range: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { samples: 200, features: 2, noise: 0.3, range: 3.0, seed: 1 }
    }
}

/// Draws a random unit-norm hyperplane through the origin and labels
/// uniform points by the side they fall on after Gaussian label noise.
pub fn gen_linear(cfg: &GenConfig) -> Result<RawDataset> {
    if cfg.features == 0 || cfg.samples == 0 || !(cfg.noise >= 0.0) || !(cfg.range > 0.0) {
        return Err(Error::InvalidParams(format!("invalid generator config {cfg:?}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut w: Vec<f64> = (0..cfg.features).map(|_| std.sample(&mut rng)).collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    w.iter_mut().for_each(|v| *v /= norm);
    let mut x = Vec::with_capacity(cfg.samples);
    let mut y = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let row: Vec<f64> = (0..cfg.features).map(|_| rng.random_range(-cfg.range..=cfg.range)).collect();
        let score: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + cfg.noise * std.sample(&mut rng);
        x.push(row);
        y.push((score > 0.0) as usize);
    }
    let feature_names = (0..cfg.features).map(|i| format!("x{i}")).collect();
    Ok(RawDataset { feature_names, x, y })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrepMode {
    /// Nearest integer.
    Rounding,
    /// `round(x * q)`.
    Zoom,
}

/// Integer features ready for encryption.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Vec<Vec<i64>>,
    pub y: Vec<usize>,
    pub n_classes: usize,
    pub mode: PrepMode,
    pub q: i64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }
}

pub fn preprocess_value(v: f64, mode: PrepMode, q: i64) -> i64 {
    match mode {
        PrepMode::Rounding => v.round() as i64,
        PrepMode::Zoom => (v * q as f64).round() as i64,
    }
}

/// Rounds or zooms every feature and checks that it fits `width` bits.
pub fn preprocess(raw: &RawDataset, mode: PrepMode, q: i64, width: usize) -> Result<Dataset> {
    let mut x = Vec::with_capacity(raw.len());
    for row in &raw.x {
        let mut out = Vec::with_capacity(row.len());
        for &v in row {
            if !v.is_finite() {
                return Err(Error::Dataset("non-finite feature".into()));
            }
            let p = preprocess_value(v, mode, q);
            if !fits(p, width) {
                return Err(Error::Overflow { value: p, width });
            }
            out.push(p);
        }
        x.push(out);
    }
    Ok(Dataset { x, y: raw.y.clone(), n_classes: raw.n_classes(), mode, q })
}
