//! The replayable run configuration.
//!
//! Values are layered: per-command defaults, then the `--config` file, then
//! `MKTORUS_SEED`, then explicit flags. A seed from the environment or a
//! flag also seeds the synthetic data generator.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use mktorus::recipes::{LrRecipe, NnRecipe};
use mktorus::{ActKind, BackendKind, Combiner, GenConfig, Mode, NoiseParams, ScaleConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SEED_ENV: &str = "MKTORUS_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// TLWE dimension per party.
    pub n: usize,
    /// Number of parties.
    pub k: usize,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub params: Params,
    pub scale: ScaleConfig,
    pub activation: ActKind,
    pub combiner: Combiner,
    pub backend: BackendKind,
    pub mode: Mode,
    /// CSV input. Without one, logistic regression uses the generator and
    /// the network uses the bundled Iris set.
    pub dataset: Option<PathBuf>,
    pub generator: GenConfig,
    /// Report file that records are appended to.
    pub output: Option<PathBuf>,
    /// Iterations for logistic regression, epochs for the network.
    pub iters: usize,
    /// Learning rate of the float logistic-regression baseline.
    pub float_rate: f64,
    pub hidden: usize,
    pub train_fraction: f64,
    pub init_seed: u64,
    pub bits: usize,
    pub groups: usize,
    /// Word width for the activation benchmark.
    pub width: usize,
    /// Random inputs per activation benchmark.
    pub samples: usize,
}

pub const COMMANDS: [&str; 9] =
    ["keygen", "encrypt", "decrypt", "train-lr", "train-nn", "distdec-demo", "bench-activation", "gen-data", "report"];

impl RunConfig {
    pub fn for_command(command: &str) -> Self {
        let lr = LrRecipe::default();
        let nn = NnRecipe::default();
        let mut c = RunConfig {
            command: command.into(),
            params: Params { n: 560, k: 2, alpha: NoiseParams::DEFAULT_ALPHA, seed: 1 },
            scale: ScaleConfig::default(),
            activation: ActKind::G,
            combiner: Combiner::Or,
            backend: BackendKind::Clear,
            mode: Mode::Int,
            dataset: None,
            generator: GenConfig::default(),
            output: None,
            iters: 1,
            float_rate: lr.float_alpha,
            hidden: nn.hidden,
            train_fraction: nn.train_fraction,
            init_seed: nn.init_seed,
            bits: 1000,
            groups: 1,
            width: 16,
            samples: 4,
        };
        match command {
            "train-lr" => {
                c.scale = lr.scale;
                c.iters = lr.iters;
            }
            "train-nn" => {
                c.scale = nn.scale;
                c.iters = nn.epochs;
            }
            _ => {}
        }
        c
    }

    /// Defaults for `command` overlaid with the JSON object in `path`.
    /// Fields absent from the file keep their defaults.
    pub fn load(path: &Path, command: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let file: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(c) = file.get("command").and_then(Value::as_str) {
            ensure!(c == command, "config {} is for `{c}`, not `{command}`", path.display());
        }
        let mut base = serde_json::to_value(Self::for_command(command))?;
        merge(&mut base, file);
        serde_json::from_value(base).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn apply_seed_env(&mut self) -> Result<()> {
        self.apply_seed_override(std::env::var(SEED_ENV).ok().as_deref())
    }

    fn apply_seed_override(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            let seed = v.trim().parse().with_context(|| format!("{SEED_ENV}={v:?} is not a u64"))?;
            self.params.seed = seed;
            self.generator.seed = seed;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(COMMANDS.contains(&self.command.as_str()), "unknown command {:?}", self.command);
        let p = &self.params;
        ensure!(p.n >= 1, "params.n must be at least 1");
        ensure!(p.k >= 1, "params.k (parties) must be at least 1");
        ensure!(p.alpha.is_finite() && p.alpha >= 0.0, "params.alpha must be finite and non-negative");
        match self.command.as_str() {
            "train-lr" | "train-nn" => {
                self.scale.validate().context("invalid scale settings")?;
                ensure!(self.iters >= 1, "iters must be at least 1");
                if self.mode != Mode::Float && self.activation == ActKind::Sigmoid {
                    bail!("sigmoid has no integer circuit; use --mode float or pick g, taylor3 or taylor7");
                }
                if self.command == "train-nn" {
                    ensure!(self.hidden >= 1, "hidden must be at least 1");
                    ensure!(
                        self.train_fraction > 0.0 && self.train_fraction < 1.0,
                        "train_fraction must lie strictly between 0 and 1"
                    );
                }
            }
            "distdec-demo" => {
                ensure!(self.bits >= 1 && self.groups >= 1, "bits and groups must be at least 1");
            }
            "bench-activation" => {
                ensure!(self.activation != ActKind::Sigmoid, "sigmoid has no circuit to benchmark");
                ensure!((6..=40).contains(&self.width), "width must lie in 6..=40, got {}", self.width);
                ensure!(self.samples >= 1, "samples must be at least 1");
            }
            _ => {}
        }
        Ok(())
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_json() {
        for cmd in COMMANDS {
            let c = RunConfig::for_command(cmd);
            let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
            assert_eq!(back, c);
            c.validate().unwrap();
        }
    }

    #[test]
    fn partial_file_overlays_defaults() {
        let dir = std::env::temp_dir().join(format!("mktorus-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.json");
        std::fs::write(&path, r#"{"params": {"seed": 9}, "scale": {"q": 32}, "activation": "taylor3"}"#).unwrap();
        let c = RunConfig::load(&path, "train-lr").unwrap();
        assert_eq!(c.params.seed, 9);
        assert_eq!(c.params.k, 2);
        assert_eq!(c.scale.q, 32);
        assert_eq!(c.scale.alpha, LrRecipe::default().scale.alpha);
        assert_eq!(c.activation, ActKind::Taylor3);

        std::fs::write(&path, r#"{"command": "train-nn"}"#).unwrap();
        assert!(RunConfig::load(&path, "train-lr").is_err());
        std::fs::write(&path, r#"{"nonsense": 1}"#).unwrap();
        assert!(RunConfig::load(&path, "train-lr").is_err());
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn seed_override() {
        let mut c = RunConfig::for_command("train-lr");
        c.apply_seed_override(None).unwrap();
        assert_eq!((c.params.seed, c.generator.seed), (1, 1));
        c.apply_seed_override(Some(" 42\n")).unwrap();
        assert_eq!((c.params.seed, c.generator.seed), (42, 42));
        assert!(c.apply_seed_override(Some("x")).is_err());
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = RunConfig::for_command("train-lr");
        c.scale.q = 12;
        assert!(format!("{:#}", c.validate().unwrap_err()).contains("q"));
        let mut c = RunConfig::for_command("train-lr");
        c.activation = ActKind::Sigmoid;
        assert!(c.validate().unwrap_err().to_string().contains("sigmoid"));
        c.mode = Mode::Float;
        c.validate().unwrap();
    }
}
