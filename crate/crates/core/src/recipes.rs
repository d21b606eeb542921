//! The two reference experiments with their fixed hyperparameters: logistic
//! regression on the seeded synthetic set and the one-hidden-layer network
//! on Iris. The CLI, the benches and the acceptance tests all run these.

use serde::{Deserialize, Serialize};

use crate::activation::ActKind;
use crate::data::{gen_linear, preprocess, Dataset, GenConfig, PrepMode, RawDataset, Standardizer};
use crate::error::Result;
use crate::train::{
    predict_lr_float, predict_lr_int, predict_nn_float, predict_nn_int, train_lr_float, train_lr_int, train_nn_float,
    train_nn_int, FloatNnRates, ScaleConfig,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrRecipe {
    pub data: GenConfig,
    pub scale: ScaleConfig,
    pub iters: usize,
    /// Real learning rate and iteration count of the float baseline.
    pub float_alpha: f64,
    pub float_iters: usize,
}

impl Default for LrRecipe {
    fn default() -> Self {
        LrRecipe {
            data: GenConfig::default(),
            scale: ScaleConfig { alpha: 4, ..ScaleConfig::default() },
            iters: 20,
            float_alpha: 0.5,
            float_iters: 200,
        }
    }
}

/// Training-set accuracies of the logistic-regression experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrAccuracies {
    pub float_sigmoid: f64,
    pub taylor7: f64,
    pub g: f64,
    pub taylor3: f64,
}

impl LrRecipe {
    pub fn raw(&self) -> Result<RawDataset> {
        gen_linear(&self.data)
    }

    pub fn dataset(&self, raw: &RawDataset) -> Result<Dataset> {
        preprocess(raw, PrepMode::Rounding, self.scale.q, self.scale.word)
    }

    pub fn int_accuracy(&self, ds: &Dataset, act: ActKind) -> Result<f64> {
        let (model, _) = train_lr_int(ds, &self.scale, act, self.iters, false)?;
        predict_lr_int(&model, ds, &self.scale)
    }

    pub fn float_accuracy(&self, raw: &RawDataset, act: ActKind) -> Result<f64> {
        let (model, _) = train_lr_float(raw, act, self.float_alpha, self.float_iters)?;
        Ok(predict_lr_float(&model, raw))
    }

    pub fn run(&self) -> Result<LrAccuracies> {
        let raw = self.raw()?;
        let ds = self.dataset(&raw)?;
        Ok(LrAccuracies {
            float_sigmoid: self.float_accuracy(&raw, ActKind::Sigmoid)?,
            taylor7: self.int_accuracy(&ds, ActKind::Taylor7)?,
            g: self.int_accuracy(&ds, ActKind::G)?,
            taylor3: self.int_accuracy(&ds, ActKind::Taylor3)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnRecipe {
    pub scale: ScaleConfig,
    pub hidden: usize,
    pub epochs: usize,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub init_seed: u64,
    /// Rates of the float Taylor model. At the integer rates the polynomial
    /// leaves its stable range and diverges, so it trains slower with
    /// momentum. The float sigmoid model uses the integer rates divided by q.
    pub taylor_float_rates: FloatNnRates,
    pub float_epochs: usize,
}

impl Default for NnRecipe {
    fn default() -> Self {
        NnRecipe {
            scale: ScaleConfig { alpha1: 8, alpha2: 8, beta1: 0, beta2: 0, ..ScaleConfig::default() },
            hidden: 8,
            epochs: 100,
            train_fraction: 0.5,
            split_seed: 1,
            init_seed: 7,
            taylor_float_rates: FloatNnRates { alpha1: 0.02, alpha2: 0.02, beta1: 0.9, beta2: 0.9 },
            float_epochs: 100,
        }
    }
}

/// A split standardized with training statistics, in both real and
/// zoomed-integer form.
#[derive(Clone, Debug)]
pub struct NnData {
    pub train: RawDataset,
    pub test: RawDataset,
    pub train_int: Dataset,
    pub test_int: Dataset,
}

/// Test-set accuracies of the network experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnAccuracies {
    pub float_sigmoid: f64,
    pub float_taylor7: f64,
    pub taylor7: f64,
    pub g: f64,
    pub taylor3: f64,
}

impl NnRecipe {
    pub fn prepare(&self, raw: &RawDataset) -> Result<NnData> {
        let (train, test) = raw.split_stratified(self.train_fraction, self.split_seed);
        let st = Standardizer::fit(&train);
        let (train, test) = (st.apply(&train), st.apply(&test));
        let train_int = preprocess(&train, PrepMode::Zoom, self.scale.q, self.scale.word)?;
        let test_int = preprocess(&test, PrepMode::Zoom, self.scale.q, self.scale.word)?;
        Ok(NnData { train, test, train_int, test_int })
    }

    pub fn int_accuracy(&self, d: &NnData, act: ActKind) -> Result<f64> {
        let (model, _) = train_nn_int(&d.train_int, &self.scale, act, self.hidden, self.epochs, self.init_seed, false)?;
        predict_nn_int(&model, &d.test_int, &self.scale)
    }

    pub fn float_rates(&self, act: ActKind) -> FloatNnRates {
        match act {
            ActKind::Taylor3 | ActKind::Taylor7 => self.taylor_float_rates,
            ActKind::G | ActKind::Sigmoid => FloatNnRates::from_scale(&self.scale),
        }
    }

    pub fn float_accuracy(&self, d: &NnData, act: ActKind) -> Result<f64> {
        let rates = self.float_rates(act);
        let model = train_nn_float(&d.train, act, &rates, self.hidden, self.float_epochs, self.scale.q, self.init_seed)?;
        Ok(predict_nn_float(&model, &d.test))
    }

    pub fn run(&self, raw: &RawDataset) -> Result<NnAccuracies> {
        let d = self.prepare(raw)?;
        Ok(NnAccuracies {
            float_sigmoid: self.float_accuracy(&d, ActKind::Sigmoid)?,
            float_taylor7: self.float_accuracy(&d, ActKind::Taylor7)?,
            taylor7: self.int_accuracy(&d, ActKind::Taylor7)?,
            g: self.int_accuracy(&d, ActKind::G)?,
            taylor3: self.int_accuracy(&d, ActKind::Taylor3)?,
        })
    }
}
