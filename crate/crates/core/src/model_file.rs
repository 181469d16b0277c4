//! JSON model files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rbm::RbmModel;
use crate::trainer::TrainerConfig;

/// Meaning of each visible unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoding {
    pub v1: String,
    pub v2: String,
    pub v3: String,
    pub v4: String,
}

impl Default for Encoding {
    fn default() -> Self {
        Encoding {
            v1: "alpha".into(),
            v2: "beta".into(),
            v3: "x_alpha(+1↔1)".into(),
            v4: "x_beta(+1↔1)".into(),
        }
    }
}

/// On-disk form of a trained machine. Weights are stored as one row per
/// visible unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub m: usize,
    pub n: usize,
    pub visible_bias: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    pub encoding: Encoding,
    pub trainer: Option<TrainerConfig>,
    pub dataset_seed: Option<u64>,
}

impl ModelFile {
    pub fn new(
        model: &RbmModel,
        trainer: Option<TrainerConfig>,
        dataset_seed: Option<u64>,
    ) -> Self {
        ModelFile {
            m: model.n_visible(),
            n: model.n_hidden(),
            visible_bias: model.visible_bias().to_vec(),
            hidden_bias: model.hidden_bias().to_vec(),
            weights: model.weight_rows(),
            encoding: Encoding::default(),
            trainer,
            dataset_seed,
        }
    }

    pub fn model(&self) -> Result<RbmModel> {
        let model = RbmModel::from_rows(
            self.visible_bias.clone(),
            self.hidden_bias.clone(),
            &self.weights,
        )?;
        if model.n_visible() != self.m || model.n_hidden() != self.n {
            return Err(Error::Parse(format!(
                "model file declares m = {}, n = {} but parameters are {} x {}",
                self.m,
                self.n,
                model.n_visible(),
                model.n_hidden()
            )));
        }
        Ok(model)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(self.to_json()?.as_bytes())?;
        out.flush()?;
        Ok(())
    }
}
