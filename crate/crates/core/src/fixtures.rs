//! A trained 4×4 EPR machine, shipped as a model file and used as a regression reference.

use crate::model_file::ModelFile;
use crate::rbm::RbmModel;

pub const REFERENCE_MODEL_JSON: &str = include_str!("../fixtures/reference_model.json");

/// The trained weights and biases reported for the EPR machine, to three
/// decimals.
pub fn reference_model() -> RbmModel {
    ModelFile::from_json(REFERENCE_MODEL_JSON)
        .and_then(|f| f.model())
        .expect("bundled fixture is valid")
}
