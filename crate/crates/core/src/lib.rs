//! A restricted Boltzmann machine trained on simulated EPR data, viewed as a
//! local hidden-variable model.
//!
//! The four visible units hold the two detector settings and the two
//! measurement outcomes; the hidden layer is the hidden variable `λ`. Because
//! the machine is tiny, every quantity of interest (partition function,
//! correlations, locality residuals, setting dependence of `λ`) can be
//! computed exactly by enumeration, which the crate uses both as a training
//! diagnostic and as a test oracle for the stochastic code paths.
//!
//! - [`rbm`]: parameters, energy, conditionals, Gibbs dynamics
//! - [`exact`]: enumeration, locality and measurement-independence checks
//! - [`epr`]: singlet-state data generation and the dataset format
//! - [`trainer`]: persistent contrastive divergence and the exact gradient
//! - [`bell`]: correlation reports, CHSH, comparison tables

pub mod bell;
pub mod epr;
pub mod error;
pub mod exact;
pub mod fixtures;
pub mod model_file;
pub mod rbm;
pub mod sampling;
pub mod seed;
pub mod trainer;

pub use bell::{
    chsh, comparison_table, model_correlations_exact, theory_correlations, ComparisonTable,
    CorrelationReport, Source,
};
pub use epr::{
    decode_visible, empirical_correlations, encode_trial, generate_dataset,
    singlet_joint_probability, DetectorAngles, EprDataset, EprTrial, Outcome, Setting,
};
pub use error::{Error, Result};
pub use exact::{
    conditional_outcomes, enumerate, locality_check, measurement_independence_check,
    ExactDistribution, HiddenState, MeasurementIndependenceReport,
};
pub use model_file::ModelFile;
pub use rbm::{
    energy, gibbs_sweep, hidden_activation_probs, sigmoid, visible_activation_probs, Configuration,
    RbmModel,
};
pub use trainer::{
    data_expectation, exact_gradient, model_expectation_exact, model_expectation_pcd, pcd_init,
    train, Moments, PersistentChains, TrainError, TrainerConfig, TrainingTrace,
};
