//! Maximum-likelihood training with persistent contrastive divergence.
//!
//! The average log-likelihood gradient with respect to `wᵢⱼ` is
//! `⟨vᵢ hⱼ⟩_data − ⟨vᵢ hⱼ⟩_model`, and likewise `⟨vᵢ⟩` and `⟨hⱼ⟩` for the
//! biases. The data term is computed exactly per minibatch using
//! `P(hⱼ = 1 | v)` in place of sampled hiddens. The model term comes from a
//! set of persistent Gibbs chains that are advanced `k` sweeps per update and
//! never reset. For small machines the model term can also be computed by
//! enumeration, which gives the exact gradient used as a test oracle.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bell::correlations_from_distribution;
use crate::epr::EprDataset;
use crate::error::{Error, Result};
use crate::exact::{bits_to_index, enumerate, index_to_bits};
use crate::rbm::{sigmoid, softplus, sweep_unchecked, Configuration, RbmModel};
use crate::seed::{stream_rng, Rng as StreamRng, Stream};

/// Hyperparameters for [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub n_epochs: usize,
    pub batch_size: usize,
    pub n_persistent_chains: usize,
    pub gibbs_steps_per_update: usize,
    pub seed: u64,
    pub weight_init_scale: f64,
    /// Multiplier applied to the learning rate after every epoch.
    pub learning_rate_decay: f64,
    #[serde(default = "default_hidden")]
    pub n_hidden: usize,
}

fn default_hidden() -> usize {
    4
}

impl TrainerConfig {
    /// Default hyperparameters with an explicit master seed.
    pub fn new(seed: u64) -> Self {
        TrainerConfig {
            learning_rate: 0.2,
            n_epochs: 200,
            batch_size: 100,
            n_persistent_chains: 100,
            gibbs_steps_per_update: 1,
            seed,
            weight_init_scale: 0.01,
            learning_rate_decay: 0.98,
            n_hidden: default_hidden(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            ));
        }
        if !(self.learning_rate_decay > 0.0 && self.learning_rate_decay <= 1.0) {
            return fail(format!(
                "learning_rate_decay must lie in (0, 1], got {}",
                self.learning_rate_decay
            ));
        }
        if !(self.weight_init_scale >= 0.0 && self.weight_init_scale.is_finite()) {
            return fail(format!(
                "weight_init_scale must be finite and >= 0, got {}",
                self.weight_init_scale
            ));
        }
        for (name, value) in [
            ("batch_size", self.batch_size),
            ("n_persistent_chains", self.n_persistent_chains),
            ("gibbs_steps_per_update", self.gibbs_steps_per_update),
            ("n_hidden", self.n_hidden),
        ] {
            if value == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        Ok(())
    }
}

/// First and second moments `⟨vᵢ hⱼ⟩`, `⟨vᵢ⟩`, `⟨hⱼ⟩`. Differences of
/// moments are log-likelihood gradients, so the same type carries both.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    /// Row-major `m × n`.
    pub pairwise: Vec<f64>,
    pub visible: Vec<f64>,
    pub hidden: Vec<f64>,
}

impl Moments {
    pub fn zeros(m: usize, n: usize) -> Self {
        Moments {
            pairwise: vec![0.0; m * n],
            visible: vec![0.0; m],
            hidden: vec![0.0; n],
        }
    }

    pub fn pair(&self, i: usize, j: usize) -> f64 {
        self.pairwise[i * self.hidden.len() + j]
    }

    /// `self − other`.
    pub fn minus(&self, other: &Moments) -> Moments {
        let sub = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect();
        Moments {
            pairwise: sub(&self.pairwise, &other.pairwise),
            visible: sub(&self.visible, &other.visible),
            hidden: sub(&self.hidden, &other.hidden),
        }
    }

    fn iter(&self) -> impl Iterator<Item = &f64> {
        self.pairwise
            .iter()
            .chain(&self.visible)
            .chain(&self.hidden)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    /// Euclidean norm over every entry.
    pub fn norm(&self) -> f64 {
        self.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn scale(&mut self, factor: f64) {
        self.pairwise
            .iter_mut()
            .chain(&mut self.visible)
            .chain(&mut self.hidden)
            .for_each(|x| *x *= factor);
    }

    fn add_scaled(&mut self, other: &Moments, factor: f64) {
        for (a, b) in self.pairwise.iter_mut().zip(&other.pairwise) {
            *a += factor * b;
        }
        for (a, b) in self.visible.iter_mut().zip(&other.visible) {
            *a += factor * b;
        }
        for (a, b) in self.hidden.iter_mut().zip(&other.hidden) {
            *a += factor * b;
        }
    }

    /// Accumulates `v` and `P(h = 1 | v)`.
    fn accumulate(&mut self, visible: &[u8], hidden_probs: &[f64]) {
        let n = self.hidden.len();
        for (i, &v) in visible.iter().enumerate() {
            if v == 1 {
                self.visible[i] += 1.0;
                for (a, p) in self.pairwise[i * n..(i + 1) * n]
                    .iter_mut()
                    .zip(hidden_probs)
                {
                    *a += p;
                }
            }
        }
        for (a, p) in self.hidden.iter_mut().zip(hidden_probs) {
            *a += p;
        }
    }
}

/// Data-phase moments of a batch, with each hidden unit replaced by its
/// conditional probability `P(hⱼ = 1 | v)`.
pub fn data_expectation<V: AsRef<[u8]>>(model: &RbmModel, batch: &[V]) -> Result<Moments> {
    if batch.is_empty() {
        return Err(Error::Empty("data expectation needs a non-empty batch"));
    }
    let (m, n) = (model.n_visible(), model.n_hidden());
    let mut moments = Moments::zeros(m, n);
    let mut probs = vec![0.0; n];
    for v in batch {
        let v = v.as_ref();
        model.check_visible(v)?;
        model.hidden_input_into(v, &mut probs);
        probs.iter_mut().for_each(|x| *x = sigmoid(*x));
        moments.accumulate(v, &probs);
    }
    moments.scale(1.0 / batch.len() as f64);
    Ok(moments)
}

/// Model moments computed from the exact joint distribution.
pub fn model_expectation_exact(model: &RbmModel) -> Result<Moments> {
    let dist = enumerate(model)?;
    let (m, n) = (model.n_visible(), model.n_hidden());
    let mut moments = Moments::zeros(m, n);
    let hidden_bits: Vec<Vec<u8>> = (0..1usize << n).map(|k| index_to_bits(k, n)).collect();
    for (vi, row) in dist.joint().chunks(1 << n).enumerate() {
        let v = index_to_bits(vi, m);
        for (h, &p) in hidden_bits.iter().zip(row) {
            for (i, &vb) in v.iter().enumerate() {
                if vb == 1 {
                    moments.visible[i] += p;
                    for (j, &hb) in h.iter().enumerate() {
                        if hb == 1 {
                            moments.pairwise[i * n + j] += p;
                        }
                    }
                }
            }
            for (j, &hb) in h.iter().enumerate() {
                if hb == 1 {
                    moments.hidden[j] += p;
                }
            }
        }
    }
    Ok(moments)
}

/// Negative-phase Gibbs chains that persist across parameter updates.
#[derive(Debug, Clone, PartialEq)]
pub struct PersistentChains {
    pub states: Vec<Configuration>,
}

/// Starts `n_chains` chains from uniformly random visibles, with hiddens drawn
/// from `P(h | v)`.
pub fn pcd_init<R: Rng + ?Sized>(
    model: &RbmModel,
    n_chains: usize,
    rng: &mut R,
) -> PersistentChains {
    let (m, n) = (model.n_visible(), model.n_hidden());
    let mut probs = vec![0.0; n];
    let states = (0..n_chains)
        .map(|_| {
            let visible: Vec<u8> = (0..m).map(|_| rng.random_bool(0.5) as u8).collect();
            model.hidden_input_into(&visible, &mut probs);
            let hidden = probs
                .iter()
                .map(|&x| (rng.random::<f64>() < sigmoid(x)) as u8)
                .collect();
            Configuration { visible, hidden }
        })
        .collect();
    PersistentChains { states }
}

/// Advances every chain by `k` block Gibbs sweeps and returns the model
/// moments estimated at the final states.
pub fn model_expectation_pcd<R: Rng + ?Sized>(
    model: &RbmModel,
    chains: &mut PersistentChains,
    k: usize,
    rng: &mut R,
) -> Result<Moments> {
    if chains.states.is_empty() {
        return Err(Error::Empty("persistent chain set is empty"));
    }
    let (m, n) = (model.n_visible(), model.n_hidden());
    for state in &chains.states {
        model.check_visible(&state.visible)?;
        model.check_hidden(&state.hidden)?;
    }
    let mut scratch = vec![0.0; m.max(n)];
    let mut moments = Moments::zeros(m, n);
    let mut probs = vec![0.0; n];
    for state in &mut chains.states {
        for _ in 0..k {
            sweep_unchecked(model, state, &mut scratch, rng);
        }
        model.hidden_input_into(&state.visible, &mut probs);
        probs.iter_mut().for_each(|x| *x = sigmoid(*x));
        moments.accumulate(&state.visible, &probs);
    }
    moments.scale(1.0 / chains.states.len() as f64);
    Ok(moments)
}

/// Exact gradient of the average log-likelihood of `data`.
pub fn exact_gradient<V: AsRef<[u8]>>(model: &RbmModel, data: &[V]) -> Result<Moments> {
    Ok(data_expectation(model, data)?.minus(&model_expectation_exact(model)?))
}

/// `−F(v) = Σᵢ cᵢ vᵢ + Σⱼ softplus(dⱼ + Σᵢ vᵢ wᵢⱼ)`, so that
/// `log p(v) = −F(v) − log Z`.
pub fn negative_free_energy(model: &RbmModel, visible: &[u8]) -> Result<f64> {
    model.check_visible(visible)?;
    let mut input = vec![0.0; model.n_hidden()];
    model.hidden_input_into(visible, &mut input);
    let bias: f64 = model
        .visible_bias
        .iter()
        .zip(visible)
        .filter(|(_, &v)| v == 1)
        .map(|(c, _)| c)
        .sum();
    Ok(bias + input.into_iter().map(softplus).sum::<f64>())
}

/// Average `log p(v)` over `data`, with `log Z` from exact enumeration.
pub fn average_log_likelihood<V: AsRef<[u8]>>(model: &RbmModel, data: &[V]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("log-likelihood needs data"));
    }
    let m = model.n_visible();
    let mut counts = vec![0u64; 1 << m];
    for v in data {
        let v = v.as_ref();
        model.check_visible(v)?;
        counts[bits_to_index(v)] += 1;
    }
    let log_z = enumerate(model)?.log_partition();
    let mut total = 0.0;
    for (k, &c) in counts.iter().enumerate() {
        if c > 0 {
            total += c as f64 * negative_free_energy(model, &index_to_bits(k, m))?;
        }
    }
    Ok(total / data.len() as f64 - log_z)
}

/// One row of the training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Exact average log-likelihood of the training data after the epoch.
    pub log_likelihood: f64,
    /// Exact CHSH statistic; present for the four-visible EPR layout.
    pub chsh: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingTrace {
    /// CSV with columns `epoch,log_likelihood,chsh`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["epoch", "log_likelihood", "chsh"])?;
        for r in &self.epochs {
            out.write_record([
                r.epoch.to_string(),
                format!("{:.12}", r.log_likelihood),
                r.chsh.map(|s| format!("{s:.12}")).unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Invalid(#[from] Error),

    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Diverged {
        epoch: usize,
        batch: usize,
        detail: String,
        /// Records of the epochs completed before the failure.
        trace: TrainingTrace,
    },
}

/// How the model term of the gradient is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativePhase {
    /// Persistent chains advanced `gibbs_steps_per_update` sweeps per update.
    Persistent,
    /// Chains restarted at the batch data for every update (CD-k).
    Contrastive,
    /// Exact enumeration; deterministic.
    Exact,
}

/// Initial parameters: zero biases and weights drawn from
/// `N(0, weight_init_scale²)`. Each hidden unit's column comes from its own
/// random stream, so reordering hidden units reorders the draws with them.
pub fn init_model(n_visible: usize, config: &TrainerConfig) -> Result<RbmModel> {
    config.validate()?;
    let n = config.n_hidden;
    let normal = Normal::new(0.0, config.weight_init_scale)
        .map_err(|e| Error::InvalidConfig(format!("weight_init_scale: {e}")))?;
    let mut model = RbmModel::zeros(n_visible, n);
    for j in 0..n {
        let mut rng = stream_rng(config.seed, Stream::HiddenInit(j));
        for i in 0..n_visible {
            model.set_weight(i, j, normal.sample(&mut rng));
        }
    }
    Ok(model)
}

/// Trains a 4-visible machine on an EPR dataset with persistent contrastive
/// divergence.
pub fn train(
    dataset: &EprDataset,
    config: &TrainerConfig,
) -> std::result::Result<(RbmModel, TrainingTrace), TrainError> {
    let data = dataset.encoded();
    let init = init_model(4, config)?;
    train_from(init, &data, config, NegativePhase::Persistent)
}

/// Runs the training loop from a given starting model.
pub fn train_from<V: AsRef<[u8]>>(
    init: RbmModel,
    data: &[V],
    config: &TrainerConfig,
    phase: NegativePhase,
) -> std::result::Result<(RbmModel, TrainingTrace), TrainError> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training data is empty").into());
    }
    for v in data {
        init.check_visible(v.as_ref())?;
    }
    init.check_finite()?;
    let mut model = init;
    let mut chain_rng: StreamRng = stream_rng(config.seed, Stream::Chains);
    let mut shuffle_rng: StreamRng = stream_rng(config.seed, Stream::Shuffle);
    let mut chains = pcd_init(&model, config.n_persistent_chains, &mut chain_rng);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = TrainingTrace::default();
    let mut rate = config.learning_rate;
    let mut batch: Vec<&[u8]> = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.n_epochs {
        order.shuffle(&mut shuffle_rng);
        for (b, indices) in order.chunks(config.batch_size).enumerate() {
            batch.clear();
            batch.extend(indices.iter().map(|&k| data[k].as_ref()));
            let positive = data_expectation(&model, &batch)?;
            let negative = match phase {
                NegativePhase::Persistent => model_expectation_pcd(
                    &model,
                    &mut chains,
                    config.gibbs_steps_per_update,
                    &mut chain_rng,
                )?,
                NegativePhase::Contrastive => {
                    let mut fresh = PersistentChains {
                        states: batch
                            .iter()
                            .map(|v| Configuration::zeros(v.len(), model.n_hidden()))
                            .zip(&batch)
                            .map(|(mut c, v)| {
                                c.visible.copy_from_slice(v);
                                c
                            })
                            .collect(),
                    };
                    model_expectation_pcd(
                        &model,
                        &mut fresh,
                        config.gibbs_steps_per_update,
                        &mut chain_rng,
                    )?
                }
                NegativePhase::Exact => model_expectation_exact(&model)?,
            };
            apply_update(&mut model, &positive.minus(&negative), rate);
            if let Err(e) = model.check_finite() {
                return Err(diverged(epoch, b + 1, e, &trace));
            }
        }
        let record =
            epoch_record(&model, data, epoch).map_err(|e| diverged(epoch, 0, e, &trace))?;
        trace.epochs.push(record);
        rate *= config.learning_rate_decay;
    }
    Ok((model, trace))
}

fn diverged(epoch: usize, batch: usize, cause: Error, trace: &TrainingTrace) -> TrainError {
    TrainError::Diverged {
        epoch,
        batch,
        detail: cause.to_string(),
        trace: trace.clone(),
    }
}

fn epoch_record<V: AsRef<[u8]>>(model: &RbmModel, data: &[V], epoch: usize) -> Result<EpochRecord> {
    let log_likelihood = average_log_likelihood(model, data)?;
    if !log_likelihood.is_finite() {
        return Err(Error::InvalidModel(format!(
            "log-likelihood is {log_likelihood}"
        )));
    }
    let chsh = if model.n_visible() == 4 {
        Some(correlations_from_distribution(&enumerate(model)?)?.s)
    } else {
        None
    };
    Ok(EpochRecord {
        epoch,
        log_likelihood,
        chsh,
    })
}

/// Gradient ascent step: every parameter moves by `rate` times its gradient.
pub fn apply_update(model: &mut RbmModel, gradient: &Moments, rate: f64) {
    let mut params = Moments {
        pairwise: std::mem::take(&mut model.weights),
        visible: std::mem::take(&mut model.visible_bias),
        hidden: std::mem::take(&mut model.hidden_bias),
    };
    params.add_scaled(gradient, rate);
    model.weights = params.pairwise;
    model.visible_bias = params.visible;
    model.hidden_bias = params.hidden;
}
