//! Restricted Boltzmann machine parameterization and its local dynamics.
//!
//! The energy of a joint configuration is
//!
//! ```text
//! E(v, h) = -( Σᵢ cᵢ vᵢ + Σⱼ dⱼ hⱼ + Σᵢⱼ wᵢⱼ vᵢ hⱼ )
//! ```
//!
//! with `c` the visible biases, `d` the hidden biases and `w` the `m × n`
//! weight matrix. Units are binary with values 0 and 1, and the temperature is
//! fixed at `kT = 1`. Because the graph is bipartite, each layer is
//! conditionally independent given the other, so the conditionals below are
//! products of per-unit sigmoids.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights and biases of an `m`-visible, `n`-hidden RBM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct RbmModel {
    pub(crate) visible_bias: Vec<f64>,
    pub(crate) hidden_bias: Vec<f64>,
    /// Row-major, `weights[i * n + j] = w_ij`.
    pub(crate) weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    visible_bias: Vec<f64>,
    hidden_bias: Vec<f64>,
    weights: Vec<Vec<f64>>,
}

impl TryFrom<RawModel> for RbmModel {
    type Error = Error;
    fn try_from(raw: RawModel) -> Result<Self> {
        RbmModel::from_rows(raw.visible_bias, raw.hidden_bias, &raw.weights)
    }
}

impl From<RbmModel> for RawModel {
    fn from(model: RbmModel) -> Self {
        RawModel {
            weights: model.weight_rows(),
            visible_bias: model.visible_bias,
            hidden_bias: model.hidden_bias,
        }
    }
}

impl RbmModel {
    /// Builds a model from biases and a row-major `m × n` weight vector.
    pub fn new(visible_bias: Vec<f64>, hidden_bias: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let (m, n) = (visible_bias.len(), hidden_bias.len());
        if m == 0 || n == 0 {
            return Err(Error::InvalidModel(format!(
                "layers must be non-empty, got m = {m}, n = {n}"
            )));
        }
        if weights.len() != m * n {
            return Err(Error::DimensionMismatch {
                what: "weights",
                expected: m * n,
                actual: weights.len(),
            });
        }
        let model = RbmModel {
            visible_bias,
            hidden_bias,
            weights,
        };
        model.check_finite()?;
        Ok(model)
    }

    /// Builds a model from weight rows, one row per visible unit.
    pub fn from_rows(
        visible_bias: Vec<f64>,
        hidden_bias: Vec<f64>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        if rows.len() != visible_bias.len() {
            return Err(Error::DimensionMismatch {
                what: "weight rows",
                expected: visible_bias.len(),
                actual: rows.len(),
            });
        }
        let n = hidden_bias.len();
        let mut weights = Vec::with_capacity(rows.len() * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "weight row",
                    expected: n,
                    actual: row.len(),
                });
            }
            weights.extend_from_slice(row);
        }
        Self::new(visible_bias, hidden_bias, weights)
    }

    /// All parameters zero: every configuration equally likely.
    pub fn zeros(m: usize, n: usize) -> Self {
        RbmModel {
            visible_bias: vec![0.0; m],
            hidden_bias: vec![0.0; n],
            weights: vec![0.0; m * n],
        }
    }

    pub fn n_visible(&self) -> usize {
        self.visible_bias.len()
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden_bias.len()
    }

    pub fn visible_bias(&self) -> &[f64] {
        &self.visible_bias
    }

    pub fn hidden_bias(&self) -> &[f64] {
        &self.hidden_bias
    }

    /// Row-major weight matrix.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n_hidden() + j]
    }

    pub fn set_weight(&mut self, i: usize, j: usize, value: f64) {
        let n = self.n_hidden();
        self.weights[i * n + j] = value;
    }

    pub fn set_visible_bias(&mut self, i: usize, value: f64) {
        self.visible_bias[i] = value;
    }

    pub fn set_hidden_bias(&mut self, j: usize, value: f64) {
        self.hidden_bias[j] = value;
    }

    pub fn weight_rows(&self) -> Vec<Vec<f64>> {
        self.weights
            .chunks(self.n_hidden())
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// Copy of the model with hidden units reordered: unit `j` of the result is
    /// unit `perm[j]` of `self`.
    pub fn permute_hidden(&self, perm: &[usize]) -> Self {
        let (m, n) = (self.n_visible(), self.n_hidden());
        assert_eq!(perm.len(), n, "permutation length");
        let mut out = self.clone();
        for (j, &src) in perm.iter().enumerate() {
            out.hidden_bias[j] = self.hidden_bias[src];
            for i in 0..m {
                out.weights[i * n + j] = self.weight(i, src);
            }
        }
        out
    }

    /// Copy of the model with visible units reordered: unit `i` of the result
    /// is unit `perm[i]` of `self`.
    pub fn permute_visible(&self, perm: &[usize]) -> Self {
        let (m, n) = (self.n_visible(), self.n_hidden());
        assert_eq!(perm.len(), m, "permutation length");
        let mut out = self.clone();
        for (i, &src) in perm.iter().enumerate() {
            out.visible_bias[i] = self.visible_bias[src];
            out.weights[i * n..(i + 1) * n].copy_from_slice(&self.weights[src * n..(src + 1) * n]);
        }
        out
    }

    /// Fails if any parameter is NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        let bad = |name: &str, k: usize, x: f64| {
            Error::InvalidModel(format!("non-finite {name}[{k}] = {x}"))
        };
        if let Some((k, &x)) = self
            .visible_bias
            .iter()
            .enumerate()
            .find(|(_, x)| !x.is_finite())
        {
            return Err(bad("visible_bias", k, x));
        }
        if let Some((k, &x)) = self
            .hidden_bias
            .iter()
            .enumerate()
            .find(|(_, x)| !x.is_finite())
        {
            return Err(bad("hidden_bias", k, x));
        }
        if let Some((k, &x)) = self
            .weights
            .iter()
            .enumerate()
            .find(|(_, x)| !x.is_finite())
        {
            return Err(bad("weights", k, x));
        }
        Ok(())
    }

    pub(crate) fn check_visible(&self, visible: &[u8]) -> Result<()> {
        check_layer("visible", visible, self.n_visible())
    }

    pub(crate) fn check_hidden(&self, hidden: &[u8]) -> Result<()> {
        check_layer("hidden", hidden, self.n_hidden())
    }

    /// Hidden pre-activation `dⱼ + Σᵢ vᵢ wᵢⱼ`, written into `out`.
    pub(crate) fn hidden_input_into(&self, visible: &[u8], out: &mut [f64]) {
        let n = self.n_hidden();
        out.copy_from_slice(&self.hidden_bias);
        for (i, &v) in visible.iter().enumerate() {
            if v == 1 {
                for (o, w) in out.iter_mut().zip(&self.weights[i * n..(i + 1) * n]) {
                    *o += w;
                }
            }
        }
    }

    /// Visible pre-activation `cᵢ + Σⱼ hⱼ wᵢⱼ`, written into `out`.
    pub(crate) fn visible_input_into(&self, hidden: &[u8], out: &mut [f64]) {
        let n = self.n_hidden();
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.weights[i * n..(i + 1) * n];
            *o = self.visible_bias[i]
                + row
                    .iter()
                    .zip(hidden)
                    .filter(|(_, &h)| h == 1)
                    .map(|(w, _)| w)
                    .sum::<f64>();
        }
    }

    /// Energy without validating dimensions or bit values.
    pub(crate) fn energy_unchecked(&self, visible: &[u8], hidden: &[u8]) -> f64 {
        let n = self.n_hidden();
        let mut total = 0.0;
        for (i, &v) in visible.iter().enumerate() {
            if v == 1 {
                total += self.visible_bias[i];
                let row = &self.weights[i * n..(i + 1) * n];
                for (w, &h) in row.iter().zip(hidden) {
                    if h == 1 {
                        total += w;
                    }
                }
            }
        }
        for (d, &h) in self.hidden_bias.iter().zip(hidden) {
            if h == 1 {
                total += d;
            }
        }
        -total
    }
}

fn check_layer(what: &'static str, bits: &[u8], expected: usize) -> Result<()> {
    if bits.len() != expected {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            actual: bits.len(),
        });
    }
    if let Some(&value) = bits.iter().find(|&&b| b > 1) {
        return Err(Error::NotBinary { what, value });
    }
    Ok(())
}

/// A joint assignment of every visible and hidden unit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    pub visible: Vec<u8>,
    pub hidden: Vec<u8>,
}

impl Configuration {
    pub fn new(visible: Vec<u8>, hidden: Vec<u8>) -> Result<Self> {
        if let Some(&value) = visible.iter().find(|&&b| b > 1) {
            return Err(Error::NotBinary {
                what: "visible",
                value,
            });
        }
        if let Some(&value) = hidden.iter().find(|&&b| b > 1) {
            return Err(Error::NotBinary {
                what: "hidden",
                value,
            });
        }
        Ok(Configuration { visible, hidden })
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Configuration {
            visible: vec![0; m],
            hidden: vec![0; n],
        }
    }

    pub fn ones(m: usize, n: usize) -> Self {
        Configuration {
            visible: vec![1; m],
            hidden: vec![1; n],
        }
    }

    /// Draws every unit uniformly at random.
    pub fn random<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Self {
        Configuration {
            visible: (0..m).map(|_| rng.random_bool(0.5) as u8).collect(),
            hidden: (0..n).map(|_| rng.random_bool(0.5) as u8).collect(),
        }
    }
}

/// Energy `E(v, h)` of a configuration.
pub fn energy(model: &RbmModel, config: &Configuration) -> Result<f64> {
    model.check_visible(&config.visible)?;
    model.check_hidden(&config.hidden)?;
    Ok(model.energy_unchecked(&config.visible, &config.hidden))
}

/// Logistic function, evaluated without overflow for any finite input.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)`, stable for large `|x|`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `P(hⱼ = 1 | v)` for every hidden unit.
pub fn hidden_activation_probs(model: &RbmModel, visible: &[u8]) -> Result<Vec<f64>> {
    model.check_visible(visible)?;
    let mut out = vec![0.0; model.n_hidden()];
    model.hidden_input_into(visible, &mut out);
    out.iter_mut().for_each(|x| *x = sigmoid(*x));
    Ok(out)
}

/// `P(vᵢ = 1 | h)` for every visible unit.
pub fn visible_activation_probs(model: &RbmModel, hidden: &[u8]) -> Result<Vec<f64>> {
    model.check_hidden(hidden)?;
    let mut out = vec![0.0; model.n_visible()];
    model.visible_input_into(hidden, &mut out);
    out.iter_mut().for_each(|x| *x = sigmoid(*x));
    Ok(out)
}

/// One block Gibbs sweep: resample the whole hidden layer from the current
/// visibles, then the whole visible layer from the new hiddens.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    model: &RbmModel,
    config: &Configuration,
    rng: &mut R,
) -> Result<Configuration> {
    let mut next = config.clone();
    gibbs_sweep_in_place(model, &mut next, rng)?;
    Ok(next)
}

/// In-place variant of [`gibbs_sweep`].
pub fn gibbs_sweep_in_place<R: Rng + ?Sized>(
    model: &RbmModel,
    config: &mut Configuration,
    rng: &mut R,
) -> Result<()> {
    model.check_visible(&config.visible)?;
    model.check_hidden(&config.hidden)?;
    let mut scratch = vec![0.0; model.n_visible().max(model.n_hidden())];
    sweep_unchecked(model, config, &mut scratch, rng);
    Ok(())
}

/// Sweep without validation; `scratch` must hold at least `max(m, n)` values.
pub(crate) fn sweep_unchecked<R: Rng + ?Sized>(
    model: &RbmModel,
    config: &mut Configuration,
    scratch: &mut [f64],
    rng: &mut R,
) {
    let (m, n) = (model.n_visible(), model.n_hidden());
    let hin = &mut scratch[..n];
    model.hidden_input_into(&config.visible, hin);
    for (h, &x) in config.hidden.iter_mut().zip(hin.iter()) {
        *h = (rng.random::<f64>() < sigmoid(x)) as u8;
    }
    let vin = &mut scratch[..m];
    model.visible_input_into(&config.hidden, vin);
    for (v, &x) in config.visible.iter_mut().zip(vin.iter()) {
        *v = (rng.random::<f64>() < sigmoid(x)) as u8;
    }
}

/// Addresses a single unit of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Visible(usize),
    Hidden(usize),
}

/// Asynchronous single-unit update: unit `s` turns on with probability
/// `σ(ΔE)`, where `ΔE = E(s=0) − E(s=1)` is its bias plus the weighted sum of
/// its neighbours. Block Gibbs is used everywhere else; this exists to
/// cross-check that both dynamics share the same stationary distribution.
pub fn single_site_update<R: Rng + ?Sized>(
    model: &RbmModel,
    config: &mut Configuration,
    unit: Unit,
    rng: &mut R,
) -> Result<()> {
    model.check_visible(&config.visible)?;
    model.check_hidden(&config.hidden)?;
    let n = model.n_hidden();
    let gap = match unit {
        Unit::Visible(i) => {
            let row = &model.weights[i * n..(i + 1) * n];
            model.visible_bias[i]
                + row
                    .iter()
                    .zip(&config.hidden)
                    .map(|(w, &h)| w * f64::from(h))
                    .sum::<f64>()
        }
        Unit::Hidden(j) => {
            model.hidden_bias[j]
                + config
                    .visible
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| model.weight(i, j) * f64::from(v))
                    .sum::<f64>()
        }
    };
    let on = (rng.random::<f64>() < sigmoid(gap)) as u8;
    match unit {
        Unit::Visible(i) => config.visible[i] = on,
        Unit::Hidden(j) => config.hidden[j] = on,
    }
    Ok(())
}
