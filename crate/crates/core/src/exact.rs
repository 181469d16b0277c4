//! Exact inference by enumerating every joint configuration.
//!
//! Joint states are indexed with the visible bits in the high positions and
//! `v₁` as the most significant bit, so index order is lexicographic over
//! `(v₁, …, v_m, h₁, …, h_n)`.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::epr::Setting;
use crate::error::{Error, Result};
use crate::rbm::RbmModel;

/// Largest `m + n` accepted by [`enumerate`].
pub const MAX_EXACT_UNITS: usize = 24;

/// The Boltzmann distribution of a model, tabulated over all `2^(m+n)` states.
#[derive(Debug, Clone)]
pub struct ExactDistribution {
    model: RbmModel,
    log_partition: f64,
    joint: Vec<f64>,
}

/// A hidden-layer assignment, the hidden variable of the EPR model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HiddenState {
    index: usize,
    n: usize,
}

impl HiddenState {
    pub fn from_index(index: usize, n: usize) -> Self {
        assert!(index < 1 << n, "hidden state index out of range");
        HiddenState { index, n }
    }

    /// Every hidden state of an `n`-unit layer in index order.
    pub fn all(n: usize) -> impl Iterator<Item = HiddenState> {
        (0..1usize << n).map(move |index| HiddenState { index, n })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// Bits `(h₁, …, h_n)`.
    pub fn bits(&self) -> Vec<u8> {
        index_to_bits(self.index, self.n)
    }
}

impl std::fmt::Display for HiddenState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in self.bits() {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Bits of `index` with the most significant of `width` bits first.
pub fn index_to_bits(index: usize, width: usize) -> Vec<u8> {
    (0..width)
        .map(|k| ((index >> (width - 1 - k)) & 1) as u8)
        .collect()
}

/// Inverse of [`index_to_bits`].
pub fn bits_to_index(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | usize::from(b))
}

/// `log Σ exp(xₖ)` with the maximum factored out.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Tabulates the Boltzmann distribution of `model`.
pub fn enumerate(model: &RbmModel) -> Result<ExactDistribution> {
    let (m, n) = (model.n_visible(), model.n_hidden());
    if m + n > MAX_EXACT_UNITS {
        return Err(Error::TooLargeForExactInference {
            units: m + n,
            limit: MAX_EXACT_UNITS,
        });
    }
    model.check_finite()?;
    let hidden_states: Vec<Vec<u8>> = (0..1usize << n).map(|k| index_to_bits(k, n)).collect();
    let mut log_weights = Vec::with_capacity(1 << (m + n));
    for vi in 0..1usize << m {
        let visible = index_to_bits(vi, m);
        for hidden in &hidden_states {
            log_weights.push(-model.energy_unchecked(&visible, hidden));
        }
    }
    let log_partition = log_sum_exp(&log_weights);
    if !log_partition.is_finite() {
        return Err(Error::InvalidModel(format!(
            "log partition function is {log_partition}"
        )));
    }
    let joint = log_weights
        .into_iter()
        .map(|lw| (lw - log_partition).exp())
        .collect();
    Ok(ExactDistribution {
        model: model.clone(),
        log_partition,
        joint,
    })
}

impl ExactDistribution {
    pub fn model(&self) -> &RbmModel {
        &self.model
    }

    /// `log Z`.
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    /// Joint probabilities in index order.
    pub fn joint(&self) -> &[f64] {
        &self.joint
    }

    pub fn n_visible(&self) -> usize {
        self.model.n_visible()
    }

    pub fn n_hidden(&self) -> usize {
        self.model.n_hidden()
    }

    pub fn index(&self, visible: &[u8], hidden: &[u8]) -> usize {
        (bits_to_index(visible) << self.n_hidden()) | bits_to_index(hidden)
    }

    /// `P(v, h)`.
    pub fn probability(&self, visible: &[u8], hidden: &[u8]) -> Result<f64> {
        self.model.check_visible(visible)?;
        self.model.check_hidden(hidden)?;
        Ok(self.joint[self.index(visible, hidden)])
    }

    /// `P(v)` for every visible pattern, in index order.
    pub fn visible_marginal(&self) -> Vec<f64> {
        self.joint
            .chunks(1 << self.n_hidden())
            .map(|row| row.iter().sum())
            .collect()
    }

    /// `P(h)` for every hidden pattern, in index order.
    pub fn hidden_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; 1 << self.n_hidden()];
        for row in self.joint.chunks(1 << self.n_hidden()) {
            for (o, p) in out.iter_mut().zip(row) {
                *o += p;
            }
        }
        out
    }

    /// `P(h | v)` over every hidden pattern.
    pub fn hidden_given_visible(&self, visible: &[u8]) -> Result<Vec<f64>> {
        self.model.check_visible(visible)?;
        let width = 1 << self.n_hidden();
        let start = bits_to_index(visible) * width;
        let row = &self.joint[start..start + width];
        let total: f64 = row.iter().sum();
        Ok(row.iter().map(|p| p / total).collect())
    }

    /// Draws a joint state by inverting the cumulative distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<u8>, Vec<u8>) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.joint.len() - 1;
        for (k, p) in self.joint.iter().enumerate() {
            acc += p;
            if u < acc {
                chosen = k;
                break;
            }
        }
        let (m, n) = (self.n_visible(), self.n_hidden());
        (
            index_to_bits(chosen >> n, m),
            index_to_bits(chosen & ((1 << n) - 1), n),
        )
    }

    /// Writes the joint table as CSV with columns `v1..vm,h1..hn,probability`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let (m, n) = (self.n_visible(), self.n_hidden());
        let mut out = csv::Writer::from_writer(writer);
        let header: Vec<String> = (1..=m)
            .map(|i| format!("v{i}"))
            .chain((1..=n).map(|j| format!("h{j}")))
            .chain(std::iter::once("probability".to_string()))
            .collect();
        out.write_record(&header)?;
        for (k, p) in self.joint.iter().enumerate() {
            let mut record: Vec<String> = index_to_bits(k, m + n)
                .into_iter()
                .map(|b| b.to_string())
                .collect();
            record.push(format!("{p:e}"));
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }

    fn require_epr_layout(&self) -> Result<()> {
        if self.n_visible() != 4 {
            return Err(Error::NotEprLayout(self.n_visible()));
        }
        Ok(())
    }

    /// `P(v₁=α, v₂=β, v₃=x, v₄=y, h=λ)`.
    fn epr_joint(&self, alpha: u8, beta: u8, x: u8, y: u8, lambda: usize) -> f64 {
        let v = (usize::from(alpha) << 3)
            | (usize::from(beta) << 2)
            | (usize::from(x) << 1)
            | usize::from(y);
        self.joint[(v << self.n_hidden()) | lambda]
    }
}

/// `P(v₃, v₄ | v₁, v₂)` marginalized over hidden states, indexed `[v₃][v₄]`.
pub fn conditional_outcomes(
    dist: &ExactDistribution,
    settings: (Setting, Setting),
) -> Result<[[f64; 2]; 2]> {
    dist.require_epr_layout()?;
    let (alpha, beta) = (settings.0.bit(), settings.1.bit());
    let mut table = [[0.0; 2]; 2];
    for x in 0..2u8 {
        for y in 0..2u8 {
            table[x as usize][y as usize] = (0..1usize << dist.n_hidden())
                .map(|lambda| dist.epr_joint(alpha, beta, x, y, lambda))
                .sum();
        }
    }
    let total: f64 = table.iter().flatten().sum();
    for row in &mut table {
        for cell in row.iter_mut() {
            *cell /= total;
        }
    }
    Ok(table)
}

/// Largest deviation from factorizability,
/// `|P(x_α, x_β | α, β, λ) − P(x_α | α, λ) P(x_β | β, λ)|`, over every hidden
/// state, setting pair and outcome pair. Every conditional is read off the
/// joint table directly, without using the model's factorized form.
pub fn locality_check(dist: &ExactDistribution) -> Result<f64> {
    dist.require_epr_layout()?;
    let mut worst: f64 = 0.0;
    for lambda in 0..1usize << dist.n_hidden() {
        // P(α, β, x, y, λ) for this λ.
        let mut p = [[[[0.0; 2]; 2]; 2]; 2];
        for (a, pa) in p.iter_mut().enumerate() {
            for (b, pb) in pa.iter_mut().enumerate() {
                for (x, px) in pb.iter_mut().enumerate() {
                    for (y, cell) in px.iter_mut().enumerate() {
                        *cell = dist.epr_joint(a as u8, b as u8, x as u8, y as u8, lambda);
                    }
                }
            }
        }
        // P(x_α | α, λ): marginalize β and x_β.
        let station_a = |a: usize, x: usize| {
            let num: f64 = (0..2)
                .flat_map(|b| (0..2).map(move |y| (b, y)))
                .map(|(b, y)| p[a][b][x][y])
                .sum();
            let den: f64 = (0..2)
                .flat_map(|b| (0..2).flat_map(move |x| (0..2).map(move |y| (b, x, y))))
                .map(|(b, x, y)| p[a][b][x][y])
                .sum();
            num / den
        };
        // P(x_β | β, λ): marginalize α and x_α.
        let station_b = |b: usize, y: usize| {
            let num: f64 = (0..2)
                .flat_map(|a| (0..2).map(move |x| (a, x)))
                .map(|(a, x)| p[a][b][x][y])
                .sum();
            let den: f64 = (0..2)
                .flat_map(|a| (0..2).flat_map(move |x| (0..2).map(move |y| (a, x, y))))
                .map(|(a, x, y)| p[a][b][x][y])
                .sum();
            num / den
        };
        for a in 0..2 {
            for b in 0..2 {
                let settings_total: f64 = p[a][b].iter().flatten().sum();
                for x in 0..2 {
                    for y in 0..2 {
                        let joint = p[a][b][x][y] / settings_total;
                        let product = station_a(a, x) * station_b(b, y);
                        worst = worst.max((joint - product).abs());
                    }
                }
            }
        }
    }
    Ok(worst)
}

/// Hidden-state distribution conditioned on one setting pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingConditional {
    pub alpha: Setting,
    pub beta: Setting,
    /// `P(λ | α, β)` in hidden-state index order.
    pub distribution: Vec<f64>,
    /// Total-variation distance to the pooled distribution.
    pub tv_to_pooled: f64,
}

/// How strongly the hidden state depends on the detector settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementIndependenceReport {
    /// One entry per setting pair, in the order (a,b), (a,b′), (a′,b), (a′,b′).
    pub conditionals: Vec<SettingConditional>,
    /// Uniform average of the four conditionals.
    pub pooled: Vec<f64>,
    pub max_tv: f64,
}

/// `½ Σ |p − q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Compares each `P(λ | α, β)` with the settings-averaged `P(λ)`.
pub fn measurement_independence_check(
    dist: &ExactDistribution,
) -> Result<MeasurementIndependenceReport> {
    dist.require_epr_layout()?;
    let width = 1usize << dist.n_hidden();
    let mut conditionals = Vec::with_capacity(4);
    for (alpha, beta) in Setting::PAIRS {
        let mut lambda_dist: Vec<f64> = (0..width)
            .map(|lambda| {
                (0..4u8)
                    .map(|xy| dist.epr_joint(alpha.bit(), beta.bit(), xy >> 1, xy & 1, lambda))
                    .sum()
            })
            .collect();
        let total: f64 = lambda_dist.iter().sum();
        lambda_dist.iter_mut().for_each(|p| *p /= total);
        conditionals.push(SettingConditional {
            alpha,
            beta,
            distribution: lambda_dist,
            tv_to_pooled: 0.0,
        });
    }
    let pooled: Vec<f64> = (0..width)
        .map(|k| conditionals.iter().map(|c| c.distribution[k]).sum::<f64>() / 4.0)
        .collect();
    let mut max_tv: f64 = 0.0;
    for c in &mut conditionals {
        c.tv_to_pooled = total_variation(&c.distribution, &pooled);
        max_tv = max_tv.max(c.tv_to_pooled);
    }
    Ok(MeasurementIndependenceReport {
        conditionals,
        pooled,
        max_tv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::reference_model;
    use crate::rbm::{energy, hidden_activation_probs, Configuration};

    #[test]
    fn zero_model_is_uniform() {
        let dist = enumerate(&RbmModel::zeros(4, 4)).unwrap();
        assert_eq!(dist.joint().len(), 256);
        assert!((dist.log_partition() - 256f64.ln()).abs() < 1e-12);
        assert!(dist
            .joint()
            .iter()
            .all(|&p| (p - 1.0 / 256.0).abs() < 1e-15));
    }

    #[test]
    fn one_by_one_model_by_hand() {
        // weights over (v,h) = 00, 01, 10, 11 are 1, 1, 1, 3
        let model = RbmModel::new(vec![0.0], vec![0.0], vec![3f64.ln()]).unwrap();
        let dist = enumerate(&model).unwrap();
        let expected = [1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 0.5];
        for (p, e) in dist.joint().iter().zip(expected) {
            assert!((p - e).abs() < 1e-15, "{p} vs {e}");
        }
        assert!((dist.log_partition() - 6f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn reference_model_normalized_and_consistent_with_energy() {
        let model = reference_model();
        let dist = enumerate(&model).unwrap();
        let total: f64 = dist.joint().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        for k in 0..256 {
            let (v, h) = (index_to_bits(k >> 4, 4), index_to_bits(k & 15, 4));
            let p = dist.probability(&v, &h).unwrap();
            assert!(p > 0.0);
            let e = energy(&model, &Configuration::new(v, h).unwrap()).unwrap();
            assert!((p - (-e - dist.log_partition()).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn size_guard() {
        let err = enumerate(&RbmModel::zeros(13, 12)).unwrap_err();
        assert!(matches!(
            err,
            Error::TooLargeForExactInference { units: 25, .. }
        ));
    }

    #[test]
    fn exact_conditional_factorizes_into_activation_probs() {
        let model = reference_model();
        let dist = enumerate(&model).unwrap();
        for vi in 0..16 {
            let v = index_to_bits(vi, 4);
            let exact = dist.hidden_given_visible(&v).unwrap();
            let probs = hidden_activation_probs(&model, &v).unwrap();
            for (k, p) in exact.iter().enumerate() {
                let product: f64 = index_to_bits(k, 4)
                    .iter()
                    .zip(&probs)
                    .map(|(&h, &q)| if h == 1 { q } else { 1.0 - q })
                    .product();
                assert!((p - product).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conditional_outcomes_reference_model_same_outcome_rate() {
        let dist = enumerate(&reference_model()).unwrap();
        let t = conditional_outcomes(&dist, (Setting::Unprimed, Setting::Unprimed)).unwrap();
        let same = t[0][0] + t[1][1];
        assert!((same - 0.145).abs() < 0.01, "{same}");
        let total: f64 = t.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conditional_outcomes_zero_model_uniform() {
        let dist = enumerate(&RbmModel::zeros(4, 4)).unwrap();
        for (a, b) in Setting::PAIRS {
            let t = conditional_outcomes(&dist, (a, b)).unwrap();
            assert!(t.iter().flatten().all(|&p| (p - 0.25).abs() < 1e-15));
        }
    }

    #[test]
    fn epr_operations_reject_other_layouts() {
        let dist = enumerate(&RbmModel::zeros(3, 2)).unwrap();
        assert!(matches!(locality_check(&dist), Err(Error::NotEprLayout(3))));
        assert!(measurement_independence_check(&dist).is_err());
        assert!(conditional_outcomes(&dist, (Setting::Primed, Setting::Primed)).is_err());
    }

    #[test]
    fn locality_holds_for_reference_model_and_zero_model() {
        assert!(locality_check(&enumerate(&reference_model()).unwrap()).unwrap() <= 1e-10);
        assert!(locality_check(&enumerate(&RbmModel::zeros(4, 4)).unwrap()).unwrap() <= 1e-15);
    }

    #[test]
    fn zero_weight_models_are_measurement_independent() {
        let model = RbmModel::new(
            vec![0.3, -1.2, 2.0, 0.7],
            vec![-0.4, 1.1, 0.0, -2.5],
            vec![0.0; 16],
        )
        .unwrap();
        let report = measurement_independence_check(&enumerate(&model).unwrap()).unwrap();
        assert!(report.max_tv < 1e-12);
        for c in &report.conditionals {
            assert!((c.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reference_model_violates_measurement_independence() {
        // Frozen from an independent enumeration of the fixture: 0.620024...
        let report =
            measurement_independence_check(&enumerate(&reference_model()).unwrap()).unwrap();
        assert!((report.max_tv - 0.620024).abs() < 1e-5, "{}", report.max_tv);
        assert!(report.max_tv > 0.05);
        for c in &report.conditionals {
            assert!((c.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn relabeling_units_permutes_the_table() {
        let model = reference_model();
        let perm_h = [2, 0, 3, 1];
        let perm_v = [1, 0, 3, 2];
        let base = enumerate(&model).unwrap();
        let permuted = enumerate(&model.permute_hidden(&perm_h).permute_visible(&perm_v)).unwrap();
        for k in 0..256 {
            let (v, h) = (index_to_bits(k >> 4, 4), index_to_bits(k & 15, 4));
            let v_src: Vec<u8> = {
                let mut out = vec![0; 4];
                for (i, &src) in perm_v.iter().enumerate() {
                    out[src] = v[i];
                }
                out
            };
            let h_src: Vec<u8> = {
                let mut out = vec![0; 4];
                for (j, &src) in perm_h.iter().enumerate() {
                    out[src] = h[j];
                }
                out
            };
            let a = permuted.probability(&v, &h).unwrap();
            let b = base.probability(&v_src, &h_src).unwrap();
            assert!((a - b).abs() <= 1e-12 * b, "{k} {a} {b}");
        }
    }

    #[test]
    fn csv_dump_layout() {
        let dist = enumerate(&RbmModel::zeros(4, 4)).unwrap();
        let mut buf = Vec::new();
        dist.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("v1,v2,v3,v4,h1,h2,h3,h4,probability"));
        assert!(lines.next().unwrap().starts_with("0,0,0,0,0,0,0,0,"));
        assert!(lines.next().unwrap().starts_with("0,0,0,0,0,0,0,1,"));
        assert_eq!(text.lines().count(), 257);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }
}
