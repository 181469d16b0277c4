#![allow(dead_code)]

use epr_rbm::exact::ExactDistribution;
use epr_rbm::RbmModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Model with every parameter drawn from `N(0, scale²)`.
pub fn random_model(m: usize, n: usize, scale: f64, rng: &mut ChaCha8Rng) -> RbmModel {
    let normal = Normal::new(0.0, scale).unwrap();
    let mut draw = |k: usize| (0..k).map(|_| normal.sample(rng)).collect::<Vec<f64>>();
    let c = draw(m);
    let d = draw(n);
    let w = draw(m * n);
    RbmModel::new(c, d, w).unwrap()
}

/// Total variation between an exact table and a histogram.
pub fn tv_to_counts(p: &[f64], counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    0.5 * p
        .iter()
        .zip(counts)
        .map(|(pk, &c)| (pk - c as f64 / total as f64).abs())
        .sum::<f64>()
}

/// Pearson chi-square p-value of `counts` against `p`. Cells are sorted by
/// expected count and merged from the small end until every pooled cell
/// expects at least 5.
pub fn chi_square_p_value(p: &[f64], counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let mut cells: Vec<(f64, f64)> = p
        .iter()
        .zip(counts)
        .map(|(pk, &c)| (pk * total as f64, c as f64))
        .collect();
    cells.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut pooled = Vec::new();
    let (mut e, mut o) = (0.0, 0.0);
    for (ek, ok) in cells {
        e += ek;
        o += ok;
        if e >= 5.0 {
            pooled.push((e, o));
            e = 0.0;
            o = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        let last = pooled.last_mut().expect("at least one pooled cell");
        last.0 += e;
        last.1 += o;
    }
    let stat: f64 = pooled.iter().map(|(e, o)| (o - e) * (o - e) / e).sum();
    let dof = (pooled.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

/// Joint index of a sampled configuration.
pub fn joint_index(dist: &ExactDistribution, v: &[u8], h: &[u8]) -> usize {
    dist.index(v, h)
}
