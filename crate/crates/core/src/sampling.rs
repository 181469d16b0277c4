//! Long-run block Gibbs sampling, tallied into joint-state histograms.

use rand::Rng;

use crate::exact::bits_to_index;
use crate::rbm::{sweep_unchecked, Configuration, RbmModel};

/// Runs `n_chains` independent chains from uniformly random starts. After
/// `burn_in` discarded sweeps, each of the next `sweeps_per_chain` states is
/// tallied by joint index (see [`crate::exact`] for the index layout).
pub fn joint_state_counts<R: Rng + ?Sized>(
    model: &RbmModel,
    n_chains: usize,
    burn_in: usize,
    sweeps_per_chain: usize,
    rng: &mut R,
) -> Vec<u64> {
    let (m, n) = (model.n_visible(), model.n_hidden());
    let mut counts = vec![0u64; 1 << (m + n)];
    let mut scratch = vec![0.0; m.max(n)];
    for _ in 0..n_chains {
        let mut config = Configuration::random(m, n, rng);
        for _ in 0..burn_in {
            sweep_unchecked(model, &mut config, &mut scratch, rng);
        }
        for _ in 0..sweeps_per_chain {
            sweep_unchecked(model, &mut config, &mut scratch, rng);
            let k = (bits_to_index(&config.visible) << n) | bits_to_index(&config.hidden);
            counts[k] += 1;
        }
    }
    counts
}

/// Sums joint counts over the hidden layer.
pub fn visible_counts(joint_counts: &[u64], n_hidden: usize) -> Vec<u64> {
    joint_counts
        .chunks(1 << n_hidden)
        .map(|row| row.iter().sum())
        .collect()
}
