mod common;

use common::{random_model, rng};
use epr_rbm::exact::index_to_bits;
use epr_rbm::fixtures::reference_model;
use epr_rbm::trainer::average_log_likelihood;
use epr_rbm::{
    enumerate, exact_gradient, generate_dataset, hidden_activation_probs, locality_check,
    model_expectation_exact, DetectorAngles, Moments, RbmModel,
};
use rand::Rng;

/// Copy of `model` with parameter `k` (in `Moments` order) shifted by `delta`.
fn perturbed(model: &RbmModel, k: usize, delta: f64) -> RbmModel {
    let (m, n) = (model.n_visible(), model.n_hidden());
    let mut out = model.clone();
    if k < m * n {
        let (i, j) = (k / n, k % n);
        out.set_weight(i, j, model.weight(i, j) + delta);
    } else if k < m * n + m {
        let i = k - m * n;
        out.set_visible_bias(i, model.visible_bias()[i] + delta);
    } else {
        let j = k - m * n - m;
        out.set_hidden_bias(j, model.hidden_bias()[j] + delta);
    }
    out
}

fn flatten(g: &Moments) -> Vec<f64> {
    g.pairwise
        .iter()
        .chain(&g.visible)
        .chain(&g.hidden)
        .copied()
        .collect()
}

/// `‖a − b‖∞ / ‖b‖∞`.
fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
    let scale = b.iter().fold(0.0f64, |acc, y| acc.max(y.abs()));
    diff / scale
}

#[test]
fn locality_holds_for_random_models() {
    let mut r = rng(100);
    let mut worst = locality_check(&enumerate(&reference_model()).unwrap()).unwrap();
    for _ in 0..100 {
        let scale = r.random_range(0.1..5.0);
        let model = random_model(4, 4, scale, &mut r);
        worst = worst.max(locality_check(&enumerate(&model).unwrap()).unwrap());
    }
    assert!(worst <= 1e-10, "worst residual {worst}");
}

#[test]
fn exact_gradient_matches_finite_differences() {
    let mut r = rng(101);
    let h = 1e-5;
    for _ in 0..20 {
        let model = random_model(4, 4, 1.0, &mut r);
        let data: Vec<Vec<u8>> = (0..50)
            .map(|_| (0..4).map(|_| r.random_bool(0.5) as u8).collect())
            .collect();
        let analytic = flatten(&exact_gradient(&model, &data).unwrap());
        let numeric: Vec<f64> = (0..analytic.len())
            .map(|k| {
                let up = average_log_likelihood(&perturbed(&model, k, h), &data).unwrap();
                let down = average_log_likelihood(&perturbed(&model, k, -h), &data).unwrap();
                (up - down) / (2.0 * h)
            })
            .collect();
        let err = relative_error(&numeric, &analytic);
        assert!(err < 1e-5, "relative error {err}");
    }
}

#[test]
fn log_partition_derivatives_are_model_moments() {
    let mut r = rng(102);
    let h = 1e-5;
    for _ in 0..10 {
        let model = random_model(4, 4, 1.0, &mut r);
        let moments = flatten(&model_expectation_exact(&model).unwrap());
        let numeric: Vec<f64> = (0..moments.len())
            .map(|k| {
                let up = enumerate(&perturbed(&model, k, h)).unwrap().log_partition();
                let down = enumerate(&perturbed(&model, k, -h))
                    .unwrap()
                    .log_partition();
                (up - down) / (2.0 * h)
            })
            .collect();
        let err = relative_error(&numeric, &moments);
        assert!(err < 1e-6, "relative error {err}");
    }
}

#[test]
fn exact_hidden_conditional_is_product_of_unit_probabilities() {
    let mut r = rng(103);
    for model in [reference_model(), random_model(4, 4, 2.0, &mut r)] {
        let dist = enumerate(&model).unwrap();
        for vi in 0..16 {
            let v = index_to_bits(vi, 4);
            let exact = dist.hidden_given_visible(&v).unwrap();
            let probs = hidden_activation_probs(&model, &v).unwrap();
            for (k, &p) in exact.iter().enumerate() {
                let h = index_to_bits(k, 4);
                let product: f64 = h
                    .iter()
                    .zip(&probs)
                    .map(|(&b, &q)| if b == 1 { q } else { 1.0 - q })
                    .product();
                assert!((p - product).abs() < 1e-12, "v={v:?} h={h:?}");
            }
        }
    }
}

#[test]
fn enumeration_permutes_with_visible_and_hidden_relabeling() {
    let mut r = rng(104);
    let model = random_model(4, 4, 1.0, &mut r);
    let vp = [2, 0, 3, 1];
    let hp = [3, 1, 0, 2];
    let base = enumerate(&model).unwrap();
    let relabeled = enumerate(&model.permute_visible(&vp).permute_hidden(&hp)).unwrap();
    for vi in 0..16 {
        let v = index_to_bits(vi, 4);
        for hi in 0..16 {
            let h = index_to_bits(hi, 4);
            let pv: Vec<u8> = vp.iter().map(|&s| v[s]).collect();
            let ph: Vec<u8> = hp.iter().map(|&s| h[s]).collect();
            let a = base.probability(&v, &h).unwrap();
            let b = relabeled.probability(&pv, &ph).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.max(1e-300), "{a} vs {b}");
        }
    }
}

#[test]
fn simulated_data_log_likelihood_is_finite_for_reference_model() {
    let data = generate_dataset(DetectorAngles::default(), 10_000, 3)
        .unwrap()
        .encoded();
    let ll = average_log_likelihood(&reference_model(), &data).unwrap();
    // Four fair bits carry log 16 nats; the fixture must beat a uniform model.
    assert!(ll.is_finite() && ll > -(16f64).ln(), "LL = {ll}");
}
