mod common;

use common::*;
use crbm_core::rbm::{
    exact_gradient, log_likelihood, log_partition, seeded_rng, visible_distribution,
};
use crbm_core::Rbm;
use ndarray::{Array1, Array2};
use rand::Rng;

const EPS: f64 = 1e-5;

fn finite_difference_gradient(rbm: &Rbm, batch: &Array2<f64>) -> Vec<f64> {
    let n = rbm.weights().len() + rbm.hidden_units() + rbm.visible_units();
    (0..n)
        .map(|i| {
            let plus = log_likelihood(&perturb(rbm, i, EPS), batch.view()).unwrap();
            let minus = log_likelihood(&perturb(rbm, i, -EPS), batch.view()).unwrap();
            (plus - minus) / (2.0 * EPS)
        })
        .collect()
}

#[test]
fn exact_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let rbm = random_rbm(4, 3, seed);
        let batch = random_binary(6, 4, 1000 + seed);
        let exact = exact_gradient(&rbm, batch.view()).unwrap().flatten();
        let fd = finite_difference_gradient(&rbm, &batch);
        let err = relative_error(&exact, &fd);
        assert!(err < 1e-6, "seed {seed}: relative error {err}");
    }
}

#[test]
fn log_partition_matches_joint_enumeration() {
    for seed in 0..5 {
        let rbm = random_rbm(3, 2, seed);
        let a = log_partition(&rbm).unwrap();
        let b = brute_log_partition(&rbm);
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn free_energy_softmax_is_the_visible_marginal() {
    let rbm = random_rbm(4, 3, 17);
    let from_free_energy = visible_distribution(&rbm).unwrap();
    let log_z = brute_log_partition(&rbm);
    for (vs, p) in from_free_energy.iter().enumerate() {
        let joint: f64 = (0..8)
            .map(|hs| (-joint_energy(&rbm, vs, hs) - log_z).exp())
            .sum();
        assert!((p - joint).abs() < 1e-14, "state {vs}: {p} vs {joint}");
    }
    assert!((from_free_energy.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn long_gibbs_chain_matches_enumerated_marginals() {
    let rbm = random_rbm(3, 2, 5);
    let log_z = brute_log_partition(&rbm);
    let mut exact = [0.0; 3];
    for vs in 0..8 {
        let p: f64 = (0..4)
            .map(|hs| (-joint_energy(&rbm, vs, hs) - log_z).exp())
            .sum();
        for (i, e) in exact.iter_mut().enumerate() {
            if (vs >> i) & 1 == 1 {
                *e += p;
            }
        }
    }

    let mut rng = seeded_rng(99);
    let mut v = Array1::zeros(3);
    // Burn-in, then keep every 10th state so samples are nearly independent.
    v = rbm.gibbs_chain(v.view(), 100, &mut rng).unwrap().0;
    let samples = 20_000;
    let mut counts = [0.0; 3];
    for _ in 0..samples {
        v = rbm.gibbs_chain(v.view(), 10, &mut rng).unwrap().0;
        for i in 0..3 {
            counts[i] += v[i];
        }
    }
    for i in 0..3 {
        let empirical = counts[i] / samples as f64;
        let sigma = (exact[i] * (1.0 - exact[i]) / samples as f64).sqrt();
        assert!(
            (empirical - exact[i]).abs() < 3.0 * sigma,
            "unit {i}: {empirical} vs {}",
            exact[i]
        );
    }
}

#[test]
fn averaged_cd1_points_along_exact_gradient() {
    for seed in 0..5 {
        let rbm = random_rbm(4, 3, seed);
        let batch = random_binary(8, 4, 500 + seed);
        let exact = exact_gradient(&rbm, batch.view()).unwrap().flatten();
        let mut acc = vec![0.0; exact.len()];
        let mut rng = seeded_rng(seed);
        for _ in 0..20_000 {
            let g = rbm
                .cd_gradient(batch.view(), 1, &mut rng)
                .unwrap()
                .flatten();
            acc.iter_mut().zip(&g).for_each(|(a, x)| *a += x);
        }
        let cos = cosine(&acc, &exact);
        assert!(cos > 0.95, "seed {seed}: cosine {cos}");
    }
}

#[test]
fn gradient_vanishes_for_samples_from_the_model() {
    let rbm = random_rbm(4, 3, 8);
    let probs = visible_distribution(&rbm).unwrap();
    let mut rng = seeded_rng(4);
    let mut norms = Vec::new();
    for n in [100usize, 10_000, 1_000_000] {
        let batch = Array2::from_shape_fn((n, 4), |_| 0.0);
        let mut batch = batch;
        for mut row in batch.rows_mut() {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut state = probs.len() - 1;
            for (s, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    state = s;
                    break;
                }
            }
            for i in 0..4 {
                row[i] = ((state >> i) & 1) as f64;
            }
        }
        norms.push(norm(&exact_gradient(&rbm, batch.view()).unwrap().flatten()));
    }
    assert!(norms[0] > norms[1] && norms[1] > norms[2], "{norms:?}");
    assert!(norms[2] < 5e-3, "{norms:?}");
}

/// Two complementary binary prototypes, alternating.
fn two_prototype_data(rows: usize) -> Array2<f64> {
    Array2::from_shape_fn(
        (rows, 6),
        |(t, d)| if (t % 2 == 0) == (d < 3) { 1.0 } else { 0.0 },
    )
}

#[test]
fn cd_training_increases_exact_likelihood() {
    use crbm_core::coreg::{train_single_with, SeedSchedule, Side, TrainConfig};
    let data = two_prototype_data(200);
    for seed in 0..5 {
        let cfg = TrainConfig {
            k_units: 2,
            epochs: 50,
            learning_rate: 0.05,
            minibatch_size: 5,
            seed,
            ..TrainConfig::default()
        };
        let init = Rbm::init(6, 2, &mut SeedSchedule::new(seed).init_rng(Side::Subject));
        let mut trace = vec![log_likelihood(&init, data.view()).unwrap()];
        train_single_with(data.view(), &cfg, Side::Subject, |epoch, rbm| {
            if (epoch + 1) % 10 == 0 {
                trace.push(log_likelihood(rbm, data.view()).unwrap());
            }
        })
        .unwrap();
        assert_eq!(trace.len(), 6);
        for w in trace.windows(2) {
            assert!(w[1] > w[0] - 1e-3, "seed {seed}: {trace:?}");
        }
        assert!(trace[5] > trace[0] + 1.0, "seed {seed}: {trace:?}");
    }
}
