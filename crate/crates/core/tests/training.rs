mod common;

use common::{pearson, relative_error};
use crbm_core::coreg::{
    coreg_penalty, sparsify, train_pair, train_pair_with, train_single, PairedModel, Side,
    TrainConfig,
};
use crbm_core::features::{normalize, synth_paired, FeatureMatrix, Modality, NormalizeMode};
use crbm_core::rbm::{seeded_rng, sigmoid};
use crbm_core::Error;
use ndarray::{s, Array2};
use rand::Rng;

fn small_pair(frames: usize, seed: u64) -> (FeatureMatrix, FeatureMatrix) {
    let pair = synth_paired(frames, 4, 0.1, seed).unwrap();
    (
        normalize(&pair.subject, NormalizeMode::MinmaxPerDim).unwrap(),
        normalize(&pair.scene, NormalizeMode::MinmaxPerDim).unwrap(),
    )
}

fn quick_config(lambda: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        lambda_subject: lambda,
        lambda_scene: lambda,
        k_units: 4,
        epochs: 5,
        minibatch_size: 16,
        seed,
        ..TrainConfig::default()
    }
}

/// Mean over units of the Pearson correlation between the two models' unit-k activations.
fn cross_modal_correlation(model: &PairedModel, xs: &FeatureMatrix, xc: &FeatureMatrix) -> f64 {
    let zs = model
        .subject()
        .hidden_probs_batch(xs.to_f64().view())
        .unwrap();
    let zc = model
        .scene()
        .hidden_probs_batch(xc.to_f64().view())
        .unwrap();
    let k = model.k();
    (0..k)
        .map(|u| pearson(&zs.column(u).to_vec(), &zc.column(u).to_vec()))
        .sum::<f64>()
        / k as f64
}

#[test]
fn zero_lambda_factorizes_into_independent_trainings() {
    let (xs, xc) = small_pair(60, 3);
    let cfg = quick_config(0.0, 11);
    let paired = train_pair(&xs, &xc, &cfg).unwrap();
    let subject = train_single(&xs, &cfg, Side::Subject).unwrap();
    let scene = train_single(&xc, &cfg, Side::Scene).unwrap();
    assert_eq!(paired.subject().to_bytes(), subject.to_bytes());
    assert_eq!(paired.scene().to_bytes(), scene.to_bytes());
}

#[test]
fn positive_lambda_changes_the_trajectory() {
    let (xs, xc) = small_pair(60, 3);
    let a = train_pair(&xs, &xc, &quick_config(0.0, 11)).unwrap();
    let b = train_pair(&xs, &xc, &quick_config(0.5, 11)).unwrap();
    assert_ne!(a, b);
}

#[test]
fn training_is_deterministic() {
    let (xs, xc) = small_pair(60, 4);
    let cfg = quick_config(0.5, 2);
    let a = train_pair(&xs, &xc, &cfg).unwrap();
    let b = train_pair(&xs, &xc, &cfg).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
}

#[test]
fn misaligned_inputs_are_rejected() {
    let (xs, xc) = small_pair(60, 4);
    let short = FeatureMatrix::new(
        xc.data().slice(s![..59, ..]).to_owned(),
        1.0,
        Modality::Scene,
    )
    .unwrap();
    let cfg = quick_config(0.5, 2);
    assert!(matches!(
        train_pair(&xs, &short, &cfg),
        Err(Error::Alignment(_))
    ));
    let slow = FeatureMatrix::new(xc.data().clone(), 0.5, Modality::Scene).unwrap();
    assert!(matches!(
        train_pair(&xs, &slow, &cfg),
        Err(Error::Alignment(_))
    ));
    assert!(matches!(train_pair(&xc, &xs, &cfg), Err(Error::Data(_))));
}

#[test]
fn unnormalized_inputs_are_rejected() {
    let pair = synth_paired(20, 2, 0.5, 1).unwrap();
    assert!(matches!(
        train_pair(&pair.subject, &pair.scene, &quick_config(0.5, 0)),
        Err(Error::Data(_))
    ));
}

#[test]
fn zero_epochs_rejected() {
    let (xs, xc) = small_pair(20, 1);
    let cfg = TrainConfig {
        epochs: 0,
        ..quick_config(0.5, 0)
    };
    assert!(matches!(train_pair(&xs, &xc, &cfg), Err(Error::Config(_))));
}

#[test]
fn epoch_callback_sees_every_epoch() {
    let (xs, xc) = small_pair(40, 1);
    let mut seen = Vec::new();
    train_pair_with(&xs, &xc, &quick_config(0.5, 0), |e, m| {
        assert_eq!(m.k(), 4);
        seen.push(e)
    })
    .unwrap();
    assert_eq!(seen, vec![0, 1, 2, 3, 4]);
}

#[test]
fn penalty_gradient_matches_finite_differences() {
    let mut rng = seeded_rng(42);
    let eps = 1e-5;
    for _ in 0..20 {
        let pre = Array2::from_shape_simple_fn((3, 2), || rng.random_range(-3.0..3.0));
        let targets = Array2::from_shape_simple_fn((3, 2), || rng.random_range(0.0..1.0));
        let loss_at = |a: &Array2<f64>| {
            coreg_penalty(a.mapv(sigmoid).view(), targets.view())
                .unwrap()
                .0
        };
        let (_, grad) = coreg_penalty(pre.mapv(sigmoid).view(), targets.view()).unwrap();
        let mut fd = Vec::new();
        for i in 0..3 {
            for j in 0..2 {
                let mut plus = pre.clone();
                plus[[i, j]] += eps;
                let mut minus = pre.clone();
                minus[[i, j]] -= eps;
                fd.push((loss_at(&plus) - loss_at(&minus)) / (2.0 * eps));
            }
        }
        let err = relative_error(&grad.iter().copied().collect::<Vec<_>>(), &fd);
        assert!(err < 1e-6, "relative error {err}");
    }
}

#[test]
fn penalty_couples_only_matching_unit_positions() {
    let mut rng = seeded_rng(5);
    let z = Array2::from_shape_simple_fn((6, 3), || rng.random_range(0.05..0.95));
    let other = Array2::from_shape_simple_fn((6, 3), || rng.random_range(0.0..1.0));
    let targets = sparsify(other.view(), 1.0 / 3.0).unwrap();
    let (_, base) = coreg_penalty(z.view(), targets.view()).unwrap();
    let visible = Array2::from_shape_simple_fn((6, 4), || rng.random_range(0.0..1.0));
    let base_dw = visible.t().dot(&base);
    for moved in [1usize, 2] {
        let mut shuffled = targets.clone();
        let col: Vec<f64> = shuffled.column(moved).iter().rev().copied().collect();
        shuffled
            .column_mut(moved)
            .assign(&ndarray::Array1::from(col));
        let (_, grad) = coreg_penalty(z.view(), shuffled.view()).unwrap();
        assert_eq!(grad.column(0), base.column(0));
        assert_eq!(visible.t().dot(&grad).column(0), base_dw.column(0));
        assert_ne!(grad.column(moved), base.column(moved));
    }
}

#[test]
fn coregularization_aligns_unit_positions() {
    let mut wins = 0;
    let mut report = Vec::new();
    for seed in 0..5u64 {
        let (xs, xc) = {
            let pair = synth_paired(200, 4, 0.1, seed).unwrap();
            (
                normalize(&pair.subject, NormalizeMode::MinmaxPerDim).unwrap(),
                normalize(&pair.scene, NormalizeMode::MinmaxPerDim).unwrap(),
            )
        };
        let cfg = |lambda| TrainConfig {
            lambda_subject: lambda,
            lambda_scene: lambda,
            k_units: 4,
            epochs: 100,
            seed,
            ..TrainConfig::default()
        };
        let with = cross_modal_correlation(&train_pair(&xs, &xc, &cfg(0.5)).unwrap(), &xs, &xc);
        let without = cross_modal_correlation(&train_pair(&xs, &xc, &cfg(0.0)).unwrap(), &xs, &xc);
        report.push((with, without));
        if with > without {
            wins += 1;
        }
    }
    println!("correlation (lambda=0.5, lambda=0): {report:?}");
    assert!(wins >= 3, "{report:?}");
}
