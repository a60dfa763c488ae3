//! Invariants checked over generated inputs.

use crbm_core::baselines::{best_of_runs, lloyd, uniform_timestamps};
use crbm_core::coreg::{sparsify, sparsity_profile, PairedModel};
use crbm_core::features::{normalize, synth_paired, FeatureMatrix, Modality, NormalizeMode};
use crbm_core::summarizer::select_keyframes;
use crbm_core::viz::{top_categories, top_frames, unit_average_image};
use crbm_core::{features::CategoryLabels, Rbm};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn matrix(
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
    lo: f64,
    hi: f64,
) -> impl Strategy<Value = Array2<f64>> {
    (rows, cols).prop_flat_map(move |(r, c)| {
        proptest::collection::vec(lo..hi, r * c)
            .prop_map(move |v| Array2::from_shape_vec((r, c), v).unwrap())
    })
}

fn modality() -> impl Strategy<Value = Modality> {
    prop_oneof![
        Just(Modality::Subject),
        Just(Modality::Scene),
        Just(Modality::Pixels)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn feature_bytes_round_trip(
        data in matrix(1..12, 1..9, -1e6, 1e6),
        fps in 0.1f32..30.0,
        modality in modality(),
    ) {
        let m = FeatureMatrix::new(data.mapv(|v| v as f32), fps, modality).unwrap();
        let bytes = m.to_bytes();
        let back = FeatureMatrix::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert_eq!(back, m);
    }

    #[test]
    fn any_magic_mutation_is_rejected(byte in 0usize..4, xor in 1u8..=255) {
        let m = FeatureMatrix::new(Array2::ones((2, 2)), 1.0, Modality::Scene).unwrap();
        let mut bytes = m.to_bytes();
        bytes[byte] ^= xor;
        prop_assert!(matches!(
            FeatureMatrix::from_bytes(&bytes),
            Err(crbm_core::Error::Format(_))
        ));
    }

    #[test]
    fn minmax_output_in_unit_interval(data in matrix(2..20, 1..6, -1e30, 1e30)) {
        let m = FeatureMatrix::new(data.mapv(|v| v as f32), 1.0, Modality::Subject).unwrap();
        let n = normalize(&m, NormalizeMode::MinmaxPerDim).unwrap();
        prop_assert!(n.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let s = normalize(&m, NormalizeMode::SoftmaxPerFrame).unwrap();
        prop_assert!(s.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn synth_without_noise_has_k_distinct_rows(k in 1usize..6, extra in 0usize..10, seed: u64) {
        let pair = synth_paired(k + extra, k, 0.0, seed).unwrap();
        for m in [&pair.subject, &pair.scene] {
            let mut rows: Vec<Vec<u32>> = m.data().rows().into_iter()
                .map(|r| r.iter().map(|v| v.to_bits()).collect())
                .collect();
            rows.sort();
            rows.dedup();
            prop_assert_eq!(rows.len(), k);
        }
    }

    #[test]
    fn sparsify_mean_and_rank_order(
        z in matrix(2..40, 1..6, 0.0, 1.0),
        mu in 0.01f64..0.99,
    ) {
        let out = sparsify(z.view(), mu).unwrap();
        for (col_in, col_out) in z.columns().into_iter().zip(out.columns()) {
            let mean = col_out.sum() / col_out.len() as f64;
            prop_assert!((mean - mu).abs() < 1e-10, "mean {} vs {}", mean, mu);
            for a in 0..col_in.len() {
                for b in 0..col_in.len() {
                    // a ranked ahead of b: larger input, or equal input and lower row.
                    let ahead = col_in[a] > col_in[b] || (col_in[a] == col_in[b] && a < b);
                    if ahead {
                        prop_assert!(col_out[a] >= col_out[b]);
                    }
                }
            }
        }
    }

    #[test]
    fn sparsify_is_idempotent_on_its_profile(rows in 2usize..50, mu in 0.01f64..0.99) {
        let p = sparsity_profile(rows, mu).unwrap();
        let col = Array2::from_shape_vec((rows, 1), p.clone()).unwrap();
        let out = sparsify(col.view(), mu).unwrap();
        for (a, b) in out.iter().zip(&p) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn selection_is_argmax_over_unclaimed_frames(scores in matrix(8..50, 1..8, 0.0, 1.0)) {
        let s = select_keyframes(scores.view(), 2.0, true).unwrap();
        let k = scores.ncols();
        prop_assert_eq!(s.len(), k);
        let mut frames = s.frame_indices();
        frames.dedup();
        prop_assert_eq!(frames.len(), k, "frames must be pairwise distinct");
        prop_assert!(s.timings().windows(2).all(|w| w[0] < w[1]));
        // Replay the greedy order: a unit may only lose frames claimed before it.
        let mut winners: Vec<(usize, f64)> = (0..k)
            .map(|u| (u, scores.column(u).iter().copied().fold(f64::MIN, f64::max)))
            .collect();
        winners.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut claimed = Vec::new();
        for (u, _) in winners {
            let t = s.frame_for_unit(u).unwrap();
            for other in 0..scores.nrows() {
                if !claimed.contains(&other) {
                    prop_assert!(scores[[t, u]] >= scores[[other, u]]);
                }
            }
            claimed.push(t);
        }
        for kf in &s.keyframes {
            prop_assert_eq!(kf.timing_seconds, kf.frame_index as f64 / 2.0);
        }
    }

    #[test]
    fn argmax_invariant_under_increasing_transform(scores in matrix(2..40, 1..6, -5.0, 5.0)) {
        let a = select_keyframes(scores.view(), 1.0, false).unwrap();
        let transformed = scores.mapv(|v| (3.0 * v).exp() + 7.0);
        let b = select_keyframes(transformed.view(), 1.0, false).unwrap();
        for u in 0..scores.ncols() {
            prop_assert_eq!(a.frame_for_unit(u), b.frame_for_unit(u));
        }
    }

    #[test]
    fn uniform_timestamps_are_inside_and_evenly_spaced(d in 1e-3f64..1e6, k in 1usize..200) {
        let t = uniform_timestamps(d, k).unwrap();
        prop_assert_eq!(t.len(), k);
        prop_assert!(t.iter().all(|&x| x > 0.0 && x < d));
        let gap = d / k as f64;
        for w in t.windows(2) {
            prop_assert!(((w[1] - w[0]) - gap).abs() <= 1e-9 * d);
        }
    }

    #[test]
    fn lloyd_invariants(points in matrix(4..30, 1..4, -10.0, 10.0), k in 1usize..4, seed in 0u64..1000) {
        let r = lloyd(points.view(), k, seed, 300).unwrap();
        for w in r.inertia_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", r.inertia_history);
        }
        let mut used = vec![false; k];
        r.assignments.iter().for_each(|&c| used[c] = true);
        prop_assert!(used.iter().all(|&u| u));
        let recomputed: f64 = points.rows().into_iter().zip(&r.assignments)
            .map(|(p, &c)| p.iter().zip(r.centroids.row(c)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum();
        prop_assert!((recomputed - r.inertia).abs() <= 1e-9 * recomputed.max(1.0));
        prop_assert_eq!(lloyd(points.view(), k, seed, 300).unwrap(), r);
    }

    #[test]
    fn more_restarts_never_hurt(points in matrix(6..20, 2..3, 0.0, 1.0), a in 1usize..8, b in 1usize..8) {
        let (lo, hi) = (a.min(b), a.max(b));
        let few = best_of_runs(points.view(), 3, lo, 300).unwrap();
        let many = best_of_runs(points.view(), 3, hi, 300).unwrap();
        prop_assert!(many.inertia <= few.inertia);
    }

    #[test]
    fn top_frames_full_ranking_is_a_sorted_permutation(
        weights in matrix(3..4, 2..3, -3.0, 3.0),
        data in matrix(1..30, 3..4, 0.0, 1.0),
    ) {
        let rbm = Rbm::from_parts(weights, Array1::zeros(2), Array1::zeros(3)).unwrap();
        let model = PairedModel::new(rbm.clone(), rbm).unwrap();
        let features = FeatureMatrix::new(data.mapv(|v| v as f32), 1.0, Modality::Subject).unwrap();
        let t = features.frames();
        for unit in 0..2 {
            let all = top_frames(&model, &features, unit, t).unwrap();
            let mut idx: Vec<usize> = all.iter().map(|p| p.0).collect();
            idx.sort();
            prop_assert_eq!(idx, (0..t).collect::<Vec<_>>());
            prop_assert!(all.windows(2).all(|w| w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0)));
        }
    }

    #[test]
    fn top_categories_ignore_positive_rescaling(
        column in proptest::collection::vec(-2.0f64..2.0, 2..30),
        scale in 0.01f64..100.0,
    ) {
        let d = column.len();
        let labels = CategoryLabels::new((0..d).map(|i| format!("c{i}")).collect(), Modality::Scene).unwrap();
        let rbm = |c: &[f64]| Rbm::from_parts(
            Array2::from_shape_vec((d, 1), c.to_vec()).unwrap(), Array1::zeros(1), Array1::zeros(d),
        ).unwrap();
        let a = top_categories(&rbm(&column), &labels, 0, d).unwrap();
        let scaled: Vec<f64> = column.iter().map(|v| v * scale).collect();
        let b = top_categories(&rbm(&scaled), &labels, 0, d).unwrap();
        let names = |v: &Vec<(String, f64)>| v.iter().map(|p| p.0.clone()).collect::<Vec<_>>();
        prop_assert_eq!(names(&a), names(&b));
        // Full-sort oracle.
        let mut oracle: Vec<usize> = (0..d).collect();
        oracle.sort_by(|&x, &y| column[y].partial_cmp(&column[x]).unwrap().then(x.cmp(&y)));
        let expected: Vec<String> = oracle.iter().map(|i| format!("c{i}")).collect();
        prop_assert_eq!(names(&a), expected);
    }

    #[test]
    fn average_image_stays_in_unit_interval(
        values in proptest::collection::vec(0.0f32..=1.0, 1..6),
        weights in proptest::collection::vec(0.01f64..5.0, 6),
    ) {
        let n = values.len();
        let data = Array2::from_shape_fn((n, 3072), |(t, d)| values[t] * ((d % 7) as f32 / 6.0));
        let px = FeatureMatrix::new(data, 1.0, Modality::Pixels).unwrap();
        let top: Vec<(usize, f64)> = (0..n).map(|t| (t, weights[t])).collect();
        let img = unit_average_image(&top, &px).unwrap();
        prop_assert!(img.pixels.iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
    }
}
