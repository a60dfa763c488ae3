//! Comparison summarizers: evenly spaced timestamps, and k-means over
//! downsized RGB frames with the frame nearest each centroid as keyframe.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Modality};
use crate::rbm::seeded_rng;
use crate::summarizer::{Keyframe, Scheme, Summary};

pub const DEFAULT_RUNS: usize = 100;
pub const DEFAULT_MAX_ITER: usize = 300;

/// `t_i = (d / K) * (1/2 + i)` for `i` in `0..K`: segment midpoints.
pub fn uniform_timestamps(duration: f64, k: usize) -> Result<Vec<f64>> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::Config(format!(
            "duration must be > 0, got {duration}"
        )));
    }
    if k == 0 {
        return Err(Error::Config("K must be >= 1".into()));
    }
    let gap = duration / k as f64;
    Ok((0..k).map(|i| gap * (0.5 + i as f64)).collect())
}

/// Uniform keyframes as a summary; each timestamp maps to the frame sampled at or before it.
pub fn uniform_summary(duration: f64, k: usize, fps: f64) -> Result<Summary> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::Config(format!("fps must be > 0, got {fps}")));
    }
    let keyframes = uniform_timestamps(duration, k)?
        .into_iter()
        .enumerate()
        .map(|(i, t)| Keyframe {
            unit_index: i,
            frame_index: (t * fps).floor() as usize,
            timing_seconds: t,
            score: None,
        })
        .collect();
    Ok(Summary::new(Scheme::Uniform, fps, keyframes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Inertia after every assignment step, ending with the final value.
    pub inertia_history: Vec<f64>,
}

fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.rows().into_iter().enumerate() {
        let d = squared_distance(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn cluster_means(points: ArrayView2<f64>, assignments: &[usize], k: usize) -> Array2<f64> {
    let mut sums = Array2::zeros((k, points.ncols()));
    let mut counts = vec![0usize; k];
    for (row, &c) in points.rows().into_iter().zip(assignments) {
        let mut target = sums.row_mut(c);
        target += &row;
        counts[c] += 1;
    }
    for (mut row, &n) in sums.rows_mut().into_iter().zip(&counts) {
        if n > 0 {
            row /= n as f64;
        }
    }
    sums
}

/// Sum of squared distances from each point to its assigned centroid.
pub fn inertia(points: ArrayView2<f64>, assignments: &[usize], centroids: &Array2<f64>) -> f64 {
    points
        .rows()
        .into_iter()
        .zip(assignments)
        .map(|(p, &c)| squared_distance(p, centroids.row(c)))
        .sum()
}

/// Lloyd's algorithm from `k` distinct points drawn uniformly with `seed`.
///
/// Stops when assignments repeat or after `max_iter` assignment steps. A
/// cluster left empty seizes the point farthest from its own centroid (taken
/// only from clusters that keep at least one member).
pub fn lloyd(
    points: ArrayView2<f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<KMeansResult> {
    let n = points.nrows();
    if k == 0 || n < k {
        return Err(Error::Capacity(format!(
            "cannot form {k} clusters from {n} points"
        )));
    }
    if max_iter == 0 {
        return Err(Error::Config("max_iter must be >= 1".into()));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(
            "k-means input contains non-finite values".into(),
        ));
    }

    let mut rng = seeded_rng(seed);
    let init = rand::seq::index::sample(&mut rng, n, k).into_vec();
    let mut centroids = points.select(ndarray::Axis(0), &init);

    let mut assignments = vec![0usize; n];
    let mut dist = vec![0.0; n];
    let mut previous: Option<Vec<usize>> = None;
    let mut history = Vec::new();
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        for (t, p) in points.rows().into_iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            assignments[t] = c;
            dist[t] = d;
        }

        let mut counts = vec![0usize; k];
        for &c in &assignments {
            counts[c] += 1;
        }
        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            let donor = (0..n)
                .filter(|&t| counts[assignments[t]] > 1)
                .fold(None::<usize>, |best, t| match best {
                    Some(b) if dist[t] <= dist[b] => Some(b),
                    _ => Some(t),
                })
                .expect("n >= k leaves a cluster with two members");
            counts[assignments[donor]] -= 1;
            assignments[donor] = empty;
            counts[empty] = 1;
            dist[donor] = 0.0;
            centroids.row_mut(empty).assign(&points.row(donor));
        }

        history.push(dist.iter().sum());
        if previous.as_deref() == Some(assignments.as_slice()) {
            break;
        }
        centroids = cluster_means(points, &assignments, k);
        previous = Some(assignments.clone());
    }

    let centroids = cluster_means(points, &assignments, k);
    let final_inertia = inertia(points, &assignments, &centroids);
    history.push(final_inertia);
    Ok(KMeansResult {
        assignments,
        centroids,
        inertia: final_inertia,
        iterations,
        seed,
        inertia_history: history,
    })
}

/// Runs Lloyd with seeds `0..runs` (in parallel) and keeps the lowest inertia,
/// the lowest seed winning ties.
pub fn best_of_runs(
    points: ArrayView2<f64>,
    k: usize,
    runs: usize,
    max_iter: usize,
) -> Result<KMeansResult> {
    if runs == 0 {
        return Err(Error::Config("runs must be >= 1".into()));
    }
    let results: Vec<KMeansResult> = (0..runs as u64)
        .into_par_iter()
        .map(|seed| lloyd(points, k, seed, max_iter))
        .collect::<Result<_>>()?;
    Ok(results
        .into_iter()
        .reduce(|best, r| if r.inertia < best.inertia { r } else { best })
        .expect("runs >= 1"))
}

/// One keyframe per cluster: the member nearest the centroid (earliest on ties).
pub fn cluster_keyframes(points: ArrayView2<f64>, result: &KMeansResult, fps: f64) -> Summary {
    let k = result.centroids.nrows();
    let mut best: Vec<Option<(usize, f64)>> = vec![None; k];
    for (t, p) in points.rows().into_iter().enumerate() {
        let c = result.assignments[t];
        let d = squared_distance(p, result.centroids.row(c));
        if best[c].is_none_or(|(_, bd)| d < bd) {
            best[c] = Some((t, d));
        }
    }
    let keyframes = best
        .into_iter()
        .enumerate()
        .filter_map(|(c, b)| {
            b.map(|(t, d)| Keyframe {
                unit_index: c,
                frame_index: t,
                timing_seconds: t as f64 / fps,
                score: Some(d.sqrt()),
            })
        })
        .collect();
    Summary::new(Scheme::Kmeans, fps, keyframes)
}

/// k-means baseline over 32x32 RGB frames.
pub fn kmeans_keyframes(pixels: &FeatureMatrix, k: usize, runs: usize) -> Result<Summary> {
    if pixels.modality() != Modality::Pixels {
        return Err(Error::Data(format!(
            "k-means baseline needs pixel features, got {}",
            pixels.modality()
        )));
    }
    pixels.check_nominal_dim()?;
    let points = pixels.to_f64();
    let result = best_of_runs(points.view(), k, runs, DEFAULT_MAX_ITER)?;
    Ok(cluster_keyframes(
        points.view(),
        &result,
        pixels.fps() as f64,
    ))
}
