#![allow(dead_code)]

use crbm_core::rbm::{seeded_rng, GradientEstimate, Rbm};
use ndarray::{Array1, Array2};
use rand::Rng;

/// Parameters drawn from U[-1, 1].
pub fn random_rbm(d: usize, k: usize, seed: u64) -> Rbm {
    let mut rng = seeded_rng(seed);
    let mut u = || rng.random_range(-1.0..1.0);
    Rbm::from_parts(
        Array2::from_shape_simple_fn((d, k), &mut u),
        Array1::from_shape_simple_fn(k, &mut u),
        Array1::from_shape_simple_fn(d, &mut u),
    )
    .unwrap()
}

pub fn random_binary(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = seeded_rng(seed);
    Array2::from_shape_simple_fn(
        (rows, cols),
        || if rng.random::<bool>() { 1.0 } else { 0.0 },
    )
}

/// Rebuilds `rbm` with one flattened parameter (W, b_hidden, b_visible order) shifted.
pub fn perturb(rbm: &Rbm, index: usize, delta: f64) -> Rbm {
    let mut w = rbm.weights().clone();
    let mut bh = rbm.hidden_bias().clone();
    let mut bv = rbm.visible_bias().clone();
    let nw = w.len();
    let nh = bh.len();
    if index < nw {
        let k = w.ncols();
        w[[index / k, index % k]] += delta;
    } else if index < nw + nh {
        bh[index - nw] += delta;
    } else {
        bv[index - nw - nh] += delta;
    }
    Rbm::from_parts(w, bh, bv).unwrap()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `||a - b|| / max(||a||, ||b||)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(f64::MIN_POSITIVE)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (norm(a) * norm(b))
}

pub fn grad_len(g: &GradientEstimate) -> usize {
    g.flatten().len()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// Brute-force `log Z` summing the joint energy over every (v, h) state.
pub fn brute_log_partition(rbm: &Rbm) -> f64 {
    let d = rbm.visible_units();
    let k = rbm.hidden_units();
    let mut terms = Vec::new();
    for vs in 0..(1usize << d) {
        for hs in 0..(1usize << k) {
            terms.push(-joint_energy(rbm, vs, hs));
        }
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `E(v, h)` with states given as bit patterns.
pub fn joint_energy(rbm: &Rbm, vs: usize, hs: usize) -> f64 {
    let d = rbm.visible_units();
    let k = rbm.hidden_units();
    let v: Vec<f64> = (0..d).map(|i| ((vs >> i) & 1) as f64).collect();
    let h: Vec<f64> = (0..k).map(|j| ((hs >> j) & 1) as f64).collect();
    let mut e = 0.0;
    for (i, &vi) in v.iter().enumerate() {
        e -= rbm.visible_bias()[i] * vi;
        for (j, &hj) in h.iter().enumerate() {
            e -= vi * rbm.weights()[[i, j]] * hj;
        }
    }
    for (j, &hj) in h.iter().enumerate() {
        e -= rbm.hidden_bias()[j] * hj;
    }
    e
}
