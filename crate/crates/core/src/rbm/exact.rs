//! Exact quantities for tiny models, by enumerating every visible state.
//!
//! Only usable when `D + K <= MAX_ENUMERATED_UNITS`; intended as a test oracle.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{GradientEstimate, GradientMethod, Rbm};
use crate::error::{Error, Result};

pub const MAX_ENUMERATED_UNITS: usize = 20;

fn check_capacity(rbm: &Rbm) -> Result<()> {
    let units = rbm.visible_units() + rbm.hidden_units();
    if units > MAX_ENUMERATED_UNITS {
        return Err(Error::Capacity(format!(
            "exact enumeration supports D + K <= {MAX_ENUMERATED_UNITS}, got {units}"
        )));
    }
    Ok(())
}

/// Every binary visible configuration; bit `d` of the row index is `v_d`.
fn all_visible_states(d: usize) -> Array2<f64> {
    Array2::from_shape_fn((1usize << d, d), |(s, i)| ((s >> i) & 1) as f64)
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn negative_free_energies(rbm: &Rbm, states: &Array2<f64>) -> Result<Vec<f64>> {
    states
        .rows()
        .into_iter()
        .map(|v| rbm.free_energy(v).map(|f| -f))
        .collect()
}

/// `log Z`, summing the hidden layer analytically.
pub fn log_partition(rbm: &Rbm) -> Result<f64> {
    check_capacity(rbm)?;
    let states = all_visible_states(rbm.visible_units());
    Ok(log_sum_exp(&negative_free_energies(rbm, &states)?))
}

/// Marginal `P(v)` of every visible state, indexed as in bit order (`v_d` is bit `d`).
pub fn visible_distribution(rbm: &Rbm) -> Result<Vec<f64>> {
    check_capacity(rbm)?;
    let states = all_visible_states(rbm.visible_units());
    let neg_f = negative_free_energies(rbm, &states)?;
    let log_z = log_sum_exp(&neg_f);
    Ok(neg_f.iter().map(|v| (v - log_z).exp()).collect())
}

/// Mean exact log-likelihood of the rows of `batch`.
pub fn log_likelihood(rbm: &Rbm, batch: ArrayView2<f64>) -> Result<f64> {
    let log_z = log_partition(rbm)?;
    if batch.nrows() == 0 {
        return Err(Error::Batch("empty batch".into()));
    }
    let mut total = 0.0;
    for v in batch.rows() {
        total -= rbm.free_energy(v)?;
    }
    Ok(total / batch.nrows() as f64 - log_z)
}

/// Exact gradient of [`log_likelihood`] with respect to every parameter.
pub fn exact_gradient(rbm: &Rbm, batch: ArrayView2<f64>) -> Result<GradientEstimate> {
    check_capacity(rbm)?;
    if batch.nrows() == 0 {
        return Err(Error::Batch("empty batch".into()));
    }
    let h_data = rbm.hidden_probs_batch(batch)?;
    let rows = batch.nrows() as f64;

    let states = all_visible_states(rbm.visible_units());
    let probs = Array1::from(visible_distribution(rbm)?);
    let h_model = rbm.hidden_probs_batch(states.view())?;
    let weighted_states = &states * &probs.view().insert_axis(Axis(1));

    let weights = batch.t().dot(&h_data) / rows - weighted_states.t().dot(&h_model);
    let hidden_bias = h_data.sum_axis(Axis(0)) / rows - h_model.t().dot(&probs);
    let visible_bias = batch.sum_axis(Axis(0)) / rows - states.t().dot(&probs);
    Ok(GradientEstimate {
        weights,
        hidden_bias,
        visible_bias,
        method: GradientMethod::Exact,
    })
}
