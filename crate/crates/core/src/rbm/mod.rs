//! Bernoulli-Bernoulli restricted Boltzmann machine.
//!
//! Energy of a joint state is `E(v, h) = -v'Wh - b_v'v - b_h'h` with `W` stored
//! as a `D x K` matrix (visible rows, hidden columns).

mod exact;

pub use exact::{
    exact_gradient, log_likelihood, log_partition, visible_distribution, MAX_ENUMERATED_UNITS,
};

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CRBM";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Floor/ceiling applied to probabilities before taking logs.
pub const LOG_CLAMP: f64 = 1e-7;

/// Conditionals are kept this far away from exactly 0 or 1.
const PROB_EDGE: f64 = 1e-15;

/// Standard deviation of the Gaussian weight initializer.
pub const INIT_WEIGHT_STD: f64 = 0.01;

pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(PROB_EDGE, 1.0 - PROB_EDGE)
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Clamped natural log used by every cross-entropy term.
pub(crate) fn clamped_ln(p: f64) -> f64 {
    p.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMethod {
    ContrastiveDivergence,
    Exact,
}

/// Log-likelihood ascent direction for every parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub weights: Array2<f64>,
    pub hidden_bias: Array1<f64>,
    pub visible_bias: Array1<f64>,
    pub method: GradientMethod,
}

impl GradientEstimate {
    pub fn zeros_like(rbm: &Rbm, method: GradientMethod) -> Self {
        Self {
            weights: Array2::zeros(rbm.weights.raw_dim()),
            hidden_bias: Array1::zeros(rbm.hidden_units()),
            visible_bias: Array1::zeros(rbm.visible_units()),
            method,
        }
    }

    /// All entries in `W`, `b_hidden`, `b_visible` order.
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .chain(self.hidden_bias.iter())
            .chain(self.visible_bias.iter())
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rbm {
    weights: Array2<f64>,
    hidden_bias: Array1<f64>,
    visible_bias: Array1<f64>,
}

impl Rbm {
    pub fn from_parts(
        weights: Array2<f64>,
        hidden_bias: Array1<f64>,
        visible_bias: Array1<f64>,
    ) -> Result<Self> {
        let (d, k) = weights.dim();
        if d == 0 || k == 0 {
            return Err(Error::Dimension(format!("empty weight matrix {d}x{k}")));
        }
        if hidden_bias.len() != k || visible_bias.len() != d {
            return Err(Error::Dimension(format!(
                "weights {d}x{k} with {} hidden and {} visible biases",
                hidden_bias.len(),
                visible_bias.len()
            )));
        }
        let all = weights
            .iter()
            .chain(hidden_bias.iter())
            .chain(visible_bias.iter());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::Data("RBM parameters must be finite".into()));
        }
        Ok(Self {
            weights,
            hidden_bias,
            visible_bias,
        })
    }

    pub fn zeros(visible: usize, hidden: usize) -> Self {
        Self::from_parts(
            Array2::zeros((visible, hidden)),
            Array1::zeros(hidden),
            Array1::zeros(visible),
        )
        .expect("non-empty shape")
    }

    /// Weights ~ N(0, 0.01^2), biases zero.
    pub fn init<R: Rng + ?Sized>(visible: usize, hidden: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, INIT_WEIGHT_STD).expect("valid std");
        let mut rbm = Self::zeros(visible, hidden);
        rbm.weights.iter_mut().for_each(|w| *w = normal.sample(rng));
        rbm
    }

    pub fn visible_units(&self) -> usize {
        self.weights.nrows()
    }

    pub fn hidden_units(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn hidden_bias(&self) -> &Array1<f64> {
        &self.hidden_bias
    }

    pub fn visible_bias(&self) -> &Array1<f64> {
        &self.visible_bias
    }

    /// The same energy with visible and hidden layers exchanged.
    pub fn transposed(&self) -> Self {
        Self {
            weights: self.weights.t().to_owned(),
            hidden_bias: self.visible_bias.clone(),
            visible_bias: self.hidden_bias.clone(),
        }
    }

    fn check_visible(&self, d: usize) -> Result<()> {
        if d != self.visible_units() {
            return Err(Error::Dimension(format!(
                "expected {} visible values, got {d}",
                self.visible_units()
            )));
        }
        Ok(())
    }

    fn check_hidden(&self, k: usize) -> Result<()> {
        if k != self.hidden_units() {
            return Err(Error::Dimension(format!(
                "expected {} hidden values, got {k}",
                self.hidden_units()
            )));
        }
        Ok(())
    }

    /// Hidden pre-activations `V W + b_h` for a batch of rows.
    pub fn hidden_preactivations(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_visible(batch.ncols())?;
        Ok(batch.dot(&self.weights) + &self.hidden_bias)
    }

    /// `P(h_k = 1 | v)` for each unit.
    pub fn hidden_probs(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_visible(v.len())?;
        Ok((v.dot(&self.weights) + &self.hidden_bias).mapv(sigmoid))
    }

    /// Row-wise [`Rbm::hidden_probs`] for a `B x D` batch.
    pub fn hidden_probs_batch(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.hidden_preactivations(batch)?.mapv(sigmoid))
    }

    /// `P(v_d = 1 | h)` for each visible unit.
    pub fn visible_probs(&self, h: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_hidden(h.len())?;
        Ok((self.weights.dot(&h) + &self.visible_bias).mapv(sigmoid))
    }

    pub fn visible_probs_batch(&self, hidden: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_hidden(hidden.ncols())?;
        Ok((hidden.dot(&self.weights.t()) + &self.visible_bias).mapv(sigmoid))
    }

    /// `F(v) = -b_v'v - sum_k softplus(w_k'v + b_h,k)`, so that `P(v) ∝ exp(-F(v))`.
    pub fn free_energy(&self, v: ArrayView1<f64>) -> Result<f64> {
        self.check_visible(v.len())?;
        let pre = v.dot(&self.weights) + &self.hidden_bias;
        Ok(-self.visible_bias.dot(&v) - pre.iter().map(|&x| softplus(x)).sum::<f64>())
    }

    /// Runs `steps` rounds of block Gibbs sampling from `v0`.
    ///
    /// Returns the last visible sample and the hidden probabilities given it.
    pub fn gibbs_chain<R: Rng + ?Sized>(
        &self,
        v0: ArrayView1<f64>,
        steps: usize,
        rng: &mut R,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let batch = v0.insert_axis(Axis(0));
        let (v, h) = self.gibbs_batch(batch, steps, rng)?;
        Ok((v.row(0).to_owned(), h.row(0).to_owned()))
    }

    /// Independent Gibbs chains, one per row. Random draws are consumed in
    /// row-major order: hidden layer, then visible layer, once per step.
    pub fn gibbs_batch<R: Rng + ?Sized>(
        &self,
        v0: ArrayView2<f64>,
        steps: usize,
        rng: &mut R,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        if steps == 0 {
            return Err(Error::Config("Gibbs chain needs at least one step".into()));
        }
        let mut v = v0.to_owned();
        let mut h_probs = self.hidden_probs_batch(v.view())?;
        for _ in 0..steps {
            let h = h_probs.mapv(|p| bernoulli(p, rng));
            v = self
                .visible_probs_batch(h.view())?
                .mapv(|p| bernoulli(p, rng));
            h_probs = self.hidden_probs_batch(v.view())?;
        }
        Ok((v, h_probs))
    }

    /// CD-`steps` estimate of the mean log-likelihood gradient over `batch`.
    ///
    /// The positive phase uses data-clamped hidden probabilities; the negative
    /// phase uses the sampled reconstruction and its hidden probabilities.
    pub fn cd_gradient<R: Rng + ?Sized>(
        &self,
        batch: ArrayView2<f64>,
        steps: usize,
        rng: &mut R,
    ) -> Result<GradientEstimate> {
        Ok(self.cd_gradient_with_hidden(batch, steps, rng)?.0)
    }

    /// As [`Rbm::cd_gradient`], also returning the positive-phase hidden probabilities.
    pub(crate) fn cd_gradient_with_hidden<R: Rng + ?Sized>(
        &self,
        batch: ArrayView2<f64>,
        steps: usize,
        rng: &mut R,
    ) -> Result<(GradientEstimate, Array2<f64>)> {
        self.check_visible(batch.ncols())?;
        let rows = batch.nrows();
        if rows == 0 {
            return Err(Error::Batch("empty batch".into()));
        }
        let h_data = self.hidden_probs_batch(batch)?;
        let (v_model, h_model) = self.gibbs_batch(batch, steps, rng)?;
        let scale = 1.0 / rows as f64;
        let weights = (batch.t().dot(&h_data) - v_model.t().dot(&h_model)) * scale;
        let hidden_bias = (h_data.sum_axis(Axis(0)) - h_model.sum_axis(Axis(0))) * scale;
        let visible_bias = (batch.sum_axis(Axis(0)) - v_model.sum_axis(Axis(0))) * scale;
        let grad = GradientEstimate {
            weights,
            hidden_bias,
            visible_bias,
            method: GradientMethod::ContrastiveDivergence,
        };
        Ok((grad, h_data))
    }

    /// Moves the parameters `learning_rate` along `direction`.
    pub fn step(&mut self, direction: &GradientEstimate, learning_rate: f64) -> Result<()> {
        if direction.weights.dim() != self.weights.dim()
            || direction.hidden_bias.len() != self.hidden_units()
            || direction.visible_bias.len() != self.visible_units()
        {
            return Err(Error::Dimension(
                "gradient shape does not match model".into(),
            ));
        }
        self.weights.scaled_add(learning_rate, &direction.weights);
        self.hidden_bias
            .scaled_add(learning_rate, &direction.hidden_bias);
        self.visible_bias
            .scaled_add(learning_rate, &direction.visible_bias);
        if self.weights.iter().any(|v| !v.is_finite())
            || self.hidden_bias.iter().any(|v| !v.is_finite())
            || self.visible_bias.iter().any(|v| !v.is_finite())
        {
            return Err(Error::Data(
                "parameters diverged to non-finite values".into(),
            ));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let count = self.weights.len() + self.hidden_units() + self.visible_units();
        let mut out = Vec::with_capacity(16 + 8 * count);
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.visible_units() as u32).to_le_bytes());
        out.extend_from_slice(&(self.hidden_units() as u32).to_le_bytes());
        let params = self
            .weights
            .iter()
            .chain(self.hidden_bias.iter())
            .chain(self.visible_bias.iter());
        for v in params {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses one checkpoint block and returns it with the bytes consumed.
    pub fn from_bytes_prefix(bytes: &[u8]) -> Result<(Self, usize)> {
        if bytes.len() < 16 || bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Format("missing CRBM magic".into()));
        }
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let d = u32_at(8) as usize;
        let k = u32_at(12) as usize;
        let count = d * k + k + d;
        let needed = 16 + 8 * count;
        if bytes.len() < needed {
            return Err(Error::Truncated {
                expected: needed as u64,
                found: bytes.len() as u64,
            });
        }
        let mut values = bytes[16..needed]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let weights = Array2::from_shape_fn((d, k), |_| values.next().unwrap());
        let hidden_bias = Array1::from_iter(values.by_ref().take(k));
        let visible_bias = Array1::from_iter(values.take(d));
        Ok((
            Self::from_parts(weights, hidden_bias, visible_bias)?,
            needed,
        ))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (rbm, used) = Self::from_bytes_prefix(bytes)?;
        if used != bytes.len() {
            return Err(Error::Truncated {
                expected: used as u64,
                found: bytes.len() as u64,
            });
        }
        Ok(rbm)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

/// Deterministic generator used throughout the crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
