//! Concurrent training of a subject RBM and a scene RBM whose hidden units are
//! tied position-by-position through cross-entropy co-regularization.
//!
//! For each aligned minibatch, each model's update is its CD log-likelihood
//! gradient minus `lambda` times the gradient of
//! `-(1/B) sum_{i,k} [t log z + (1 - t) log(1 - z)]`, where `z` are the model's
//! own hidden probabilities and `t` is the *other* model's sparsified hidden
//! representation, held constant.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Modality};
use crate::rbm::{clamped_ln, GradientEstimate, Rbm, LOG_CLAMP};

pub const PAIR_MAGIC: [u8; 4] = *b"PAIR";

/// Ratio of the geometric sparsity profile.
pub const SPARSITY_RATIO: f64 = 0.5;

/// Hyperparameters for [`train_pair`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda_subject: f64,
    pub lambda_scene: f64,
    /// Target mean activation per unit; `None` means `1 / k_units`.
    pub sparsity_target: Option<f64>,
    pub learning_rate: f64,
    pub cd_steps: usize,
    pub minibatch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub k_units: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_subject: 0.5,
            lambda_scene: 0.5,
            sparsity_target: None,
            learning_rate: 0.05,
            cd_steps: 1,
            minibatch_size: 32,
            epochs: 200,
            seed: 0,
            k_units: 8,
        }
    }
}

const CONFIG_KEYS: [&str; 9] = [
    "lambda_subject",
    "lambda_scene",
    "sparsity_target",
    "learning_rate",
    "cd_steps",
    "minibatch_size",
    "epochs",
    "seed",
    "k_units",
];

impl TrainConfig {
    pub fn sparsity(&self) -> f64 {
        self.sparsity_target.unwrap_or(1.0 / self.k_units as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for (name, lambda) in [
            ("lambda_subject", self.lambda_subject),
            ("lambda_scene", self.lambda_scene),
        ] {
            if !(lambda.is_finite() && lambda >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {lambda}"));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if self.cd_steps == 0 {
            return bad("cd_steps must be >= 1".into());
        }
        if self.minibatch_size < 2 {
            return bad(format!(
                "minibatch_size must be >= 2, got {}",
                self.minibatch_size
            ));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.k_units == 0 {
            return bad("k_units must be >= 1".into());
        }
        check_sparsity(self.sparsity())
    }

    /// Applies `key=value` lines on top of the defaults.
    ///
    /// Blank lines and `#` comments are ignored; unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected key=value, got {raw:?}",
                    lineno + 1
                ))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
        }
        match key {
            "lambda_subject" => self.lambda_subject = num(key, value)?,
            "lambda_scene" => self.lambda_scene = num(key, value)?,
            "sparsity_target" => {
                self.sparsity_target = if value == "auto" {
                    None
                } else {
                    Some(num(key, value)?)
                }
            }
            "learning_rate" => self.learning_rate = num(key, value)?,
            "cd_steps" => self.cd_steps = num(key, value)?,
            "minibatch_size" => self.minibatch_size = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "k_units" => self.k_units = num(key, value)?,
            other => {
                return Err(Error::Config(format!(
                    "unknown key {other:?}; expected one of {}",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// `(key, value)` pairs in canonical order, suitable for [`TrainConfig::parse`].
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("lambda_subject", self.lambda_subject.to_string()),
            ("lambda_scene", self.lambda_scene.to_string()),
            (
                "sparsity_target",
                self.sparsity_target
                    .map_or("auto".to_string(), |m| m.to_string()),
            ),
            ("learning_rate", self.learning_rate.to_string()),
            ("cd_steps", self.cd_steps.to_string()),
            ("minibatch_size", self.minibatch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("k_units", self.k_units.to_string()),
        ]
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.entries() {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

fn check_sparsity(mu: f64) -> Result<()> {
    if !(mu > LOG_CLAMP && mu < 1.0 - LOG_CLAMP) {
        return Err(Error::Config(format!(
            "sparsity target must lie strictly inside ({LOG_CLAMP}, {}), got {mu}",
            1.0 - LOG_CLAMP
        )));
    }
    Ok(())
}

/// Which of the two models a computation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Subject,
    Scene,
}

impl Side {
    fn init_stream(self) -> u64 {
        match self {
            Side::Subject => 1,
            Side::Scene => 2,
        }
    }

    fn sampling_stream(self) -> u64 {
        match self {
            Side::Subject => 3,
            Side::Scene => 4,
        }
    }
}

/// Independent random streams derived from one seed. Paired and single-model
/// training draw from identical streams, so with `lambda = 0` they coincide.
#[derive(Debug, Clone, Copy)]
pub struct SeedSchedule {
    seed: u64,
}

impl SeedSchedule {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn stream(self, id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id);
        rng
    }

    pub fn shuffle_rng(self) -> ChaCha8Rng {
        self.stream(0)
    }

    pub fn init_rng(self, side: Side) -> ChaCha8Rng {
        self.stream(side.init_stream())
    }

    pub fn sampling_rng(self, side: Side) -> ChaCha8Rng {
        self.stream(side.sampling_stream())
    }
}

/// Decreasing per-rank targets of length `rows` with mean exactly `mu`.
///
/// Starts from the geometric profile `c * q^r` (rank 0 = strongest response),
/// then bounds entries to `[1e-7, 1 - 1e-7]`, rescaling the unbounded entries
/// until the mean is restored.
pub fn sparsity_profile(rows: usize, mu: f64) -> Result<Vec<f64>> {
    if rows < 2 {
        return Err(Error::Batch(format!(
            "sparsification needs >= 2 rows, got {rows}"
        )));
    }
    check_sparsity(mu)?;
    let (lo, hi) = (LOG_CLAMP, 1.0 - LOG_CLAMP);
    let q = SPARSITY_RATIO;
    let scale = mu * rows as f64 * (1.0 - q) / (1.0 - q.powi(rows as i32));
    let base: Vec<f64> = (0..rows).map(|r| scale * q.powi(r as i32)).collect();
    let target = mu * rows as f64;

    let mut fixed: Vec<Option<f64>> = vec![None; rows];
    loop {
        let fixed_sum: f64 = fixed.iter().flatten().sum();
        let free_sum: f64 = base
            .iter()
            .zip(&fixed)
            .filter(|(_, f)| f.is_none())
            .map(|(b, _)| b)
            .sum();
        if free_sum == 0.0 {
            break;
        }
        let s = (target - fixed_sum) / free_sum;
        let free = || (0..rows).filter(|&r| fixed[r].is_none());
        let over: Vec<usize> = free().filter(|&r| s * base[r] > hi).collect();
        let violators = if !over.is_empty() {
            over.into_iter().map(|r| (r, hi)).collect::<Vec<_>>()
        } else {
            free()
                .filter(|&r| s * base[r] < lo)
                .map(|r| (r, lo))
                .collect()
        };
        if violators.is_empty() {
            return Ok((0..rows).map(|r| fixed[r].unwrap_or(s * base[r])).collect());
        }
        for (r, v) in violators {
            fixed[r] = Some(v);
        }
    }
    Ok(fixed.into_iter().map(|v| v.unwrap_or(lo)).collect())
}

/// Rank-based distribution sparsification of a minibatch of hidden probabilities.
///
/// In every column the entries are replaced by [`sparsity_profile`] values
/// according to their rank (largest input gets the largest target; ties go
/// to the lower row index first).
pub fn sparsify(z: ArrayView2<f64>, mu: f64) -> Result<Array2<f64>> {
    let rows = z.nrows();
    let profile = sparsity_profile(rows, mu)?;
    let mut out = Array2::zeros(z.raw_dim());
    let mut order: Vec<usize> = Vec::with_capacity(rows);
    for (k, col) in z.columns().into_iter().enumerate() {
        order.clear();
        order.extend(0..rows);
        // Stable sort keeps row order among equal values.
        order.sort_by(|&a, &b| col[b].total_cmp(&col[a]));
        for (rank, &row) in order.iter().enumerate() {
            out[[row, k]] = profile[rank];
        }
    }
    Ok(out)
}

/// Cross-entropy of `z_self` against constant `targets`, averaged over rows and
/// summed over units, with its gradient with respect to the pre-activations
/// that produced `z_self` through a logistic sigmoid.
pub fn coreg_penalty(
    z_self: ArrayView2<f64>,
    targets: ArrayView2<f64>,
) -> Result<(f64, Array2<f64>)> {
    if z_self.dim() != targets.dim() {
        return Err(Error::Dimension(format!(
            "penalty inputs {:?} and {:?} differ",
            z_self.dim(),
            targets.dim()
        )));
    }
    let rows = z_self.nrows();
    if rows == 0 {
        return Err(Error::Batch("empty batch".into()));
    }
    let inv = 1.0 / rows as f64;
    let mut loss = 0.0;
    for (&z, &t) in z_self.iter().zip(targets.iter()) {
        loss -= t * clamped_ln(z) + (1.0 - t) * clamped_ln(1.0 - z);
    }
    let grad = (&z_self - &targets) * inv;
    Ok((loss * inv, grad))
}

/// The subject and scene RBMs, sharing the hidden unit count `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedModel {
    subject: Rbm,
    scene: Rbm,
}

impl PairedModel {
    pub fn new(subject: Rbm, scene: Rbm) -> Result<Self> {
        if subject.hidden_units() != scene.hidden_units() {
            return Err(Error::Dimension(format!(
                "subject has K={}, scene has K={}",
                subject.hidden_units(),
                scene.hidden_units()
            )));
        }
        Ok(Self { subject, scene })
    }

    pub fn k(&self) -> usize {
        self.subject.hidden_units()
    }

    pub fn subject(&self) -> &Rbm {
        &self.subject
    }

    pub fn scene(&self) -> &Rbm {
        &self.scene
    }

    pub fn side(&self, side: Side) -> &Rbm {
        match side {
            Side::Subject => &self.subject,
            Side::Scene => &self.scene,
        }
    }

    /// The model that consumes features of `modality`.
    pub fn for_modality(&self, modality: Modality) -> Result<&Rbm> {
        match modality {
            Modality::Subject => Ok(&self.subject),
            Modality::Scene => Ok(&self.scene),
            Modality::Pixels => Err(Error::Dimension(
                "pixel features have no RBM in a paired model".into(),
            )),
        }
    }

    /// `"PAIR" | K u32 | subject CRBM block | scene CRBM block`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&PAIR_MAGIC);
        out.extend_from_slice(&(self.k() as u32).to_le_bytes());
        out.extend_from_slice(&self.subject.to_bytes());
        out.extend_from_slice(&self.scene.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || bytes[..4] != PAIR_MAGIC {
            return Err(Error::Format("missing PAIR magic".into()));
        }
        let k = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let (subject, used) = Rbm::from_bytes_prefix(&bytes[8..])?;
        let scene = Rbm::from_bytes(&bytes[8 + used..])?;
        if subject.hidden_units() != k || scene.hidden_units() != k {
            return Err(Error::Format(format!(
                "PAIR header says K={k}, blocks have {} and {}",
                subject.hidden_units(),
                scene.hidden_units()
            )));
        }
        Self::new(subject, scene)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Shuffled frame indices for one epoch, split into minibatches. A trailing
/// batch of a single frame is folded into the previous one.
fn epoch_batches(frames: usize, batch: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..frames).collect();
    order.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let tail = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(tail);
    }
    batches
}

fn check_unit_interval(data: ArrayView2<f64>, what: &str) -> Result<()> {
    if let Some(((t, d), v)) = data.indexed_iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Data(format!(
            "{what} features must be normalized to [0,1]; frame {t}, dim {d} is {v}"
        )));
    }
    Ok(())
}

/// Adds `-lambda * dPenalty/dtheta` to a CD direction, where `grad_pre` is the
/// penalty gradient with respect to the hidden pre-activations of `batch`.
fn subtract_penalty(
    direction: &mut GradientEstimate,
    batch: ArrayView2<f64>,
    grad_pre: &Array2<f64>,
    lambda: f64,
) {
    direction
        .weights
        .scaled_add(-lambda, &batch.t().dot(grad_pre));
    direction
        .hidden_bias
        .scaled_add(-lambda, &grad_pre.sum_axis(Axis(0)));
}

/// Trains one RBM by plain CD, consuming the same random streams that
/// [`train_pair`] uses for `side`. Calls `on_epoch(epoch, &model)` after each epoch.
pub fn train_single_with<F>(
    data: ArrayView2<f64>,
    cfg: &TrainConfig,
    side: Side,
    mut on_epoch: F,
) -> Result<Rbm>
where
    F: FnMut(usize, &Rbm),
{
    cfg.validate()?;
    if data.nrows() < 2 {
        return Err(Error::Capacity("training needs at least two frames".into()));
    }
    check_unit_interval(data, "training")?;
    let schedule = SeedSchedule::new(cfg.seed);
    let mut shuffle = schedule.shuffle_rng();
    let mut sampling = schedule.sampling_rng(side);
    let mut rbm = Rbm::init(data.ncols(), cfg.k_units, &mut schedule.init_rng(side));
    for epoch in 0..cfg.epochs {
        for idx in epoch_batches(data.nrows(), cfg.minibatch_size, &mut shuffle) {
            let batch = data.select(Axis(0), &idx);
            let grad = rbm.cd_gradient(batch.view(), cfg.cd_steps, &mut sampling)?;
            rbm.step(&grad, cfg.learning_rate)?;
        }
        on_epoch(epoch, &rbm);
    }
    Ok(rbm)
}

pub fn train_single(x: &FeatureMatrix, cfg: &TrainConfig, side: Side) -> Result<Rbm> {
    train_single_with(x.to_f64().view(), cfg, side, |_, _| {})
}

fn check_aligned(x_subject: &FeatureMatrix, x_scene: &FeatureMatrix) -> Result<()> {
    if x_subject.frames() != x_scene.frames() {
        return Err(Error::Alignment(format!(
            "subject has {} frames, scene has {}",
            x_subject.frames(),
            x_scene.frames()
        )));
    }
    if x_subject.fps() != x_scene.fps() {
        return Err(Error::Alignment(format!(
            "subject sampled at {} fps, scene at {}",
            x_subject.fps(),
            x_scene.fps()
        )));
    }
    Ok(())
}

/// Trains the co-regularized pair on aligned, `[0,1]`-normalized features.
pub fn train_pair(
    x_subject: &FeatureMatrix,
    x_scene: &FeatureMatrix,
    cfg: &TrainConfig,
) -> Result<PairedModel> {
    train_pair_with(x_subject, x_scene, cfg, |_, _| {})
}

/// [`train_pair`] with a callback invoked after every epoch.
pub fn train_pair_with<F>(
    x_subject: &FeatureMatrix,
    x_scene: &FeatureMatrix,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<PairedModel>
where
    F: FnMut(usize, &PairedModel),
{
    cfg.validate()?;
    check_aligned(x_subject, x_scene)?;
    for (m, want) in [(x_subject, Modality::Subject), (x_scene, Modality::Scene)] {
        if m.modality() != want {
            return Err(Error::Data(format!(
                "expected {want} features, got {}",
                m.modality()
            )));
        }
    }
    if x_subject.frames() < 2 {
        return Err(Error::Capacity("training needs at least two frames".into()));
    }
    let subject_data = x_subject.to_f64();
    let scene_data = x_scene.to_f64();
    check_unit_interval(subject_data.view(), "subject")?;
    check_unit_interval(scene_data.view(), "scene")?;

    let schedule = SeedSchedule::new(cfg.seed);
    let mut shuffle = schedule.shuffle_rng();
    let mut subject_rng = schedule.sampling_rng(Side::Subject);
    let mut scene_rng = schedule.sampling_rng(Side::Scene);
    let mut model = PairedModel::new(
        Rbm::init(
            x_subject.dim(),
            cfg.k_units,
            &mut schedule.init_rng(Side::Subject),
        ),
        Rbm::init(
            x_scene.dim(),
            cfg.k_units,
            &mut schedule.init_rng(Side::Scene),
        ),
    )?;
    let mu = cfg.sparsity();

    for epoch in 0..cfg.epochs {
        for idx in epoch_batches(x_subject.frames(), cfg.minibatch_size, &mut shuffle) {
            let vs = subject_data.select(Axis(0), &idx);
            let vc = scene_data.select(Axis(0), &idx);
            // Both gradients read the pre-update parameters.
            let (subject_cd, scene_cd) = rayon::join(
                || {
                    model
                        .subject
                        .cd_gradient_with_hidden(vs.view(), cfg.cd_steps, &mut subject_rng)
                },
                || {
                    model
                        .scene
                        .cd_gradient_with_hidden(vc.view(), cfg.cd_steps, &mut scene_rng)
                },
            );
            let (mut subject_dir, z_subject) = subject_cd?;
            let (mut scene_dir, z_scene) = scene_cd?;

            if cfg.lambda_subject > 0.0 {
                let targets = sparsify(z_scene.view(), mu)?;
                let (_, grad) = coreg_penalty(z_subject.view(), targets.view())?;
                subtract_penalty(&mut subject_dir, vs.view(), &grad, cfg.lambda_subject);
            }
            if cfg.lambda_scene > 0.0 {
                let targets = sparsify(z_subject.view(), mu)?;
                let (_, grad) = coreg_penalty(z_scene.view(), targets.view())?;
                subtract_penalty(&mut scene_dir, vc.view(), &grad, cfg.lambda_scene);
            }

            model.subject.step(&subject_dir, cfg.learning_rate)?;
            model.scene.step(&scene_dir, cfg.learning_rate)?;
        }
        on_epoch(epoch, &model);
    }
    Ok(model)
}
