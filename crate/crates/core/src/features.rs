//! Per-frame descriptor matrices and the `CRBF` feature file format.
//!
//! Layout (little-endian):
//!
//! ```text
//! "CRBF" | version u32 = 1 | T u32 | D u32 | fps f32 | modality u8 | 3 zero bytes
//!        | label block length u32 L | L bytes of newline-separated UTF-8 labels
//!        | T*D f32 payload, row-major
//! ```
//!
//! No trailing bytes are allowed.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: [u8; 4] = *b"CRBF";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 28;

/// Which descriptor family a matrix holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Subject,
    Scene,
    Pixels,
}

impl Modality {
    /// Descriptor width produced by the reference extractor for this modality.
    pub fn nominal_dim(self) -> usize {
        match self {
            Modality::Subject => 1000,
            Modality::Scene => 205,
            Modality::Pixels => 32 * 32 * 3,
        }
    }

    fn code(self) -> u8 {
        match self {
            Modality::Subject => 0,
            Modality::Scene => 1,
            Modality::Pixels => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Modality::Subject),
            1 => Ok(Modality::Scene),
            2 => Ok(Modality::Pixels),
            other => Err(Error::Format(format!("unknown modality code {other}"))),
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Subject => "subject",
            Modality::Scene => "scene",
            Modality::Pixels => "pixels",
        })
    }
}

/// Names for each descriptor dimension of one modality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryLabels {
    labels: Vec<String>,
    modality: Modality,
}

impl CategoryLabels {
    pub fn new(labels: Vec<String>, modality: Modality) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|l| l.is_empty() || l.contains('\n')) {
            return Err(Error::Label(format!("invalid label {bad:?}")));
        }
        Ok(Self { labels, modality })
    }

    /// Parses newline-separated labels; blank lines and `#` comments are skipped.
    pub fn parse(text: &str, modality: Modality) -> Result<Self> {
        let labels = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_owned)
            .collect();
        Self::new(labels, modality)
    }

    pub fn read(path: impl AsRef<Path>, modality: Modality) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?, modality)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn get(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn as_slice(&self) -> &[String] {
        &self.labels
    }
}

/// A `T x D` matrix of per-frame descriptors sampled at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f32>,
    fps: f32,
    modality: Modality,
    labels: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(data: Array2<f32>, fps: f32, modality: Modality) -> Result<Self> {
        Self::with_labels(data, fps, modality, Vec::new())
    }

    /// `labels` must be empty or hold exactly one entry per column.
    pub fn with_labels(
        data: Array2<f32>,
        fps: f32,
        modality: Modality,
        labels: Vec<String>,
    ) -> Result<Self> {
        let (frames, dim) = data.dim();
        if frames == 0 || dim == 0 {
            return Err(Error::Dimension(format!(
                "feature matrix must be non-empty, got {frames}x{dim}"
            )));
        }
        if frames > u32::MAX as usize || dim > u32::MAX as usize {
            return Err(Error::Capacity(format!("{frames}x{dim} exceeds u32 range")));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::Data(format!(
                "fps must be positive and finite, got {fps}"
            )));
        }
        if let Some(((t, d), v)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value {v} at frame {t}, dim {d}"
            )));
        }
        if !labels.is_empty() {
            if labels.len() != dim {
                return Err(Error::Label(format!(
                    "{} labels for {dim} dimensions",
                    labels.len()
                )));
            }
            CategoryLabels::new(labels.clone(), modality)?;
        }
        Ok(Self {
            data,
            fps,
            modality,
            labels,
        })
    }

    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn fps(&self) -> f32 {
        self.fps
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn data(&self) -> &Array2<f32> {
        &self.data
    }

    /// Frame timestamp in seconds.
    pub fn timing(&self, frame: usize) -> f64 {
        frame as f64 / self.fps as f64
    }

    /// Duration covered by the sampled frames, `T / fps`.
    pub fn duration(&self) -> f64 {
        self.frames() as f64 / self.fps as f64
    }

    /// Embedded dimension labels, if the file carried any.
    pub fn labels(&self) -> Option<CategoryLabels> {
        if self.labels.is_empty() {
            None
        } else {
            Some(CategoryLabels {
                labels: self.labels.clone(),
                modality: self.modality,
            })
        }
    }

    /// Data widened to `f64` for numerical work.
    pub fn to_f64(&self) -> Array2<f64> {
        self.data.mapv(f64::from)
    }

    /// Checks the column count against the modality's reference width.
    pub fn check_nominal_dim(&self) -> Result<()> {
        let expected = self.modality.nominal_dim();
        if self.dim() != expected {
            return Err(Error::Dimension(format!(
                "{} features have D={}, expected {expected}",
                self.modality,
                self.dim()
            )));
        }
        Ok(())
    }

    /// Stacks matrices of the same modality, width and rate along the frame axis.
    pub fn concat(parts: &[FeatureMatrix]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dimension("nothing to concatenate".into()))?;
        for p in &parts[1..] {
            if p.dim() != first.dim() || p.modality != first.modality {
                return Err(Error::Dimension(format!(
                    "cannot concatenate {} D={} with {} D={}",
                    first.modality,
                    first.dim(),
                    p.modality,
                    p.dim()
                )));
            }
            if p.fps != first.fps {
                return Err(Error::Alignment(format!(
                    "fps {} differs from {}",
                    p.fps, first.fps
                )));
            }
        }
        let views: Vec<_> = parts.iter().map(|p| p.data.view()).collect();
        let data =
            ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Dimension(e.to_string()))?;
        Self::with_labels(data, first.fps, first.modality, first.labels.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let label_block = self.labels.join("\n");
        let mut out = Vec::with_capacity(HEADER_LEN + label_block.len() + 4 * self.data.len());
        out.extend_from_slice(&FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.frames() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        out.extend_from_slice(&self.fps.to_le_bytes());
        out.push(self.modality.code());
        out.extend_from_slice(&[0u8; 3]);
        out.extend_from_slice(&(label_block.len() as u32).to_le_bytes());
        out.extend_from_slice(label_block.as_bytes());
        for v in self.data.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || bytes[..4] != FEATURE_MAGIC {
            return Err(Error::Format("missing CRBF magic".into()));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "header needs {HEADER_LEN} bytes, file has {}",
                bytes.len()
            )));
        }
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != FEATURE_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let frames = u32_at(8) as usize;
        let dim = u32_at(12) as usize;
        let fps = f32::from_le_bytes(bytes[16..20].try_into().unwrap());
        let modality = Modality::from_code(bytes[20])?;
        if bytes[21..24] != [0, 0, 0] {
            return Err(Error::Format("non-zero padding bytes".into()));
        }
        let label_len = u32_at(24) as usize;

        let payload_len = (frames as u64) * (dim as u64) * 4;
        let expected = HEADER_LEN as u64 + label_len as u64 + payload_len;
        if bytes.len() as u64 != expected {
            return Err(Error::Truncated {
                expected,
                found: bytes.len() as u64,
            });
        }

        let label_bytes = &bytes[HEADER_LEN..HEADER_LEN + label_len];
        let labels = if label_len == 0 {
            Vec::new()
        } else {
            let text = std::str::from_utf8(label_bytes)
                .map_err(|e| Error::Format(format!("label block is not UTF-8: {e}")))?;
            text.split('\n').map(str::to_owned).collect::<Vec<_>>()
        };
        if !labels.is_empty() && labels.len() != dim {
            return Err(Error::Format(format!(
                "label block holds {} labels for D={dim}",
                labels.len()
            )));
        }

        let payload = &bytes[HEADER_LEN + label_len..];
        let values: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let data = Array2::from_shape_vec((frames, dim), values)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        Self::with_labels(data, fps, modality, labels)
    }
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    FeatureMatrix::from_bytes(&fs::read(path)?)
}

pub fn write_features(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, m.to_bytes())?;
    Ok(())
}

/// How raw descriptors are mapped into `[0, 1]` before they reach an RBM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeMode {
    /// Each column's observed min maps to 0 and max to 1; constant columns map to 0.
    #[default]
    MinmaxPerDim,
    /// Row softmax, then the row is rescaled so its largest entry is 1.
    SoftmaxPerFrame,
}

impl FromStr for NormalizeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minmax" | "minmax_per_dim" => Ok(Self::MinmaxPerDim),
            "softmax" | "softmax_per_frame" => Ok(Self::SoftmaxPerFrame),
            other => Err(Error::Config(format!("unknown normalization {other:?}"))),
        }
    }
}

pub fn normalize(m: &FeatureMatrix, mode: NormalizeMode) -> Result<FeatureMatrix> {
    let mut data = m.to_f64();
    match mode {
        NormalizeMode::MinmaxPerDim => {
            if m.frames() < 2 {
                return Err(Error::Capacity(
                    "min-max normalization needs at least two frames".into(),
                ));
            }
            for mut col in data.columns_mut() {
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let span = hi - lo;
                if span > 0.0 {
                    col.mapv_inplace(|v| ((v - lo) / span).clamp(0.0, 1.0));
                } else {
                    col.fill(0.0);
                }
            }
        }
        NormalizeMode::SoftmaxPerFrame => {
            for mut row in data.rows_mut() {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                row.mapv_inplace(|v| (v - max).exp());
                let sum: f64 = row.sum();
                row.mapv_inplace(|v| v / sum);
                // The largest entry is exp(0)/sum, so this puts it at exactly 1.
                let top = row.iter().copied().fold(0.0, f64::max);
                row.mapv_inplace(|v| (v / top).clamp(0.0, 1.0));
            }
        }
    }
    FeatureMatrix::with_labels(data.mapv(|v| v as f32), m.fps, m.modality, m.labels.clone())
}

/// Synthetic paired subject/scene data with a known latent assignment.
#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub subject: FeatureMatrix,
    pub scene: FeatureMatrix,
    /// Latent prototype index of every frame, shared by both modalities.
    pub assignment: Vec<usize>,
    pub subject_prototypes: Array2<f64>,
    pub scene_prototypes: Array2<f64>,
}

/// Generates `latents` prototypes per modality and emits `frames` frames at 1 fps.
///
/// Frames are split into `latents` contiguous segments of near-equal length,
/// visited in a seeded random order, so every latent occurs at least once.
/// Each frame is its segment's prototype plus `N(0, noise^2)` in both modalities.
pub fn synth_paired(frames: usize, latents: usize, noise: f64, seed: u64) -> Result<SyntheticPair> {
    if latents == 0 || frames < latents {
        return Err(Error::Capacity(format!(
            "need frames >= latents >= 1, got frames={frames}, latents={latents}"
        )));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::Config(format!("noise must be >= 0, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new(0.0f64, 1.0).expect("valid range");
    let subject_dim = Modality::Subject.nominal_dim();
    let scene_dim = Modality::Scene.nominal_dim();
    let subject_prototypes =
        Array2::from_shape_simple_fn((latents, subject_dim), || unit.sample(&mut rng));
    let scene_prototypes =
        Array2::from_shape_simple_fn((latents, scene_dim), || unit.sample(&mut rng));

    let mut order: Vec<usize> = (0..latents).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let assignment: Vec<usize> = (0..frames).map(|t| order[t * latents / frames]).collect();

    let gauss = Normal::new(0.0, noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut emit = |protos: &Array2<f64>| {
        let dim = protos.ncols();
        Array2::from_shape_fn((frames, dim), |(t, d)| {
            let base = protos[[assignment[t], d]];
            let jitter = if noise > 0.0 {
                gauss.sample(&mut rng)
            } else {
                0.0
            };
            (base + jitter) as f32
        })
    };
    let subject = emit(&subject_prototypes);
    let scene = emit(&scene_prototypes);

    Ok(SyntheticPair {
        subject: FeatureMatrix::new(subject, 1.0, Modality::Subject)?,
        scene: FeatureMatrix::new(scene, 1.0, Modality::Scene)?,
        assignment,
        subject_prototypes,
        scene_prototypes,
    })
}
