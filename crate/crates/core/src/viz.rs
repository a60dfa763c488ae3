//! Per-unit inspection: strongest frames, activation-weighted average frame
//! and strongest input categories read from the weight columns.

use std::fmt::Write as _;
use std::io::Write;

use ndarray::Axis;

use crate::coreg::PairedModel;
use crate::error::{Error, Result};
use crate::features::{CategoryLabels, FeatureMatrix, Modality};
use crate::rbm::Rbm;

pub const DEFAULT_TOP_FRAMES: usize = 100;
pub const DEFAULT_TOP_CATEGORIES: usize = 2;

pub const IMAGE_SIDE: usize = 32;
pub const IMAGE_CHANNELS: usize = 3;

/// A 32x32 RGB image, row-major with interleaved channels, values in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn get(&self, y: usize, x: usize, channel: usize) -> f64 {
        self.pixels[(y * IMAGE_SIDE + x) * IMAGE_CHANNELS + channel]
    }

    /// Binary PPM (P6, 8-bit).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        write!(out, "P6\n{IMAGE_SIDE} {IMAGE_SIDE}\n255\n").unwrap();
        out.extend(
            self.pixels
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        out
    }
}

fn check_unit(rbm: &Rbm, unit: usize) -> Result<()> {
    if unit >= rbm.hidden_units() {
        return Err(Error::Index(format!(
            "unit {unit} out of range for K={}",
            rbm.hidden_units()
        )));
    }
    Ok(())
}

/// The `n` frames that most strongly activate `unit` of the model matching
/// the features' modality, strongest first, earliest frame on ties.
pub fn top_frames(
    model: &PairedModel,
    features: &FeatureMatrix,
    unit: usize,
    n: usize,
) -> Result<Vec<(usize, f64)>> {
    let rbm = model.for_modality(features.modality())?;
    check_unit(rbm, unit)?;
    let probs = rbm.hidden_probs_batch(features.to_f64().view())?;
    let mut ranked: Vec<(usize, f64)> = probs.column(unit).iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(n);
    Ok(ranked)
}

/// Activation-weighted mean of the listed frames' pixels.
pub fn unit_average_image(top: &[(usize, f64)], pixels: &FeatureMatrix) -> Result<Image> {
    if pixels.modality() != Modality::Pixels {
        return Err(Error::Data(format!(
            "expected pixel features, got {}",
            pixels.modality()
        )));
    }
    pixels.check_nominal_dim()?;
    if let Some((t, a)) = top.iter().find(|(_, a)| !(a.is_finite() && *a >= 0.0)) {
        return Err(Error::Data(format!("frame {t} has invalid weight {a}")));
    }
    let total: f64 = top.iter().map(|(_, a)| a).sum();
    if total <= 0.0 {
        return Err(Error::DegenerateWeights);
    }
    let data = pixels.data();
    let mut acc = vec![0.0; pixels.dim()];
    for &(t, a) in top {
        if t >= pixels.frames() {
            return Err(Error::Index(format!(
                "frame {t} out of range for {} frames",
                pixels.frames()
            )));
        }
        for (dst, &src) in acc.iter_mut().zip(data.index_axis(Axis(0), t)) {
            *dst += a * f64::from(src);
        }
    }
    Ok(Image {
        pixels: acc.into_iter().map(|v| v / total).collect(),
    })
}

/// Input dimensions with the largest signed weight into `unit`.
pub fn top_categories(
    rbm: &Rbm,
    labels: &CategoryLabels,
    unit: usize,
    n: usize,
) -> Result<Vec<(String, f64)>> {
    check_unit(rbm, unit)?;
    if labels.len() != rbm.visible_units() {
        return Err(Error::Label(format!(
            "{} labels for {} visible units",
            labels.len(),
            rbm.visible_units()
        )));
    }
    let column = rbm.weights().column(unit);
    let mut order: Vec<usize> = (0..column.len()).collect();
    order.sort_by(|&a, &b| column[b].total_cmp(&column[a]).then(a.cmp(&b)));
    Ok(order
        .into_iter()
        .take(n)
        .map(|d| (labels.as_slice()[d].clone(), column[d]))
        .collect())
}

/// One modality's view of a unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitView {
    pub modality: Modality,
    pub top_frames: Vec<(usize, f64)>,
    pub top_categories: Option<Vec<(String, f64)>>,
    pub average_image: Option<Image>,
}

/// Unit `k` of the subject model next to unit `k` of the scene model.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitReport {
    pub unit_index: usize,
    pub subject: UnitView,
    pub scene: UnitView,
}

impl UnitReport {
    /// Text report in the same tab-separated style as summary manifests.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("#unit={}\n", self.unit_index);
        for view in [&self.subject, &self.scene] {
            if let Some(cats) = &view.top_categories {
                for (label, w) in cats {
                    writeln!(out, "category\t{}\t{label}\t{w}", view.modality).unwrap();
                }
            }
        }
        for view in [&self.subject, &self.scene] {
            for (rank, (t, a)) in view.top_frames.iter().enumerate() {
                writeln!(out, "frame\t{}\t{rank}\t{t}\t{a}", view.modality).unwrap();
            }
        }
        out
    }
}

/// Inputs for [`unit_reports`]; pixels and labels are optional.
pub struct ReportInputs<'a> {
    pub subject: &'a FeatureMatrix,
    pub scene: &'a FeatureMatrix,
    pub pixels: Option<&'a FeatureMatrix>,
    pub subject_labels: Option<&'a CategoryLabels>,
    pub scene_labels: Option<&'a CategoryLabels>,
    pub top_n: usize,
    pub categories_n: usize,
}

pub fn unit_reports(model: &PairedModel, inputs: &ReportInputs<'_>) -> Result<Vec<UnitReport>> {
    if let Some(p) = inputs.pixels {
        for m in [inputs.subject, inputs.scene] {
            if p.frames() != m.frames() {
                return Err(Error::Alignment(format!(
                    "pixels have {} frames, {} features have {}",
                    p.frames(),
                    m.modality(),
                    m.frames()
                )));
            }
        }
    }
    let view = |features: &FeatureMatrix, labels: Option<&CategoryLabels>, unit| {
        let top = top_frames(model, features, unit, inputs.top_n)?;
        let rbm = model.for_modality(features.modality())?;
        let top_categories = labels
            .map(|l| top_categories(rbm, l, unit, inputs.categories_n))
            .transpose()?;
        let average_image = match inputs.pixels {
            Some(p) if top.iter().any(|&(_, a)| a > 0.0) => Some(unit_average_image(&top, p)?),
            _ => None,
        };
        Ok::<_, Error>(UnitView {
            modality: features.modality(),
            top_frames: top,
            top_categories,
            average_image,
        })
    };
    (0..model.k())
        .map(|k| {
            Ok(UnitReport {
                unit_index: k,
                subject: view(inputs.subject, inputs.subject_labels, k)?,
                scene: view(inputs.scene, inputs.scene_labels, k)?,
            })
        })
        .collect()
}
