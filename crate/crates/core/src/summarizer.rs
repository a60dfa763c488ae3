//! Keyframe selection by per-unit maximum response of the combined descriptor
//! `alpha_k * z_subject[t,k] + (1 - alpha_k) * z_scene[t,k]`.

use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Zip};
use serde::Serialize;

use crate::coreg::PairedModel;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Balance used when none is given.
pub const DEFAULT_ALPHA: f64 = 0.5;

/// How a summary was produced; decides the manifest header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Coreg,
    Uniform,
    Kmeans,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Coreg => "coreg",
            Scheme::Uniform => "uniform",
            Scheme::Kmeans => "kmeans",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Keyframe {
    /// Hidden unit (co-regularized scheme), segment (uniform) or cluster (k-means).
    pub unit_index: usize,
    pub frame_index: usize,
    pub timing_seconds: f64,
    /// Winning response; distance to the centroid for k-means; absent for uniform.
    pub score: Option<f64>,
}

/// An ordered set of keyframes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scheme: Scheme,
    pub fps: f64,
    /// Per-unit balance, present for the co-regularized scheme.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    pub keyframes: Vec<Keyframe>,
}

impl Summary {
    /// Sorts keyframes by time (unit index breaks ties).
    pub fn new(scheme: Scheme, fps: f64, mut keyframes: Vec<Keyframe>) -> Self {
        keyframes.sort_by(|a, b| {
            a.timing_seconds
                .total_cmp(&b.timing_seconds)
                .then(a.unit_index.cmp(&b.unit_index))
        });
        Self {
            scheme,
            fps,
            alpha: None,
            keyframes,
        }
    }

    pub fn with_alpha(mut self, alpha: Vec<f64>) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn len(&self) -> usize {
        self.keyframes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }

    pub fn timings(&self) -> Vec<f64> {
        self.keyframes.iter().map(|k| k.timing_seconds).collect()
    }

    pub fn frame_indices(&self) -> Vec<usize> {
        self.keyframes.iter().map(|k| k.frame_index).collect()
    }

    pub fn unit_scores(&self) -> Vec<Option<f64>> {
        self.keyframes.iter().map(|k| k.score).collect()
    }

    /// Frame chosen for `unit`, if any.
    pub fn frame_for_unit(&self, unit: usize) -> Option<usize> {
        self.keyframes
            .iter()
            .find(|k| k.unit_index == unit)
            .map(|k| k.frame_index)
    }

    fn header(&self) -> String {
        match self.scheme {
            Scheme::Coreg => format!(
                "#K={} alpha={} fps={}",
                self.len(),
                self.alpha.as_deref().map_or("-".into(), format_alpha),
                self.fps
            ),
            other => format!("#scheme={} K={} fps={}", other.name(), self.len(), self.fps),
        }
    }

    /// Tab-separated manifest: header line, then
    /// `unit_index<TAB>frame_index<TAB>timing_seconds<TAB>score` per keyframe.
    pub fn to_tsv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for k in &self.keyframes {
            let score = k.score.map_or("-".to_string(), |s| s.to_string());
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                k.unit_index, k.frame_index, k.timing_seconds, score
            )
            .unwrap();
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Scalar when all entries agree, otherwise a comma-separated list.
pub fn format_alpha(alpha: &[f64]) -> String {
    match alpha.first() {
        Some(&first) if alpha.iter().all(|&a| a == first) => first.to_string(),
        _ => alpha
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(","),
    }
}

/// Per-unit balance parsed from `"0.5"` (broadcast to `k`) or `"a,b,c,..."`.
pub fn parse_alpha(text: &str, k: usize) -> Result<Vec<f64>> {
    let values = text
        .split(',')
        .map(|s| {
            f64::from_str(s.trim()).map_err(|_| Error::Config(format!("invalid alpha value {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let alpha = match values.len() {
        1 => vec![values[0]; k],
        n if n == k => values,
        n => {
            return Err(Error::Config(format!(
                "alpha has {n} entries but the model has K={k}"
            )))
        }
    };
    check_alpha(&alpha)?;
    Ok(alpha)
}

fn check_alpha(alpha: &[f64]) -> Result<()> {
    if let Some(a) = alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::Config(format!("alpha {a} outside [0,1]")));
    }
    Ok(())
}

/// `T x K` combined responses of the two models on aligned, normalized features.
pub fn frame_descriptor(
    model: &PairedModel,
    x_subject: &FeatureMatrix,
    x_scene: &FeatureMatrix,
    alpha: &[f64],
) -> Result<Array2<f64>> {
    if x_subject.frames() != x_scene.frames() || x_subject.fps() != x_scene.fps() {
        return Err(Error::Alignment(format!(
            "subject is {} frames at {} fps, scene is {} frames at {} fps",
            x_subject.frames(),
            x_subject.fps(),
            x_scene.frames(),
            x_scene.fps()
        )));
    }
    if alpha.len() != model.k() {
        return Err(Error::Config(format!(
            "alpha has {} entries but the model has K={}",
            alpha.len(),
            model.k()
        )));
    }
    check_alpha(alpha)?;
    let z_subject = model
        .subject()
        .hidden_probs_batch(x_subject.to_f64().view())?;
    let z_scene = model.scene().hidden_probs_batch(x_scene.to_f64().view())?;
    Ok(combine(z_subject.view(), z_scene.view(), alpha))
}

fn combine(z_subject: ArrayView2<f64>, z_scene: ArrayView2<f64>, alpha: &[f64]) -> Array2<f64> {
    let mut out = Array2::zeros(z_subject.raw_dim());
    for (k, &a) in alpha.iter().enumerate() {
        Zip::from(out.column_mut(k))
            .and(z_subject.column(k))
            .and(z_scene.column(k))
            .for_each(|o, &s, &c| *o = a * s + (1.0 - a) * c);
    }
    out
}

/// Applies `reweight(unit, frame, score)` to every response. Extension point
/// for per-unit preferences (for instance an attractiveness prior) before selection.
pub fn reweight_scores<F>(scores: &mut Array2<f64>, reweight: F)
where
    F: Fn(usize, usize, f64) -> f64,
{
    for ((t, k), s) in scores.indexed_iter_mut() {
        *s = reweight(k, t, *s);
    }
}

/// Best frame in `column` among those `allowed`, earliest on ties.
fn argmax<I: Iterator<Item = (usize, f64)>>(entries: I) -> Option<(usize, f64)> {
    entries.fold(None, |best, (t, s)| match best {
        Some((_, bs)) if s <= bs => best,
        _ => Some((t, s)),
    })
}

/// Picks one frame per unit by maximum response.
///
/// With `distinct`, units are served in descending order of their winning
/// score and each takes its best frame not already claimed.
pub fn select_keyframes(scores: ArrayView2<f64>, fps: f64, distinct: bool) -> Result<Summary> {
    let (frames, units) = scores.dim();
    if frames == 0 || units == 0 {
        return Err(Error::Dimension(format!(
            "empty score matrix {frames}x{units}"
        )));
    }
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::Data(format!("fps must be positive, got {fps}")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Data("scores contain NaN".into()));
    }
    if distinct && frames < units {
        return Err(Error::Capacity(format!(
            "cannot pick {units} distinct frames from {frames}"
        )));
    }

    let best: Vec<(usize, f64)> = (0..units)
        .map(|k| argmax(scores.column(k).iter().copied().enumerate()).expect("non-empty"))
        .collect();

    let mut picks: Vec<(usize, usize, f64)> = Vec::with_capacity(units);
    if distinct {
        let mut order: Vec<usize> = (0..units).collect();
        order.sort_by(|&a, &b| best[b].1.total_cmp(&best[a].1));
        let mut claimed = vec![false; frames];
        for k in order {
            let column = scores.column(k);
            let (t, s) = argmax(
                column
                    .iter()
                    .copied()
                    .enumerate()
                    .filter(|&(t, _)| !claimed[t]),
            )
            .expect("frames >= units leaves one unclaimed");
            claimed[t] = true;
            picks.push((k, t, s));
        }
    } else {
        picks.extend(best.iter().enumerate().map(|(k, &(t, s))| (k, t, s)));
    }

    let keyframes = picks
        .into_iter()
        .map(|(k, t, s)| Keyframe {
            unit_index: k,
            frame_index: t,
            timing_seconds: t as f64 / fps,
            score: Some(s),
        })
        .collect();
    Ok(Summary::new(Scheme::Coreg, fps, keyframes))
}

/// Descriptor plus selection; the summary records the `alpha` used.
pub fn summarize(
    model: &PairedModel,
    x_subject: &FeatureMatrix,
    x_scene: &FeatureMatrix,
    alpha: &[f64],
    distinct: bool,
) -> Result<Summary> {
    let scores = frame_descriptor(model, x_subject, x_scene, alpha)?;
    Ok(
        select_keyframes(scores.view(), x_subject.fps() as f64, distinct)?
            .with_alpha(alpha.to_vec()),
    )
}
