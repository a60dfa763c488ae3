//! Command implementations. Each command records its configuration, input and
//! output digests in a [`RunManifest`] printed on completion.

use std::fs;
use std::path::{Path, PathBuf};

use crbm_core::baselines::{kmeans_keyframes, uniform_summary};
use crbm_core::coreg::{train_pair_with, PairedModel, TrainConfig};
use crbm_core::features::{
    normalize, read_features, synth_paired, write_features, CategoryLabels, FeatureMatrix,
    Modality, NormalizeMode,
};
use crbm_core::summarizer::{parse_alpha, summarize as summarize_pair, Summary};
use crbm_core::viz::{unit_reports, ReportInputs};
use ndarray::Array2;

use crate::manifest::RunManifest;
use crate::{
    BaselineArgs, BaselineScheme, Failure, FeatureArgs, Normalize, OutputFormat, SummarizeArgs,
    SynthArgs, TrainArgs, VisualizeArgs,
};

/// Pixel stand-in for synthetic data: each frame's subject descriptor
/// repeated to fill a 32x32x3 image, so frames of one latent look alike.
fn tile_pixels(subject: &FeatureMatrix) -> crbm_core::Result<FeatureMatrix> {
    let d = subject.dim();
    let src = subject.data();
    let data = Array2::from_shape_fn(
        (subject.frames(), Modality::Pixels.nominal_dim()),
        |(t, p)| src[[t, p % d]],
    );
    FeatureMatrix::new(data, subject.fps(), Modality::Pixels)
}

fn normalize_mode(n: Normalize) -> Option<NormalizeMode> {
    match n {
        Normalize::Minmax => Some(NormalizeMode::MinmaxPerDim),
        Normalize::Softmax => Some(NormalizeMode::SoftmaxPerFrame),
        Normalize::None => None,
    }
}

fn normalize_name(n: Normalize) -> &'static str {
    match n {
        Normalize::Minmax => "minmax",
        Normalize::Softmax => "softmax",
        Normalize::None => "none",
    }
}

/// Reads and concatenates feature files, checking the modality tag.
fn load(
    paths: &[PathBuf],
    want: Modality,
    manifest: &mut RunManifest,
) -> Result<FeatureMatrix, Failure> {
    let mut parts = Vec::with_capacity(paths.len());
    for path in paths {
        let m = read_features(path)
            .map_err(|e| Failure::from(e).with_context(&path.display().to_string()))?;
        if m.modality() != want {
            return Err(Failure {
                code: 2,
                message: format!(
                    "{}: expected {want} features, found {}",
                    path.display(),
                    m.modality()
                ),
            });
        }
        manifest.input(path)?;
        parts.push(m);
    }
    let m = FeatureMatrix::concat(&parts)?;
    if m.check_nominal_dim().is_err() {
        eprintln!(
            "warning: {want} features have D={} (expected {})",
            m.dim(),
            want.nominal_dim()
        );
    }
    Ok(m)
}

fn load_pair(
    args: &FeatureArgs,
    manifest: &mut RunManifest,
) -> Result<(FeatureMatrix, FeatureMatrix), Failure> {
    let subject = load(&args.subject, Modality::Subject, manifest)?;
    let scene = load(&args.scene, Modality::Scene, manifest)?;
    manifest.set("normalize", normalize_name(args.normalize));
    match normalize_mode(args.normalize) {
        Some(mode) => Ok((normalize(&subject, mode)?, normalize(&scene, mode)?)),
        None => Ok((subject, scene)),
    }
}

fn emit(manifest: &mut RunManifest, format: OutputFormat, to_stderr: bool) {
    manifest.finish();
    let text = match format {
        OutputFormat::Tsv => manifest.to_tsv(),
        OutputFormat::Json => manifest.to_json() + "\n",
    };
    if to_stderr {
        eprint!("{text}");
    } else {
        print!("{text}");
    }
}

fn render(summary: &Summary, format: OutputFormat) -> String {
    match format {
        OutputFormat::Tsv => summary.to_tsv(),
        OutputFormat::Json => summary.to_json() + "\n",
    }
}

/// Writes the summary to `out`, or to stdout with the run manifest on stderr.
fn deliver(
    summary: &Summary,
    out: Option<&Path>,
    format: OutputFormat,
    manifest: &mut RunManifest,
) -> Result<(), Failure> {
    let text = render(summary, format);
    match out {
        Some(path) => {
            fs::write(path, text)?;
            manifest.output(path)?;
            emit(manifest, format, false);
        }
        None => {
            print!("{text}");
            emit(manifest, format, true);
        }
    }
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<(), Failure> {
    let mut manifest = RunManifest::start("train");
    let mut cfg = match &args.config {
        Some(path) => {
            manifest.input(path)?;
            TrainConfig::read(path)?
        }
        None => TrainConfig::default(),
    };
    if let Some(k) = args.k {
        cfg.k_units = k;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let (subject, scene) = load_pair(&args.features, &mut manifest)?;
    for (k, v) in cfg.entries() {
        manifest.set(k, v);
    }
    let every = (cfg.epochs / 10).max(1);
    let model = train_pair_with(&subject, &scene, &cfg, |epoch, _| {
        if (epoch + 1) % every == 0 || epoch + 1 == cfg.epochs {
            eprintln!("epoch {}/{}", epoch + 1, cfg.epochs);
        }
    })?;
    model.save(&args.out)?;
    manifest.output(&args.out)?;
    emit(&mut manifest, args.format, false);
    Ok(())
}

pub fn summarize(args: &SummarizeArgs) -> Result<(), Failure> {
    let mut manifest = RunManifest::start("summarize");
    let model = PairedModel::load(&args.model)?;
    manifest.input(&args.model)?;
    let alpha = parse_alpha(&args.alpha, model.k())?;
    let (subject, scene) = load_pair(&args.features, &mut manifest)?;
    manifest.set("alpha", &args.alpha);
    manifest.set("distinct", args.distinct);
    manifest.set("k_units", model.k());
    let summary = summarize_pair(&model, &subject, &scene, &alpha, args.distinct)?;
    deliver(&summary, args.out.as_deref(), args.format, &mut manifest)
}

pub fn baseline(args: &BaselineArgs) -> Result<(), Failure> {
    let mut manifest = RunManifest::start("baseline");
    manifest.set("k", args.k);
    let summary = match args.scheme {
        BaselineScheme::Uniform => {
            manifest.set("scheme", "uniform");
            let (duration, fps) = match (&args.pixels, args.duration) {
                (_, Some(d)) => (d, args.fps),
                (Some(path), None) => {
                    let px = load(std::slice::from_ref(path), Modality::Pixels, &mut manifest)?;
                    (px.duration(), px.fps() as f64)
                }
                (None, None) => {
                    return Err(Failure::usage(
                        "uniform baseline needs --duration or --pixels",
                    ))
                }
            };
            manifest.set("duration", duration);
            manifest.set("fps", fps);
            uniform_summary(duration, args.k, fps)?
        }
        BaselineScheme::Kmeans => {
            manifest.set("scheme", "kmeans");
            manifest.set("runs", args.runs);
            let path = args
                .pixels
                .as_ref()
                .ok_or_else(|| Failure::usage("k-means baseline needs --pixels"))?;
            let px = load(std::slice::from_ref(path), Modality::Pixels, &mut manifest)?;
            kmeans_keyframes(&px, args.k, args.runs)?
        }
    };
    deliver(&summary, args.out.as_deref(), args.format, &mut manifest)
}

fn labels_for(
    path: Option<&PathBuf>,
    paths: &[PathBuf],
    modality: Modality,
    manifest: &mut RunManifest,
) -> Result<Option<CategoryLabels>, Failure> {
    if let Some(p) = path {
        manifest.input(p)?;
        return Ok(Some(CategoryLabels::read(p, modality)?));
    }
    // Fall back to labels embedded in the first feature file.
    Ok(read_features(&paths[0])?.labels())
}

pub fn visualize(args: &VisualizeArgs) -> Result<(), Failure> {
    let mut manifest = RunManifest::start("visualize");
    let model = PairedModel::load(&args.model)?;
    manifest.input(&args.model)?;
    let (subject, scene) = load_pair(&args.features, &mut manifest)?;
    let pixels = match &args.pixels {
        Some(p) => Some(load(
            std::slice::from_ref(p),
            Modality::Pixels,
            &mut manifest,
        )?),
        None => None,
    };
    let subject_labels = labels_for(
        args.labels_subject.as_ref(),
        &args.features.subject,
        Modality::Subject,
        &mut manifest,
    )?;
    let scene_labels = labels_for(
        args.labels_scene.as_ref(),
        &args.features.scene,
        Modality::Scene,
        &mut manifest,
    )?;
    manifest.set("top", args.top);
    manifest.set("categories", args.categories);
    let reports = unit_reports(
        &model,
        &ReportInputs {
            subject: &subject,
            scene: &scene,
            pixels: pixels.as_ref(),
            subject_labels: subject_labels.as_ref(),
            scene_labels: scene_labels.as_ref(),
            top_n: args.top,
            categories_n: args.categories,
        },
    )?;
    fs::create_dir_all(&args.out)?;
    for report in &reports {
        let stem = format!("unit_{:02}", report.unit_index);
        let tsv = args.out.join(format!("{stem}.tsv"));
        fs::write(&tsv, report.to_tsv())?;
        manifest.output(&tsv)?;
        for view in [&report.subject, &report.scene] {
            if let Some(image) = &view.average_image {
                let ppm = args.out.join(format!("{stem}_{}.ppm", view.modality));
                fs::write(&ppm, image.to_ppm())?;
                manifest.output(&ppm)?;
            }
        }
    }
    emit(&mut manifest, args.format, false);
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<(), Failure> {
    let mut manifest = RunManifest::start("synth");
    manifest.set("frames", args.frames);
    manifest.set("latents", args.latents);
    manifest.set("noise", args.noise);
    manifest.set("seed", args.seed);
    let pair = synth_paired(args.frames, args.latents, args.noise, args.seed)?;
    let pixels = tile_pixels(&pair.subject)?;
    fs::create_dir_all(&args.out)?;
    for (name, m) in [
        ("subject", &pair.subject),
        ("scene", &pair.scene),
        ("pixels", &pixels),
    ] {
        let path = args.out.join(format!("{name}.crbf"));
        write_features(m, &path)?;
        manifest.output(&path)?;
    }
    emit(&mut manifest, args.format, false);
    Ok(())
}

impl Failure {
    fn with_context(mut self, context: &str) -> Self {
        self.message = format!("{context}: {}", self.message);
        self
    }
}
