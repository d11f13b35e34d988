//! Batch orchestration: directory ingestion, the per-image stage chain,
//! cohort assembly and report export.
//!
//! Each cohort directory may hold images, landmark JSON files, or both. Files
//! are grouped by stem; a landmark file next to an image (or on its own)
//! supplies the shape directly and the image stages are skipped. Results are
//! collected in directory order regardless of how the per-image work is
//! scheduled, so every export is byte-stable for identical inputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{align_face_to, roll_angle, eye_centroids, FivePointLandmarks, SimilarityTransform};
use crate::cohortstats::{compare_cohorts, Cohort, CohortReport, TTestVariant};
use crate::error::{Error, Result};
use crate::facedetect::{cascade_detect, hog_scan, HaarCascade, LinearSvmModel};
use crate::geom::{BoundingBox, Point};
use crate::imgcore::{
    crop, crop_region, equalize_histogram, integral_image, median_filter, resize, to_grayscale, Image,
};
use crate::morphometrics::{extract_features, FeatureVector, LandmarkIndexMap};
use crate::shaperegress::{
    predict_shape, LandmarkFile, LandmarkSet, Scheme, ShapeModel, ShapeTrainConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Haar,
    Hog,
    /// Face box supplied by the caller (`bbox` in the config or on the
    /// command line, or the `bbox` field of a landmark file).
    #[default]
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Pixels added on every side of the detected box before cropping.
    pub margin: i32,
    /// Side of the square working frame.
    pub working_size: usize,
    pub detector: DetectorKind,
    pub cascade_model: Option<PathBuf>,
    pub svm_model: Option<PathBuf>,
    pub shape_model_5pt: Option<PathBuf>,
    pub shape_model_68pt: Option<PathBuf>,
    pub landmark_map: LandmarkIndexMap,
    /// Median-filter radius; 0 disables the filter.
    pub median_radius: usize,
    /// Equalize before the median filter (otherwise after).
    pub equalize_first: bool,
    pub t_test: TTestVariant,
    pub label_a: Option<String>,
    pub label_b: Option<String>,
    pub bbox: Option<BoundingBox>,
    pub haar_scales: Vec<f64>,
    pub haar_step: usize,
    pub hog_scales: Vec<f64>,
    pub hog_stride: usize,
    pub shape_training: ShapeTrainConfig,
    pub landmarks_only: bool,
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            margin: 30,
            working_size: 600,
            detector: DetectorKind::External,
            cascade_model: None,
            svm_model: None,
            shape_model_5pt: None,
            shape_model_68pt: None,
            landmark_map: LandmarkIndexMap::default(),
            median_radius: 1,
            equalize_first: true,
            t_test: TTestVariant::Welch,
            label_a: None,
            label_b: None,
            bbox: None,
            haar_scales: vec![1.0, 1.25, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0],
            haar_step: 4,
            hog_scales: vec![1.0, 1.5, 2.0, 3.0, 4.0],
            hog_stride: 8,
            shape_training: ShapeTrainConfig::default(),
            landmarks_only: false,
            output_dir: None,
        }
    }
}

impl PipelineConfig {
    /// Reads a JSON config; relative model paths resolve against the config
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.cascade_model,
            &mut config.svm_model,
            &mut config.shape_model_5pt,
            &mut config.shape_model_68pt,
            &mut config.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.margin < 0 {
            return Err(Error::InvalidArgument(format!("margin {} is negative", self.margin)));
        }
        if self.working_size == 0 || self.haar_step == 0 || self.hog_stride == 0 {
            return Err(Error::InvalidArgument(
                "working_size, haar_step and hog_stride must be positive".into(),
            ));
        }
        self.landmark_map.validate()
    }

    /// Checks that every model the image path needs is configured and
    /// exists.
    fn check_image_stages(&self) -> Result<()> {
        let need = |p: &Option<PathBuf>, name: &str| match p {
            Some(p) if p.exists() => Ok(()),
            Some(p) => Err(Error::InvalidArgument(format!("{name} {} does not exist", p.display()))),
            None => Err(Error::InvalidArgument(format!("{name} is required for image inputs"))),
        };
        match self.detector {
            DetectorKind::Haar => need(&self.cascade_model, "cascade_model")?,
            DetectorKind::Hog => need(&self.svm_model, "svm_model")?,
            DetectorKind::External => {}
        }
        if self.shape_model_5pt.is_some() {
            need(&self.shape_model_5pt, "shape_model_5pt")?;
        }
        need(&self.shape_model_68pt, "shape_model_68pt")
    }
}

/// Models shared read-only by every worker.
#[derive(Debug, Default)]
pub struct Models {
    pub cascade: Option<HaarCascade>,
    pub svm: Option<LinearSvmModel>,
    pub shape_5pt: Option<ShapeModel>,
    pub shape_68pt: Option<ShapeModel>,
}

impl Models {
    pub fn load(config: &PipelineConfig) -> Result<Self> {
        config.check_image_stages()?;
        let cascade = match config.detector {
            DetectorKind::Haar => config.cascade_model.as_ref().map(HaarCascade::load).transpose()?,
            _ => None,
        };
        let svm = match config.detector {
            DetectorKind::Hog => config.svm_model.as_ref().map(LinearSvmModel::load).transpose()?,
            _ => None,
        };
        let shape_5pt = config.shape_model_5pt.as_ref().map(ShapeModel::load).transpose()?;
        let shape_68pt = config.shape_model_68pt.as_ref().map(ShapeModel::load).transpose()?;
        if let Some(m) = &shape_68pt {
            if m.scheme != Scheme::SixtyEightPoint {
                return Err(Error::SchemeMismatch {
                    expected: "68pt".into(),
                    found: m.scheme.to_string(),
                });
            }
        }
        if let Some(m) = &shape_5pt {
            if m.scheme != Scheme::FivePoint {
                return Err(Error::SchemeMismatch {
                    expected: "5pt".into(),
                    found: m.scheme.to_string(),
                });
            }
        }
        Ok(Models {
            cascade,
            svm,
            shape_5pt,
            shape_68pt,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    Skipped,
    Failed,
    #[serde(rename = "not_run")]
    NotRun,
}

pub const STAGES: [&str; 6] = ["preprocess", "detect", "align", "landmarks", "features", "stats"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: String,
    pub reason: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub cohort: String,
    pub input: String,
    pub stages: BTreeMap<String, StageStatus>,
    pub bbox: Option<BoundingBox>,
    pub landmark_file: Option<String>,
    pub features: Option<FeatureVector>,
    pub failure: Option<Failure>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub records: Vec<ImageRecord>,
}

impl RunManifest {
    pub fn failures(&self) -> impl Iterator<Item = &ImageRecord> {
        self.records.iter().filter(|r| r.failure.is_some())
    }
}

/// One stem's worth of input files.
#[derive(Debug, Clone)]
struct InputItem {
    stem: String,
    image: Option<PathBuf>,
    landmarks: Option<PathBuf>,
    other: Option<PathBuf>,
}

impl InputItem {
    fn primary(&self) -> &Path {
        self.image
            .as_deref()
            .or(self.landmarks.as_deref())
            .or(self.other.as_deref())
            .expect("item has at least one file")
    }
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

fn list_inputs(dir: &Path) -> Result<Vec<InputItem>> {
    let mut by_stem: BTreeMap<String, InputItem> = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') || !path.is_file() {
            continue;
        }
        paths.push(path);
    }
    paths.sort();
    for path in paths {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let ext = path
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .unwrap_or_default();
        let item = by_stem.entry(stem.clone()).or_insert_with(|| InputItem {
            stem,
            image: None,
            landmarks: None,
            other: None,
        });
        if ext == "json" && item.landmarks.is_none() {
            item.landmarks = Some(path);
        } else if IMAGE_EXTENSIONS.contains(&ext.as_str()) && item.image.is_none() {
            item.image = Some(path);
        } else {
            item.other.get_or_insert(path);
        }
    }
    Ok(by_stem.into_values().collect())
}

/// Landmarks for one image plus the face box they were localized in.
#[derive(Debug, Clone)]
pub struct Localized {
    pub landmarks: LandmarkSet,
    pub bbox: Option<BoundingBox>,
}

struct StageError {
    stage: &'static str,
    error: Error,
}

fn at(stage: &'static str) -> impl Fn(Error) -> StageError {
    move |error| StageError { stage, error }
}

/// Gray, equalized and median-filtered copy of `img`.
pub fn preprocess(img: &Image, config: &PipelineConfig) -> Result<Image> {
    let gray = to_grayscale(img);
    let median = |i: &Image| {
        if config.median_radius == 0 {
            Ok(i.clone())
        } else {
            median_filter(i, config.median_radius)
        }
    };
    if config.equalize_first {
        median(&equalize_histogram(&gray))
    } else {
        Ok(equalize_histogram(&median(&gray)?))
    }
}

/// Highest-scoring face box, or the configured external box.
pub fn detect_face(
    gray: &Image,
    config: &PipelineConfig,
    models: &Models,
    external: Option<BoundingBox>,
) -> Result<BoundingBox> {
    let detections = match config.detector {
        DetectorKind::External => {
            return external.or(config.bbox).ok_or_else(|| {
                Error::InvalidArgument("external detector selected but no face box given".into())
            })
        }
        DetectorKind::Haar => {
            let cascade = models.cascade.as_ref().ok_or_else(|| {
                Error::InvalidArgument("haar detector selected without a cascade model".into())
            })?;
            cascade_detect(&integral_image(gray), cascade, &config.haar_scales, config.haar_step)?
        }
        DetectorKind::Hog => {
            let svm = models.svm.as_ref().ok_or_else(|| {
                Error::InvalidArgument("hog detector selected without an SVM model".into())
            })?;
            hog_scan(gray, svm, config.hog_stride, &config.hog_scales)?
        }
    };
    let best = detections
        .iter()
        .max_by(|a, b| a.score.total_cmp(&b.score).then(b.bbox.y.cmp(&a.bbox.y)))
        .ok_or_else(|| Error::InsufficientData("no face detected".into()))?;
    if detections.len() > 1 {
        debug!("{} faces detected, keeping the highest-scoring one", detections.len());
    }
    Ok(best.bbox)
}

/// Stages 1–4 on one image: preprocessing, detection, margin crop and
/// resize, alignment and 68-point localization. Landmarks come back in the
/// input image's coordinates.
pub fn localize(
    img: &Image,
    config: &PipelineConfig,
    models: &Models,
    external: Option<BoundingBox>,
) -> Result<Localized> {
    localize_staged(img, config, models, external).map_err(|e| e.error)
}

fn localize_staged(
    img: &Image,
    config: &PipelineConfig,
    models: &Models,
    external: Option<BoundingBox>,
) -> std::result::Result<Localized, StageError> {
    let gray = preprocess(img, config).map_err(at("preprocess"))?;
    let bbox = detect_face(&gray, config, models, external).map_err(at("detect"))?;

    let region = crop_region(&gray, &bbox, config.margin).map_err(at("detect"))?;
    let ws = config.working_size;
    let working = resize(&crop(&gray, &region).map_err(at("detect"))?, ws, ws).map_err(at("detect"))?;
    let (sx, sy) = (ws as f64 / region.w as f64, ws as f64 / region.h as f64);
    let to_working = |p: Point| {
        Point::new(
            (p.x - region.x as f64 + 0.5) * sx - 0.5,
            (p.y - region.y as f64 + 0.5) * sy - 0.5,
        )
    };
    let to_original = |p: Point| {
        Point::new(
            region.x as f64 + (p.x + 0.5) / sx - 0.5,
            region.y as f64 + (p.y + 0.5) / sy - 0.5,
        )
    };
    let working_box = box_from_corners(
        to_working(Point::new(bbox.x as f64, bbox.y as f64)),
        to_working(Point::new(bbox.right() as f64, bbox.bottom() as f64)),
    )
    .map_err(at("detect"))?;

    let shape68 = models.shape_68pt.as_ref().ok_or_else(|| StageError {
        stage: "landmarks",
        error: Error::InvalidArgument("no 68-point shape model".into()),
    })?;
    let coarse = match &models.shape_5pt {
        Some(m) => predict_shape(&working, &working_box, m),
        None => predict_shape(&working, &working_box, shape68),
    }
    .map_err(at("align"))?;
    let five = FivePointLandmarks::from_landmarks(&coarse);
    let (aligned, t) = align_face_to(&working, &five, ws).map_err(at("align"))?;
    let aligned_box = scaled_box_around(t.apply(working_box.center()), &working_box, t.scale)
        .map_err(at("align"))?;

    let lm = predict_shape(&aligned, &aligned_box, shape68).map_err(at("landmarks"))?;
    let back = t.inverse();
    Ok(Localized {
        landmarks: lm.map(|p| to_original(back.apply(p))),
        bbox: Some(bbox),
    })
}

fn box_from_corners(a: Point, b: Point) -> Result<BoundingBox> {
    BoundingBox::from_corners(
        a.x.round() as i32,
        a.y.round() as i32,
        b.x.round() as i32,
        b.y.round() as i32,
    )
}

fn scaled_box_around(center: Point, b: &BoundingBox, scale: f64) -> Result<BoundingBox> {
    let (w, h) = (b.w as f64 * scale, b.h as f64 * scale);
    box_from_corners(
        Point::new(center.x - w / 2.0, center.y - h / 2.0),
        Point::new(center.x + w / 2.0, center.y + h / 2.0),
    )
}

/// Shape expressed in an eye-based frame: eye midpoint at the origin, eyes
/// level, unit distance between the eye centers. Used for mean faces so that
/// image placement and size do not blur the average.
pub fn eye_normalized(lm: &LandmarkSet) -> Result<LandmarkSet> {
    let (l, r) = eye_centroids(&FivePointLandmarks::from_landmarks(lm));
    let roll = roll_angle(l, r)?;
    let mut t = SimilarityTransform::new(-roll, 1.0 / l.distance(r), Point::default())?;
    t.translation = Point::default() - t.apply(l.midpoint(r));
    Ok(lm.map(|p| t.apply(p)))
}

struct ItemResult {
    record: ImageRecord,
    shape: Option<LandmarkSet>,
}

fn status_map(outcomes: &[(&str, StageStatus)]) -> BTreeMap<String, StageStatus> {
    let mut m: BTreeMap<String, StageStatus> =
        STAGES[..5].iter().map(|s| (s.to_string(), StageStatus::NotRun)).collect();
    for (s, st) in outcomes {
        m.insert(s.to_string(), *st);
    }
    m
}

fn process_item(
    item: &InputItem,
    cohort: &str,
    config: &PipelineConfig,
    models: Option<&Models>,
    out: &Path,
) -> ItemResult {
    let mut record = ImageRecord {
        cohort: cohort.to_string(),
        input: item.primary().display().to_string(),
        stages: status_map(&[]),
        bbox: None,
        landmark_file: None,
        features: None,
        failure: None,
    };
    let fail = |mut record: ImageRecord, stage: &str, e: Error| {
        warn!("{}: {stage} failed: {e}", record.input);
        record.stages.insert(stage.to_string(), StageStatus::Failed);
        record.failure = Some(Failure {
            stage: stage.to_string(),
            reason: e.code().to_string(),
            message: e.to_string(),
        });
        ItemResult { record, shape: None }
    };

    let image_stages = ["preprocess", "detect", "align", "landmarks"];
    let localized = if let Some(path) = &item.landmarks {
        for s in image_stages {
            record.stages.insert(s.to_string(), StageStatus::Skipped);
        }
        record.landmark_file = Some(path.display().to_string());
        match LandmarkFile::load(path).and_then(|f| Ok((f.landmarks()?, f.bbox))) {
            Ok((landmarks, bbox)) => Localized { landmarks, bbox },
            Err(e) => return fail(record, "landmarks", e),
        }
    } else if let Some(path) = &item.image {
        let Some(models) = models.filter(|_| !config.landmarks_only) else {
            return fail(
                record,
                "landmarks",
                Error::InsufficientData("landmark-only run and no landmark file for this image".into()),
            );
        };
        let img = match Image::open(path) {
            Ok(i) => i,
            Err(e) => return fail(record, "preprocess", e),
        };
        match localize_staged(&img, config, models, None) {
            Ok(l) => {
                for s in image_stages {
                    record.stages.insert(s.to_string(), StageStatus::Ok);
                }
                let rel = Path::new("landmarks").join(cohort).join(format!("{}.json", item.stem));
                let file = LandmarkFile::new(&l.landmarks, l.bbox);
                if let Err(e) = fs::create_dir_all(out.join(rel.parent().unwrap()))
                    .map_err(|e| Error::io(out.join(rel.parent().unwrap()), e))
                    .and_then(|_| file.save(out.join(&rel)))
                {
                    return fail(record, "landmarks", e);
                }
                record.landmark_file = Some(rel.display().to_string());
                l
            }
            Err(StageError { stage, error }) => {
                let idx = image_stages.iter().position(|s| *s == stage).unwrap_or(0);
                for s in &image_stages[..idx] {
                    record.stages.insert(s.to_string(), StageStatus::Ok);
                }
                return fail(record, stage, error);
            }
        }
    } else {
        let path = item.primary().display().to_string();
        return fail(
            record,
            "preprocess",
            Error::InvalidImage(format!("unsupported input file {path}")),
        );
    };

    record.bbox = localized.bbox;
    match extract_features(&localized.landmarks, &config.landmark_map) {
        Ok(f) => {
            record.stages.insert("features".into(), StageStatus::Ok);
            record.features = Some(f);
            ItemResult {
                record,
                shape: Some(localized.landmarks),
            }
        }
        Err(e) => fail(record, "features", e),
    }
}

fn dir_label(dir: &Path, fallback: &str) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| fallback.to_string())
}

/// Runs every stage on both cohort directories, writes all artifacts into
/// `out`, and returns the in-memory report and manifest.
pub fn run_pipeline(
    cohort_a: &Path,
    cohort_b: &Path,
    config: &PipelineConfig,
    out: &Path,
) -> Result<(CohortReport, RunManifest)> {
    config.validate()?;
    let mut label_a = config.label_a.clone().unwrap_or_else(|| dir_label(cohort_a, "cohort_a"));
    let mut label_b = config.label_b.clone().unwrap_or_else(|| dir_label(cohort_b, "cohort_b"));
    if label_a == label_b {
        label_a.push_str("_a");
        label_b.push_str("_b");
    }
    let items_a = list_inputs(cohort_a)?;
    let items_b = list_inputs(cohort_b)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let needs_images = !config.landmarks_only
        && items_a.iter().chain(&items_b).any(|i| i.landmarks.is_none() && i.image.is_some());
    let models = if needs_images { Some(Models::load(config)?) } else { None };

    let run = |items: &[InputItem], label: &str| -> Vec<ItemResult> {
        items
            .par_iter()
            .map(|item| process_item(item, label, config, models.as_ref(), out))
            .collect()
    };
    let results_a = run(&items_a, &label_a);
    let results_b = run(&items_b, &label_b);

    let cohort = |label: &str, results: &[ItemResult]| -> Cohort {
        let mut c = Cohort::new(label, Vec::new());
        for r in results {
            if let (Some(f), Some(s)) = (r.record.features, &r.shape) {
                c.feature_rows.push(f);
                if let Ok(n) = eye_normalized(s) {
                    c.shapes.push(n);
                }
            }
        }
        c
    };
    let a = cohort(&label_a, &results_a);
    let b = cohort(&label_b, &results_b);
    let mut manifest = RunManifest {
        records: results_a.into_iter().chain(results_b).map(|r| r.record).collect(),
    };
    let stats = if a.feature_rows.len() >= 2 && b.feature_rows.len() >= 2 {
        if a.shapes.len() != a.feature_rows.len() || b.shapes.len() != b.feature_rows.len() {
            // Mean faces need every shape; skip them rather than average a subset.
            compare_cohorts(
                &Cohort { shapes: vec![], ..a.clone() },
                &Cohort { shapes: vec![], ..b.clone() },
                config.t_test,
            )
        } else {
            compare_cohorts(&a, &b, config.t_test)
        }
    } else {
        let (label, count) = if a.feature_rows.len() < 2 {
            (label_a.clone(), a.feature_rows.len())
        } else {
            (label_b.clone(), b.feature_rows.len())
        };
        Err(Error::CohortTooSmall { label, count })
    };
    let status = if stats.is_ok() { StageStatus::Ok } else { StageStatus::Failed };
    for r in manifest.records.iter_mut().filter(|r| r.features.is_some()) {
        r.stages.insert("stats".into(), status);
    }
    match stats {
        Ok(report) => {
            export_reports(&report, &manifest, out)?;
            Ok((report, manifest))
        }
        Err(e) => {
            write_manifest(&manifest, out)?;
            Err(e)
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Table of the six feature comparisons.
pub fn table_csv(report: &CohortReport) -> String {
    let mut s = String::from("feature,n_a,mean_a,sd_a,n_b,mean_b,sd_b,t,df,p_value,error\n");
    for f in &report.features {
        let (a, b) = (f.a.as_ref(), f.b.as_ref());
        let error = f.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            f.feature,
            a.map(|x| x.n.to_string()).unwrap_or_default(),
            fmt_opt(a.map(|x| x.mean)),
            fmt_opt(a.map(|x| x.sd)),
            b.map(|x| x.n.to_string()).unwrap_or_default(),
            fmt_opt(b.map(|x| x.mean)),
            fmt_opt(b.map(|x| x.sd)),
            fmt_opt(f.test.map(|t| t.t)),
            fmt_opt(f.test.map(|t| t.df)),
            fmt_opt(f.test.map(|t| t.p)),
            error,
        );
    }
    s
}

/// Boxplot statistics, one row per feature and cohort.
pub fn boxplots_tsv(report: &CohortReport) -> String {
    let mut s = String::from(
        "feature\tcohort\tn\tmin\tq1\tmedian\tq3\tmax\twhisker_low\twhisker_high\toutliers\n",
    );
    for f in &report.features {
        for (label, summary) in [(&report.label_a, &f.a), (&report.label_b, &f.b)] {
            let Some(x) = summary else { continue };
            let b = &x.boxplot;
            let outliers: Vec<String> = b.outliers.iter().map(f64::to_string).collect();
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                f.feature,
                label,
                x.n,
                b.min,
                b.q1,
                b.median,
                b.q3,
                b.max,
                b.whisker_low,
                b.whisker_high,
                outliers.join(",")
            );
        }
    }
    s
}

#[derive(Serialize)]
struct MeanFace<'a> {
    label: &'a str,
    points: &'a [Point],
}

#[derive(Serialize)]
struct MeanFaces<'a> {
    scheme: Scheme,
    frame: &'a str,
    cohort_a: MeanFace<'a>,
    cohort_b: MeanFace<'a>,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_manifest(manifest: &RunManifest, dir: &Path) -> Result<PathBuf> {
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::json(&path, e))?;
    write_file(&path, &(text + "\n"))?;
    Ok(path)
}

/// Writes `table1.csv`, `boxplots.tsv`, `features.csv`, `manifest.json` and,
/// when the report has mean faces, `meanface.json`. Returns the written paths.
pub fn export_reports(report: &CohortReport, manifest: &RunManifest, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let table = dir.join("table1.csv");
    write_file(&table, &table_csv(report))?;
    written.push(table);

    let boxes = dir.join("boxplots.tsv");
    write_file(&boxes, &boxplots_tsv(report))?;
    written.push(boxes);

    let features = dir.join("features.csv");
    let mut rows = format!("cohort,input,{}\n", FeatureVector::CSV_HEADER.join(","));
    for r in &manifest.records {
        if let Some(f) = r.features {
            let v: Vec<String> = f.to_array().iter().map(f64::to_string).collect();
            let _ = writeln!(rows, "{},{},{}", r.cohort, r.input.replace(',', ";"), v.join(","));
        }
    }
    write_file(&features, &rows)?;
    written.push(features);

    if let Some((a, b)) = &report.mean_faces {
        let path = dir.join("meanface.json");
        let doc = MeanFaces {
            scheme: a.scheme,
            frame: "eye_normalized",
            cohort_a: MeanFace {
                label: &report.label_a,
                points: &a.points,
            },
            cohort_b: MeanFace {
                label: &report.label_b,
                points: &b.points,
            },
        };
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::json(&path, e))?;
        write_file(&path, &(text + "\n"))?;
        written.push(path);
    }

    written.push(write_manifest(manifest, dir)?);
    Ok(written)
}

/// Training pairs from a directory of images with same-stem landmark files.
/// A landmark file without a `bbox` uses the landmarks' enclosing box grown
/// by a tenth of its larger side.
pub fn load_training_dir(dir: &Path) -> Result<Vec<crate::shaperegress::TrainingSample>> {
    let mut out = Vec::new();
    for item in list_inputs(dir)? {
        let (Some(img_path), Some(lm_path)) = (&item.image, &item.landmarks) else {
            continue;
        };
        let file = LandmarkFile::load(lm_path)?;
        let landmarks = file.landmarks()?;
        let bbox = match file.bbox {
            Some(b) => b,
            None => {
                let b = BoundingBox::enclosing(&landmarks.points)?;
                b.grow(b.w.max(b.h) / 10)
            }
        };
        out.push(crate::shaperegress::TrainingSample {
            image: Image::open(img_path)?,
            bbox,
            landmarks,
        });
    }
    if out.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} has {} image/landmark pairs",
            dir.display(),
            out.len()
        )));
    }
    Ok(out)
}
