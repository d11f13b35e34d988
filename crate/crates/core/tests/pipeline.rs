mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use facemorph::cohortstats::{compare_cohorts, Cohort, TTestVariant};
use facemorph::pipeline::{export_reports, run_pipeline, PipelineConfig, RunManifest, StageStatus};
use facemorph::shaperegress::{train_shape_model, ShapeTrainConfig};
use facemorph::synth::jittered_faces;
use facemorph::Error;

fn landmark_cohorts(root: &Path, n_a: usize, n_b: usize) {
    let (a, b) = common::cohort_faces(21, n_a, n_b);
    common::write_faces(&root.join("a"), &a, true, false);
    common::write_faces(&root.join("b"), &b, true, false);
}

fn labelled() -> PipelineConfig {
    PipelineConfig {
        label_a: Some("PTHS".into()),
        label_b: Some("control".into()),
        ..PipelineConfig::default()
    }
}

fn trained_model(dir: &Path) -> std::path::PathBuf {
    let faces = jittered_faces(22, 80, common::FIXTURE_SIZE);
    let model = train_shape_model(&common::samples(&faces), &ShapeTrainConfig::desk()).unwrap();
    let path = dir.join("shape68.json");
    model.save(&path).unwrap();
    path
}

#[test]
fn landmark_only_run_writes_all_reports() {
    let dir = tempfile::tempdir().unwrap();
    landmark_cohorts(dir.path(), 6, 5);
    let out = dir.path().join("out");
    let config = PipelineConfig {
        landmarks_only: true,
        ..labelled()
    };
    let (report, manifest) = run_pipeline(&dir.path().join("a"), &dir.path().join("b"), &config, &out).unwrap();
    assert_eq!(report.features.len(), 6);
    assert!(report.features.iter().all(|f| f.test.is_some()));
    assert_eq!(manifest.records.len(), 11);
    for r in &manifest.records {
        assert_eq!(r.stages["preprocess"], StageStatus::Skipped);
        assert_eq!(r.stages["features"], StageStatus::Ok);
        assert_eq!(r.stages["stats"], StageStatus::Ok);
    }
    let table = fs::read_to_string(out.join("table1.csv")).unwrap();
    assert_eq!(table.lines().count(), 7);
    assert!(table.lines().nth(4).unwrap().starts_with("NoseAngle,6,"));
    for name in ["boxplots.tsv", "features.csv", "meanface.json", "manifest.json"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let manifest_back: RunManifest =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest_back, manifest);
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    landmark_cohorts(dir.path(), 7, 7);
    let config = labelled();
    let read_all = |out: &Path| {
        ["table1.csv", "boxplots.tsv", "features.csv", "meanface.json"]
            .map(|n| fs::read(out.join(n)).unwrap())
    };
    let mut runs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("out{k}"));
        run_pipeline(&dir.path().join("a"), &dir.path().join("b"), &config, &out).unwrap();
        runs.push(read_all(&out));
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn bad_inputs_are_recorded_and_skipped() {
    let dir = tempfile::tempdir().unwrap();
    landmark_cohorts(dir.path(), 5, 5);
    fs::write(dir.path().join("a/zz_corrupt.png"), b"not an image").unwrap();
    fs::write(dir.path().join("b/zz_broken.json"), b"{\"points\": [[1, 2]]").unwrap();
    let model = trained_model(dir.path());
    let config = PipelineConfig {
        shape_model_68pt: Some(model),
        bbox: Some(common::nominal_box()),
        ..labelled()
    };
    let out = dir.path().join("out");
    let (report, manifest) = run_pipeline(&dir.path().join("a"), &dir.path().join("b"), &config, &out).unwrap();
    assert_eq!(manifest.records.len(), 12);
    let failed: Vec<_> = manifest.failures().collect();
    assert_eq!(failed.len(), 2);
    let corrupt = failed.iter().find(|r| r.input.ends_with("zz_corrupt.png")).unwrap();
    assert_eq!(corrupt.failure.as_ref().unwrap().stage, "preprocess");
    assert_eq!(corrupt.stages["features"], StageStatus::NotRun);
    let broken = failed.iter().find(|r| r.input.ends_with("zz_broken.json")).unwrap();
    assert_eq!(broken.failure.as_ref().unwrap().stage, "landmarks");
    assert_eq!(report.features[0].a.as_ref().unwrap().n, 5);
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn cached_landmarks_reproduce_the_image_run() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = common::cohort_faces(23, 5, 5);
    common::write_faces(&dir.path().join("PTHS"), &a, false, true);
    common::write_faces(&dir.path().join("control"), &b, false, true);
    let config = PipelineConfig {
        shape_model_68pt: Some(trained_model(dir.path())),
        bbox: Some(common::nominal_box()),
        ..labelled()
    };
    let first = dir.path().join("first");
    let (report, manifest) =
        run_pipeline(&dir.path().join("PTHS"), &dir.path().join("control"), &config, &first).unwrap();
    assert_eq!(manifest.failures().count(), 0);
    assert!(manifest.records.iter().all(|r| r.stages["landmarks"] == StageStatus::Ok));

    let second = dir.path().join("second");
    let cached = first.join("landmarks");
    let (again, _) = run_pipeline(
        &cached.join("PTHS"),
        &cached.join("control"),
        &PipelineConfig {
            landmarks_only: true,
            ..labelled()
        },
        &second,
    )
    .unwrap();
    assert_eq!(report, again);
    assert_eq!(
        fs::read(first.join("table1.csv")).unwrap(),
        fs::read(second.join("table1.csv")).unwrap()
    );
}

#[test]
fn too_small_cohort_is_an_error_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    landmark_cohorts(dir.path(), 4, 1);
    let out = dir.path().join("out");
    let err = run_pipeline(&dir.path().join("a"), &dir.path().join("b"), &labelled(), &out).unwrap_err();
    assert!(matches!(err, Error::CohortTooSmall { count: 1, .. }), "{err}");
    assert!(out.join("manifest.json").is_file());
    assert!(!out.join("table1.csv").exists());
}

#[test]
fn meanface_is_omitted_without_shapes() {
    let (a, b) = facemorph::synth::synthetic_cohorts(24, 4, 4, Default::default());
    let rows = |f: &[facemorph::synth::FaceParams]| {
        f.iter()
            .map(|p| facemorph::morphometrics::extract_features(&p.landmarks(), &Default::default()).unwrap())
            .collect()
    };
    let report = compare_cohorts(&Cohort::new("x", rows(&a)), &Cohort::new("y", rows(&b)), TTestVariant::Student).unwrap();
    assert!(report.mean_faces.is_none());
    let dir = tempfile::tempdir().unwrap();
    let written = export_reports(&report, &RunManifest::default(), dir.path()).unwrap();
    assert!(!dir.path().join("meanface.json").exists());
    assert!(written.iter().all(|p| !p.ends_with("meanface.json")));
    assert!(dir.path().join("table1.csv").is_file());
}

fn cli(args: &[&str]) -> (Option<i32>, String) {
    let out = Command::new(common::cli()).args(args).output().unwrap();
    (out.status.code(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    landmark_cohorts(dir.path(), 3, 3);
    let p = |s: &str| dir.path().join(s).display().to_string();

    assert_eq!(cli(&[]).0, Some(1));
    assert_eq!(cli(&["--help"]).0, Some(0));
    assert_eq!(cli(&["analyze", "--cohort-a", &p("a")]).0, Some(1));
    assert_eq!(cli(&["analyze", "--cohort-a", &p("a"), "--cohort-b", &p("b"), "--bbox", "1,2,3", "--out", &p("o")]).0, Some(1));

    fs::write(dir.path().join("bad.json"), "{\"no_such_key\": 1}").unwrap();
    let with_bad_config = ["analyze", "--cohort-a", &p("a"), "--cohort-b", &p("b"), "--config", &p("bad.json"), "--out", &p("o")];
    assert_eq!(cli(&with_bad_config).0, Some(1));

    assert_eq!(cli(&["analyze", "--cohort-a", &p("missing"), "--cohort-b", &p("b"), "--out", &p("o")]).0, Some(2));

    let (code, stdout) = cli(&["analyze", "--cohort-a", &p("a"), "--cohort-b", &p("b"), "--landmarks-only", "--out", &p("o")]);
    assert_eq!(code, Some(0));
    assert!(stdout.contains("NoseAngle"));
    assert!(dir.path().join("o/table1.csv").is_file());
}

#[test]
fn cli_extract_writes_landmarks_and_features() {
    let dir = tempfile::tempdir().unwrap();
    let faces = jittered_faces(25, 1, common::FIXTURE_SIZE);
    let img = dir.path().join("face.png");
    faces[0].image.save(&img).unwrap();
    let model = trained_model(dir.path());
    let config = dir.path().join("config.json");
    fs::write(&config, format!("{{\"shape_model_68pt\": {:?}}}", model.display().to_string())).unwrap();
    let out = dir.path().join("face_landmarks.json");
    let (code, _) = cli(&[
        "extract",
        "--image",
        &img.display().to_string(),
        "--config",
        &config.display().to_string(),
        "--bbox",
        &common::nominal_box().to_string(),
        "--out",
        &out.display().to_string(),
    ]);
    assert_eq!(code, Some(0));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["points"].as_array().unwrap().len(), 68);
    assert!(doc["features"]["nose_angle_deg"].as_f64().unwrap() > 0.0);
}
