#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use facemorph::geom::{BoundingBox, Point};
use facemorph::shaperegress::{LandmarkFile, LandmarkSet, TrainingSample};
use facemorph::synth::{jittered_face, jittered_faces, synthetic_cohorts, CohortShift, FaceParams, SyntheticFace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FIXTURE_SIZE: usize = 160;

pub fn samples(faces: &[SyntheticFace]) -> Vec<TrainingSample> {
    faces
        .iter()
        .map(|f| TrainingSample {
            image: f.image.clone(),
            bbox: f.bbox,
            landmarks: f.landmarks.clone(),
        })
        .collect()
}

/// Writes `<stem>.png` plus `<stem>.json` (landmarks and box) for each face.
pub fn write_faces(dir: &Path, faces: &[SyntheticFace], with_landmarks: bool, with_images: bool) {
    fs::create_dir_all(dir).unwrap();
    for (i, f) in faces.iter().enumerate() {
        let stem = format!("face_{i:03}");
        if with_images {
            f.image.save(dir.join(format!("{stem}.png"))).unwrap();
        }
        if with_landmarks {
            LandmarkFile::new(&f.landmarks, Some(f.bbox))
                .save(dir.join(format!("{stem}.json")))
                .unwrap();
        }
    }
}

/// Shape-model training directory of jittered faces.
pub fn training_dir(dir: &Path, seed: u64, count: usize) {
    write_faces(dir, &jittered_faces(seed, count, FIXTURE_SIZE), true, true);
}

/// Rendered cohort faces: the first cohort carries the nose/mouth shift.
pub fn cohort_faces(seed: u64, n_a: usize, n_b: usize) -> (Vec<SyntheticFace>, Vec<SyntheticFace>) {
    let (a, b) = synthetic_cohorts(seed, n_a, n_b, CohortShift::default());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let render = |p: Vec<FaceParams>, rng: &mut ChaCha8Rng| {
        p.into_iter().map(|p| jittered_face(p, FIXTURE_SIZE, rng)).collect::<Vec<_>>()
    };
    let a = render(a, &mut rng);
    let b = render(b, &mut rng);
    (a, b)
}

/// Random similarity (with optional reflection) applied to a shape.
pub fn random_similarity(lm: &LandmarkSet, rng: &mut impl Rng) -> LandmarkSet {
    let theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    let scale = rng.gen_range(0.05..20.0);
    let (tx, ty) = (rng.gen_range(-1e3..1e3), rng.gen_range(-1e3..1e3));
    let flip = if rng.gen_bool(0.5) { -1.0 } else { 1.0 };
    let (s, c) = theta.sin_cos();
    lm.map(|p| {
        let x = flip * p.x;
        Point::new(scale * (c * x - s * p.y) + tx, scale * (s * x + c * p.y) + ty)
    })
}

pub fn nominal_box() -> BoundingBox {
    facemorph::synth::nominal_box(FIXTURE_SIZE)
}

pub fn cli() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_facemorph"))
}
