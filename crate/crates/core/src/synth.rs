//! Parametric synthetic faces: a 68-point template driven by a handful of
//! anatomical parameters, a renderer that paints it into a grayscale image,
//! and seeded generators for cohorts and training sets.
//!
//! Template coordinates put the eye line at `y = 0` with the face centered on
//! `x = 0`; `y` grows downward. All horizontal measurements used by the
//! distance features are independent of the `vertical` factor, which scales
//! nose length, jaw depth and brow height together. That lets a cohort shift
//! change the nose angle and mouth ratio while leaving the other four
//! features distributed identically.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::SimilarityTransform;
use crate::geom::{BoundingBox, Point};
use crate::imgcore::Image;
use crate::shaperegress::{LandmarkSet, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceParams {
    pub half_width: f64,
    pub jaw_depth: f64,
    pub brow_height: f64,
    pub brow_arch: f64,
    pub eye_offset: f64,
    pub eye_width: f64,
    pub eye_height: f64,
    pub nose_length: f64,
    pub nose_half_width: f64,
    pub mouth_y: f64,
    pub mouth_half_width: f64,
    pub upper_lip: f64,
    pub lower_lip: f64,
    /// Scales nose length and nostril width together.
    pub nose_scale: f64,
    /// Scales mouth width and lip heights together.
    pub mouth_scale: f64,
    /// Scales every vertical extent below and above the eye line.
    pub vertical: f64,
    /// Scales lip heights only.
    pub lip_scale: f64,
}

impl Default for FaceParams {
    fn default() -> Self {
        FaceParams {
            half_width: 100.0,
            jaw_depth: 120.0,
            brow_height: 30.0,
            brow_arch: 8.0,
            eye_offset: 45.0,
            eye_width: 30.0,
            eye_height: 12.0,
            nose_length: 60.0,
            nose_half_width: 20.0,
            mouth_y: 88.0,
            mouth_half_width: 32.0,
            upper_lip: 10.0,
            lower_lip: 13.0,
            nose_scale: 1.0,
            mouth_scale: 1.0,
            vertical: 1.0,
            lip_scale: 1.0,
        }
    }
}

/// Relative spread (half-range of a uniform factor) of each anatomical
/// parameter, in field order up to `lower_lip`.
const SPREAD: [f64; 13] = [
    0.08, 0.10, 0.15, 0.15, 0.08, 0.10, 0.15, 0.12, 0.12, 0.06, 0.10, 0.15, 0.15,
];

impl FaceParams {
    fn base_values(&self) -> [f64; 13] {
        [
            self.half_width,
            self.jaw_depth,
            self.brow_height,
            self.brow_arch,
            self.eye_offset,
            self.eye_width,
            self.eye_height,
            self.nose_length,
            self.nose_half_width,
            self.mouth_y,
            self.mouth_half_width,
            self.upper_lip,
            self.lower_lip,
        ]
    }

    fn with_base_values(&self, v: [f64; 13]) -> Self {
        FaceParams {
            half_width: v[0],
            jaw_depth: v[1],
            brow_height: v[2],
            brow_arch: v[3],
            eye_offset: v[4],
            eye_width: v[5],
            eye_height: v[6],
            nose_length: v[7],
            nose_half_width: v[8],
            mouth_y: v[9],
            mouth_half_width: v[10],
            upper_lip: v[11],
            lower_lip: v[12],
            ..*self
        }
    }

    /// Default face with every anatomical parameter perturbed by `u ∈ [0, 1)`
    /// mapped to a uniform factor within its spread.
    fn perturbed(u: &[f64; 13]) -> Self {
        let base = FaceParams::default();
        let mut v = base.base_values();
        for ((x, s), u) in v.iter_mut().zip(SPREAD).zip(u) {
            *x *= 1.0 + s * (2.0 * u - 1.0);
        }
        base.with_base_values(v)
    }

    /// An individual drawn independently per parameter.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::sample(&mut rng)
    }

    pub fn sample(rng: &mut impl Rng) -> Self {
        let mut u = [0.0; 13];
        u.iter_mut().for_each(|x| *x = rng.gen());
        Self::perturbed(&u)
    }

    /// 68 landmarks in template coordinates.
    pub fn template_points(&self) -> Vec<Point> {
        let k = self.vertical;
        let a = self.half_width;
        let depth = self.jaw_depth * k;
        let brow = self.brow_height * k;
        let arch = self.brow_arch * k;
        let (nose_len, nose_hw) = (
            self.nose_length * self.nose_scale * k,
            self.nose_half_width * self.nose_scale,
        );
        let my = self.mouth_y * k;
        let mw = self.mouth_half_width * self.mouth_scale;
        let up = self.upper_lip * self.mouth_scale * self.lip_scale;
        let lo = self.lower_lip * self.mouth_scale * self.lip_scale;
        let (ew, eh) = (self.eye_width, self.eye_height);

        let mut p = Vec::with_capacity(68);
        for i in 0..17 {
            let t = PI * i as f64 / 16.0;
            p.push(Point::new(-a * t.cos(), depth * t.sin()));
        }
        for j in 0..5 {
            let lift = brow + arch * (PI * j as f64 / 4.0).sin();
            p.push(Point::new(-80.0 + 13.0 * j as f64, -lift));
        }
        for j in 0..5 {
            let lift = brow + arch * (PI * j as f64 / 4.0).sin();
            p.push(Point::new(28.0 + 13.0 * j as f64, -lift));
        }
        for j in 0..4 {
            p.push(Point::new(0.0, 0.25 * nose_len * j as f64));
        }
        let dip = 0.06 * nose_len;
        p.extend([
            Point::new(-nose_hw, nose_len),
            Point::new(-nose_hw / 2.0, nose_len + 0.6 * dip),
            Point::new(0.0, nose_len + dip),
            Point::new(nose_hw / 2.0, nose_len + 0.6 * dip),
            Point::new(nose_hw, nose_len),
        ]);
        for cx in [-self.eye_offset, self.eye_offset] {
            p.extend([
                Point::new(cx - ew / 2.0, 0.0),
                Point::new(cx - ew / 6.0, -eh / 2.0),
                Point::new(cx + ew / 6.0, -eh / 2.0),
                Point::new(cx + ew / 2.0, 0.0),
                Point::new(cx + ew / 6.0, eh / 2.0),
                Point::new(cx - ew / 6.0, eh / 2.0),
            ]);
        }
        p.extend([
            Point::new(-mw, my),
            Point::new(-2.0 * mw / 3.0, my - 0.7 * up),
            Point::new(-mw / 3.0, my - 0.95 * up),
            Point::new(0.0, my - up),
            Point::new(mw / 3.0, my - 0.95 * up),
            Point::new(2.0 * mw / 3.0, my - 0.7 * up),
            Point::new(mw, my),
            Point::new(2.0 * mw / 3.0, my + 0.7 * lo),
            Point::new(mw / 3.0, my + 0.95 * lo),
            Point::new(0.0, my + lo),
            Point::new(-mw / 3.0, my + 0.95 * lo),
            Point::new(-2.0 * mw / 3.0, my + 0.7 * lo),
            Point::new(-0.8 * mw, my),
            Point::new(-mw / 3.0, my - 0.3 * up),
            Point::new(0.0, my - 0.3 * up),
            Point::new(mw / 3.0, my - 0.3 * up),
            Point::new(0.8 * mw, my),
            Point::new(mw / 3.0, my + 0.3 * lo),
            Point::new(0.0, my + 0.3 * lo),
            Point::new(-mw / 3.0, my + 0.3 * lo),
        ]);
        p
    }

    pub fn landmarks(&self) -> LandmarkSet {
        LandmarkSet {
            scheme: Scheme::SixtyEightPoint,
            points: self.template_points(),
        }
    }

    /// Forehead top above the eye line, in template units.
    fn forehead(&self) -> f64 {
        (self.brow_height + self.brow_arch) * self.vertical + 25.0
    }
}

/// Template-frame point on the vertical midline roughly at the face center,
/// and the side of a square that encloses the face.
pub fn template_frame(params: &FaceParams) -> (Point, f64) {
    let top = -params.forehead();
    let bottom = params.jaw_depth * params.vertical;
    let side = (2.0 * params.half_width).max(bottom - top);
    (Point::new(0.0, (top + bottom) / 2.0), side)
}

/// Intensity levels of the rendered face parts.
const BACKGROUND: f64 = 60.0;
const SKIN: f64 = 175.0;
const BROW: f64 = 70.0;
const EYE: f64 = 30.0;
const NOSE_LINE: f64 = 125.0;
const NOSTRIL: f64 = 90.0;
const LIP: f64 = 105.0;
const MOUTH_GAP: f64 = 45.0;

fn inside_polygon(poly: &[Point], q: Point) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > q.y) != (b.y > q.y) && q.x < (b.x - a.x) * (q.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn segment_distance(a: Point, b: Point, q: Point) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 == 0.0 { 0.0 } else { ((q - a).dot(ab) / len2).clamp(0.0, 1.0) };
    q.distance(a + ab * t)
}

fn near_polyline(line: &[Point], q: Point, width: f64) -> bool {
    line.windows(2).any(|s| segment_distance(s[0], s[1], q) <= width)
}

struct FaceShape {
    outline: Vec<Point>,
    eyes: [Vec<Point>; 2],
    brows: [Vec<Point>; 2],
    bridge: Vec<Point>,
    nostrils: Vec<Point>,
    lips: Vec<Point>,
    gap: Vec<Point>,
}

impl FaceShape {
    fn new(params: &FaceParams) -> Self {
        let p = params.template_points();
        let mut outline: Vec<Point> = p[..17].to_vec();
        // Forehead arc from the right temple back to the left one.
        let (a, top) = (params.half_width, params.forehead());
        for i in 1..16 {
            let t = PI * i as f64 / 16.0;
            outline.push(Point::new(a * t.cos(), -top * t.sin()));
        }
        FaceShape {
            outline,
            eyes: [p[36..42].to_vec(), p[42..48].to_vec()],
            brows: [p[17..22].to_vec(), p[22..27].to_vec()],
            bridge: p[27..31].to_vec(),
            nostrils: p[31..36].to_vec(),
            lips: p[48..60].to_vec(),
            gap: p[60..68].to_vec(),
        }
    }

    fn intensity(&self, q: Point) -> f64 {
        if !inside_polygon(&self.outline, q) {
            return BACKGROUND;
        }
        if self.eyes.iter().any(|e| inside_polygon(e, q)) {
            return EYE;
        }
        if self.brows.iter().any(|b| near_polyline(b, q, 3.5)) {
            return BROW;
        }
        if inside_polygon(&self.gap, q) {
            return MOUTH_GAP;
        }
        if inside_polygon(&self.lips, q) {
            return LIP;
        }
        if near_polyline(&self.nostrils, q, 2.5) {
            return NOSTRIL;
        }
        if near_polyline(&self.bridge, q, 2.0) {
            return NOSE_LINE;
        }
        SKIN
    }
}

/// Paints `params` through `pose` (template → image) into a `width × height`
/// grayscale image with 2×2 supersampling and uniform noise of amplitude
/// `noise`. Returns the image and the posed landmarks.
pub fn render_face(
    params: &FaceParams,
    pose: &SimilarityTransform,
    width: usize,
    height: usize,
    noise: f64,
    seed: u64,
) -> (Image, LandmarkSet) {
    let shape = FaceShape::new(params);
    let inv = pose.inverse();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let mut sum = 0.0;
            for (dx, dy) in [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)] {
                sum += shape.intensity(inv.apply(Point::new(x as f64 + dx, y as f64 + dy)));
            }
            let n = if noise > 0.0 { rng.gen_range(-noise..=noise) } else { 0.0 };
            data.push((sum / 4.0 + n).round().clamp(0.0, 255.0) as u8);
        }
    }
    let image = Image::new(width, height, 1, data).expect("dimensions match buffer");
    let landmarks = params.landmarks().map(|p| pose.apply(p));
    (image, landmarks)
}

/// Pose placing the template face centered in a `size²` image with its
/// enclosing square spanning `fill` of the side, rotated by `roll` radians.
pub fn centered_pose(params: &FaceParams, size: usize, fill: f64, roll: f64) -> SimilarityTransform {
    let (center, side) = template_frame(params);
    let scale = fill * size as f64 / side;
    let mut t = SimilarityTransform {
        rotation: roll,
        scale,
        translation: Point::default(),
    };
    let target = Point::new(size as f64 / 2.0, size as f64 / 2.0);
    t.translation = target - t.apply(center);
    t
}

/// Shift applied to the second cohort of [`synthetic_cohorts`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortShift {
    pub vertical: f64,
    pub lip_scale: f64,
}

impl Default for CohortShift {
    fn default() -> Self {
        CohortShift {
            vertical: 1.15,
            lip_scale: 1.35,
        }
    }
}

/// Latin-hypercube draw of `n` individuals: every parameter's range is cut
/// into `n` equal strata and each stratum is used exactly once, in an
/// independent random order per parameter.
pub fn stratified_faces(n: usize, rng: &mut impl Rng) -> Vec<FaceParams> {
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(SPREAD.len());
    for _ in 0..SPREAD.len() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        columns.push(
            strata
                .into_iter()
                .map(|k| (k as f64 + rng.gen::<f64>()) / n as f64)
                .collect(),
        );
    }
    (0..n)
        .map(|i| {
            let mut u = [0.0; 13];
            for (j, col) in columns.iter().enumerate() {
                u[j] = col[i];
            }
            FaceParams::perturbed(&u)
        })
        .collect()
}

/// Two cohorts drawn from the same parameter distribution; the first one is
/// then shifted by `shift`.
pub fn synthetic_cohorts(
    seed: u64,
    n_shifted: usize,
    n_reference: usize,
    shift: CohortShift,
) -> (Vec<FaceParams>, Vec<FaceParams>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shifted = stratified_faces(n_shifted, &mut rng)
        .into_iter()
        .map(|p| FaceParams {
            vertical: shift.vertical,
            lip_scale: shift.lip_scale,
            ..p
        })
        .collect();
    let reference = stratified_faces(n_reference, &mut rng);
    (shifted, reference)
}

/// One rendered training or test example.
#[derive(Debug, Clone)]
pub struct SyntheticFace {
    pub params: FaceParams,
    pub image: Image,
    pub bbox: BoundingBox,
    pub landmarks: LandmarkSet,
}

/// The face square a centered placement gives in a `size²` image.
pub fn nominal_box(size: usize) -> BoundingBox {
    let side = (NOMINAL_FILL * size as f64).round() as i32;
    let origin = (size as i32 - side) / 2;
    BoundingBox {
        x: origin,
        y: origin,
        w: side,
        h: side,
    }
}

const NOMINAL_FILL: f64 = 0.7;

/// Renders `params` centered in a `size²` image under random roll (±0.15
/// rad), zoom (±8 %) and shift (±5 % of the side). The box is the nominal
/// face square, so it carries no information about the jitter.
pub fn jittered_face(params: FaceParams, size: usize, rng: &mut impl Rng) -> SyntheticFace {
    let mut pose = centered_pose(&params, size, NOMINAL_FILL, rng.gen_range(-0.15..0.15));
    let zoom = rng.gen_range(0.92..1.08);
    pose.scale *= zoom;
    let c = Point::new(size as f64 / 2.0, size as f64 / 2.0);
    pose.translation = c + (pose.translation - c) * zoom;
    let j = 0.05 * size as f64;
    pose.translation = pose.translation + Point::new(rng.gen_range(-j..j), rng.gen_range(-j..j));
    let (image, landmarks) = render_face(&params, &pose, size, size, 8.0, rng.gen());
    SyntheticFace {
        params,
        image,
        bbox: nominal_box(size),
        landmarks,
    }
}

/// Faces of random anatomy, each through [`jittered_face`].
pub fn jittered_faces(seed: u64, count: usize, size: usize) -> Vec<SyntheticFace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let params = FaceParams::sample(&mut rng);
            jittered_face(params, size, &mut rng)
        })
        .collect()
}
