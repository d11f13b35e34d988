//! Geometric facial features from a 68-point shape: three distance ratios,
//! the nose-triangle top angle, and nose/mouth areas relative to an
//! elliptical face-area model.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::shaperegress::{LandmarkSet, Scheme};

/// Landmark indices used by the features. Every field can be overridden from
/// the pipeline config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LandmarkIndexMap {
    pub eyes_r1: (usize, usize),
    pub nose_r2: (usize, usize),
    pub mouth_r3: (usize, usize),
    pub temples_b1: (usize, usize),
    pub cheekbones_b2: (usize, usize),
    pub jaw_b3: (usize, usize),
    pub nose_apex: usize,
    pub face_width: (usize, usize),
    pub chin: usize,
    pub brow_left: usize,
    pub brow_right: usize,
    pub mouth_top: usize,
    pub mouth_bottom: usize,
}

impl Default for LandmarkIndexMap {
    fn default() -> Self {
        LandmarkIndexMap {
            eyes_r1: (39, 40),
            nose_r2: (31, 35),
            mouth_r3: (48, 54),
            temples_b1: (0, 16),
            cheekbones_b2: (2, 14),
            jaw_b3: (4, 12),
            nose_apex: 27,
            face_width: (1, 15),
            chin: 8,
            brow_left: 19,
            brow_right: 24,
            mouth_top: 51,
            mouth_bottom: 57,
        }
    }
}

impl LandmarkIndexMap {
    /// Same as the default but measuring R1 between the inner eye corners
    /// (39, 42).
    pub fn conventional() -> Self {
        LandmarkIndexMap {
            eyes_r1: (39, 42),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("eyes_r1", self.eyes_r1),
            ("nose_r2", self.nose_r2),
            ("mouth_r3", self.mouth_r3),
            ("temples_b1", self.temples_b1),
            ("cheekbones_b2", self.cheekbones_b2),
            ("jaw_b3", self.jaw_b3),
            ("face_width", self.face_width),
            ("mouth_vertical", (self.mouth_top, self.mouth_bottom)),
            ("brows", (self.brow_left, self.brow_right)),
        ];
        for (name, (a, b)) in pairs {
            if a > 67 || b > 67 || a == b {
                return Err(Error::InvalidArgument(format!("index pair {name} = ({a}, {b})")));
            }
        }
        for (name, i) in [("nose_apex", self.nose_apex), ("chin", self.chin)] {
            if i > 67 {
                return Err(Error::InvalidArgument(format!("index {name} = {i}")));
            }
        }
        Ok(())
    }
}

/// The six features, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub r1_b1: f64,
    pub r2_b2: f64,
    pub r3_b3: f64,
    pub nose_angle_deg: f64,
    pub r_nose: f64,
    pub r_mouth: f64,
}

impl FeatureVector {
    pub const NAMES: [&'static str; 6] = ["R1/B1", "R2/B2", "R3/B3", "NoseAngle", "RNose", "RMouth"];
    pub const CSV_HEADER: [&'static str; 6] =
        ["r1_b1", "r2_b2", "r3_b3", "nose_angle_deg", "r_nose", "r_mouth"];

    pub fn to_array(&self) -> [f64; 6] {
        [self.r1_b1, self.r2_b2, self.r3_b3, self.nose_angle_deg, self.r_nose, self.r_mouth]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        FeatureVector {
            r1_b1: v[0],
            r2_b2: v[1],
            r3_b3: v[2],
            nose_angle_deg: v[3],
            r_nose: v[4],
            r_mouth: v[5],
        }
    }
}

fn check68(lm: &LandmarkSet) -> Result<&[Point]> {
    if lm.scheme != Scheme::SixtyEightPoint {
        return Err(Error::SchemeMismatch {
            expected: Scheme::SixtyEightPoint.to_string(),
            found: lm.scheme.to_string(),
        });
    }
    lm.validate()?;
    Ok(&lm.points)
}

fn pair_distance(p: &[Point], (a, b): (usize, usize)) -> f64 {
    p[a].distance(p[b])
}

pub fn distance_ratios(lm: &LandmarkSet, map: &LandmarkIndexMap) -> Result<(f64, f64, f64)> {
    let p = check68(lm)?;
    let ratio = |num: (usize, usize), base: (usize, usize), name: &str| {
        let b = pair_distance(p, base);
        if b == 0.0 {
            return Err(Error::DegenerateFace(format!(
                "baseline {name} between landmarks {} and {} has zero length",
                base.0, base.1
            )));
        }
        Ok(pair_distance(p, num) / b)
    };
    Ok((
        ratio(map.eyes_r1, map.temples_b1, "B1")?,
        ratio(map.nose_r2, map.cheekbones_b2, "B2")?,
        ratio(map.mouth_r3, map.jaw_b3, "B3")?,
    ))
}

/// Angle at `apex` of the triangle (apex, left, right), in degrees, by the
/// law of cosines.
pub fn triangle_angle(apex: Point, left: Point, right: Point) -> Result<f64> {
    let al = apex.distance(left);
    let ar = apex.distance(right);
    let lr = left.distance(right);
    if al == 0.0 || ar == 0.0 || lr == 0.0 {
        return Err(Error::DegenerateTriangle("zero-length side".into()));
    }
    let (u, v) = (left - apex, right - apex);
    let cross = u.x * v.y - u.y * v.x;
    if cross.abs() <= 1e-12 * al * ar {
        return Err(Error::DegenerateTriangle("collinear points".into()));
    }
    let cos = ((al * al + ar * ar - lr * lr) / (2.0 * al * ar)).clamp(-1.0, 1.0);
    Ok(cos.acos().to_degrees())
}

pub fn nose_angle(lm: &LandmarkSet, map: &LandmarkIndexMap) -> Result<f64> {
    let p = check68(lm)?;
    triangle_angle(p[map.nose_apex], p[map.nose_r2.0], p[map.nose_r2.1])
}

pub fn face_ellipse_area(lm: &LandmarkSet, map: &LandmarkIndexMap) -> Result<f64> {
    let p = check68(lm)?;
    let minor = pair_distance(p, map.face_width);
    let major = p[map.chin].distance(p[map.brow_left].midpoint(p[map.brow_right]));
    if minor == 0.0 || major == 0.0 {
        return Err(Error::DegenerateFace("face ellipse axis has zero length".into()));
    }
    Ok(ellipse_area(minor, major))
}

/// Area of the ellipse with full axis lengths `a` and `b`.
pub fn ellipse_area(a: f64, b: f64) -> f64 {
    PI * (a / 2.0) * (b / 2.0)
}

/// Unsigned shoelace area.
pub fn polygon_area(points: &[Point]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::NotAPolygon(points.len()));
    }
    let n = points.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (p, q) = (points[i], points[(i + 1) % n]);
            p.x * q.y - q.x * p.y
        })
        .sum();
    Ok(twice.abs() / 2.0)
}

pub fn area_ratios(lm: &LandmarkSet, map: &LandmarkIndexMap) -> Result<(f64, f64)> {
    let face = face_ellipse_area(lm, map)?;
    let p = &lm.points;
    let nose = polygon_area(&[p[map.nose_apex], p[map.nose_r2.0], p[map.nose_r2.1]])?;
    let mouth = ellipse_area(
        pair_distance(p, map.mouth_r3),
        pair_distance(p, (map.mouth_top, map.mouth_bottom)),
    );
    Ok((nose / face, mouth / face))
}

pub fn extract_features(lm: &LandmarkSet, map: &LandmarkIndexMap) -> Result<FeatureVector> {
    map.validate()?;
    let (r1_b1, r2_b2, r3_b3) = distance_ratios(lm, map)?;
    let nose_angle_deg = nose_angle(lm, map).map_err(|e| match e {
        Error::DegenerateTriangle(m) => Error::DegenerateTriangle(format!(
            "nose landmarks {}, {}, {}: {m}",
            map.nose_apex, map.nose_r2.0, map.nose_r2.1
        )),
        e => e,
    })?;
    let (r_nose, r_mouth) = area_ratios(lm, map)?;
    Ok(FeatureVector {
        r1_b1,
        r2_b2,
        r3_b3,
        nose_angle_deg,
        r_nose,
        r_mouth,
    })
}
