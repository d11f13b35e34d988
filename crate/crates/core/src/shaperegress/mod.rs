//! Landmark localization with a cascade of boosted regression-tree ensembles
//! over pixel-intensity differences.
//!
//! Shapes are tracked in coordinates normalized to the face box (`[0, 1]²`
//! spans the box). Pixel reads round the box-relative offset before adding
//! the integer box origin, so moving the box and the image content together
//! by whole pixels reproduces the normalized prediction bit for bit.

mod model;
mod train;

pub use model::{
    predict_normalized, predict_shape, sample_indexed_pixels, similarity_linear_part, Anchor,
    RegressionTree, ShapeModel, Split, Stage,
};
pub use train::{
    train_shape_model, train_shape_model_with_history, ShapeTrainConfig, ShapeTraining,
    TrainingSample,
};

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{BoundingBox, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "5pt")]
    FivePoint,
    #[serde(rename = "68pt")]
    SixtyEightPoint,
}

impl Scheme {
    pub fn len(self) -> usize {
        match self {
            Scheme::FivePoint => 5,
            Scheme::SixtyEightPoint => 68,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::FivePoint => "5pt",
            Scheme::SixtyEightPoint => "68pt",
        })
    }
}

/// Ordered landmark points. For the 68-point scheme: jaw 0–16, brows 17–26,
/// nose 27–35, eyes 36–47, mouth 48–67.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub scheme: Scheme,
    pub points: Vec<Point>,
}

impl LandmarkSet {
    pub fn new(scheme: Scheme, points: Vec<Point>) -> Result<Self> {
        let lm = LandmarkSet { scheme, points };
        lm.validate()?;
        Ok(lm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.scheme.len() {
            return Err(Error::InvalidArgument(format!(
                "{} landmark set has {} points",
                self.scheme,
                self.points.len()
            )));
        }
        if let Some(i) = self.points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(format!("landmark {i} is not finite")));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> LandmarkSet {
        LandmarkSet {
            scheme: self.scheme,
            points: self.points.iter().map(|&p| f(p)).collect(),
        }
    }
}

/// On-disk landmark file: `{"scheme": "68pt", "points": [[x, y], ...]}` with
/// an optional `"bbox": {"x", "y", "w", "h"}` face box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkFile {
    pub scheme: Scheme,
    pub points: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BoundingBox>,
}

impl LandmarkFile {
    pub fn new(landmarks: &LandmarkSet, bbox: Option<BoundingBox>) -> Self {
        LandmarkFile {
            scheme: landmarks.scheme,
            points: landmarks.points.clone(),
            bbox,
        }
    }

    pub fn landmarks(&self) -> Result<LandmarkSet> {
        LandmarkSet::new(self.scheme, self.points.clone())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: LandmarkFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        file.landmarks()?;
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Per-index arithmetic mean of shapes sharing one scheme.
///
/// The mean is accumulated incrementally, so identical inputs reproduce
/// themselves exactly.
pub fn mean_shape(shapes: &[LandmarkSet]) -> Result<LandmarkSet> {
    let first = shapes
        .first()
        .ok_or_else(|| Error::InsufficientData("mean of zero shapes".into()))?;
    for s in shapes {
        if s.scheme != first.scheme {
            return Err(Error::SchemeMismatch {
                expected: first.scheme.to_string(),
                found: s.scheme.to_string(),
            });
        }
        s.validate()?;
    }
    let mut mean = first.points.clone();
    for (k, s) in shapes.iter().enumerate().skip(1) {
        let w = 1.0 / (k + 1) as f64;
        for (m, p) in mean.iter_mut().zip(&s.points) {
            m.x += (p.x - m.x) * w;
            m.y += (p.y - m.y) * w;
        }
    }
    LandmarkSet::new(first.scheme, mean)
}

/// Box-relative normalized coordinates.
pub fn normalize_points(points: &[Point], bbox: &BoundingBox) -> Vec<Point> {
    let (w, h) = (bbox.w as f64, bbox.h as f64);
    points
        .iter()
        .map(|p| Point::new((p.x - bbox.x as f64) / w, (p.y - bbox.y as f64) / h))
        .collect()
}

pub fn denormalize_points(points: &[Point], bbox: &BoundingBox) -> Vec<Point> {
    let (w, h) = (bbox.w as f64, bbox.h as f64);
    points
        .iter()
        .map(|p| Point::new(bbox.x as f64 + p.x * w, bbox.y as f64 + p.y * h))
        .collect()
}
