use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{denormalize_points, LandmarkSet, Scheme};
use crate::error::{Error, Result};
use crate::geom::{BoundingBox, Point};
use crate::imgcore::{to_grayscale, Image};

/// A sampled pixel position: landmark index plus an offset expressed in the
/// mean-shape frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub landmark: usize,
    pub offset: Point,
}

/// Goes left when `I[a] − I[b] > threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub a: usize,
    pub b: usize,
    pub threshold: f64,
}

/// Complete binary tree stored in heap order: node `i` has children `2i+1`
/// (left) and `2i+2` (right). `splits.len() = 2^depth − 1` and
/// `leaves.len() = 2^depth`; each leaf is a flat `[dx0, dy0, dx1, dy1, ...]`
/// displacement of the whole shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub splits: Vec<Split>,
    pub leaves: Vec<Vec<f64>>,
}

impl RegressionTree {
    pub fn leaf_index(&self, intensities: &[u8]) -> usize {
        let mut i = 0;
        while i < self.splits.len() {
            let s = &self.splits[i];
            let diff = intensities[s.a] as f64 - intensities[s.b] as f64;
            i = if diff > s.threshold { 2 * i + 1 } else { 2 * i + 2 };
        }
        i - self.splits.len()
    }

    pub fn leaf(&self, intensities: &[u8]) -> &[f64] {
        &self.leaves[self.leaf_index(intensities)]
    }

    fn validate(&self, n_points: usize, n_anchors: usize) -> Result<()> {
        let leaves = self.splits.len() + 1;
        if !leaves.is_power_of_two() || self.leaves.len() != leaves {
            return Err(Error::InvalidArgument(format!(
                "tree with {} splits and {} leaves is not complete",
                self.splits.len(),
                self.leaves.len()
            )));
        }
        for s in &self.splits {
            if s.a >= n_anchors || s.b >= n_anchors || !s.threshold.is_finite() {
                return Err(Error::InvalidArgument(format!("invalid split {s:?}")));
            }
        }
        if self.leaves.iter().any(|l| l.len() != 2 * n_points || l.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument(
                "leaf displacement has the wrong length or is not finite".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub anchors: Vec<Anchor>,
    pub trees: Vec<RegressionTree>,
}

/// Mean shape (normalized box coordinates) plus the regression cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeModel {
    pub scheme: Scheme,
    pub mean_shape: Vec<Point>,
    pub nu: f64,
    pub stages: Vec<Stage>,
}

impl ShapeModel {
    pub fn validate(&self) -> Result<()> {
        let n = self.scheme.len();
        if self.mean_shape.len() != n {
            return Err(Error::InvalidArgument(format!(
                "mean shape has {} points, scheme {} needs {n}",
                self.mean_shape.len(),
                self.scheme
            )));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::InvalidArgument(format!("shrinkage {} outside (0, 1]", self.nu)));
        }
        for stage in &self.stages {
            if stage.anchors.iter().any(|a| a.landmark >= n || !a.offset.is_finite()) {
                return Err(Error::InvalidArgument("anchor references an invalid landmark".into()));
            }
            for tree in &stage.trees {
                tree.validate(n, stage.anchors.len())?;
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: ShapeModel = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Linear part `[a −b; b a]` of the least-squares similarity taking
/// `from` onto `to` (both centered first). Returns `(a, b)`.
pub fn similarity_linear_part(from: &[Point], to: &[Point]) -> (f64, f64) {
    let n = from.len() as f64;
    let centroid = |pts: &[Point]| {
        let s = pts.iter().fold(Point::default(), |acc, &p| acc + p);
        Point::new(s.x / n, s.y / n)
    };
    let (cf, ct) = (centroid(from), centroid(to));
    let (mut dot, mut cross, mut norm) = (0.0, 0.0, 0.0);
    for (&f, &t) in from.iter().zip(to) {
        let (f, t) = (f - cf, t - ct);
        dot += f.x * t.x + f.y * t.y;
        cross += f.x * t.y - f.y * t.x;
        norm += f.x * f.x + f.y * f.y;
    }
    if norm == 0.0 {
        return (1.0, 0.0);
    }
    (dot / norm, cross / norm)
}

/// Intensities at the anchors, placed relative to the current normalized
/// `estimate` with offsets warped by the similarity from `reference` to
/// `estimate`. Lookups are nearest-pixel; reads outside the image give 0.
pub fn sample_indexed_pixels(
    img: &Image,
    frame: &BoundingBox,
    estimate: &[Point],
    reference: &[Point],
    anchors: &[Anchor],
) -> Vec<u8> {
    let (a, b) = similarity_linear_part(reference, estimate);
    let (w, h) = (frame.w as f64, frame.h as f64);
    anchors
        .iter()
        .map(|anchor| {
            let o = anchor.offset;
            let base = estimate[anchor.landmark];
            let u = Point::new(base.x + a * o.x - b * o.y, base.y + b * o.x + a * o.y);
            let px = frame.x as i64 + (u.x * w).round() as i64;
            let py = frame.y as i64 + (u.y * h).round() as i64;
            img.get_or_zero(px, py)
        })
        .collect()
}

/// Runs one cascade stage in place: features are read once from the
/// stage-entry shape, then every tree's leaf is added with shrinkage `nu`.
pub(crate) fn apply_stage(
    img: &Image,
    frame: &BoundingBox,
    shape: &mut [Point],
    mean: &[Point],
    stage: &Stage,
    nu: f64,
) {
    let intensities = sample_indexed_pixels(img, frame, shape, mean, &stage.anchors);
    for tree in &stage.trees {
        let leaf = tree.leaf(&intensities);
        for (p, d) in shape.iter_mut().zip(leaf.chunks_exact(2)) {
            p.x += nu * d[0];
            p.y += nu * d[1];
        }
    }
}

/// Prediction in box-normalized coordinates.
pub fn predict_normalized(img: &Image, bbox: &BoundingBox, model: &ShapeModel) -> Result<Vec<Point>> {
    model.validate()?;
    let gray;
    let img = if img.channels() == 1 {
        img
    } else {
        gray = to_grayscale(img);
        &gray
    };
    let mut shape = model.mean_shape.clone();
    for stage in &model.stages {
        apply_stage(img, bbox, &mut shape, &model.mean_shape, stage, model.nu);
    }
    Ok(shape)
}

/// Places the mean shape in `bbox` and refines it through every stage.
/// A model without stages yields the placed mean shape.
pub fn predict_shape(img: &Image, bbox: &BoundingBox, model: &ShapeModel) -> Result<LandmarkSet> {
    let normalized = predict_normalized(img, bbox, model)?;
    LandmarkSet::new(model.scheme, denormalize_points(&normalized, bbox))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five_mean() -> Vec<Point> {
        vec![
            Point::new(0.25, 0.3),
            Point::new(0.4, 0.3),
            Point::new(0.6, 0.3),
            Point::new(0.75, 0.3),
            Point::new(0.5, 0.6),
        ]
    }

    fn empty_model() -> ShapeModel {
        ShapeModel {
            scheme: Scheme::FivePoint,
            mean_shape: five_mean(),
            nu: 0.1,
            stages: vec![],
        }
    }

    fn gradient_image() -> Image {
        Image::from_fn(100, 80, |x, y| ((x + 2 * y) % 256) as u8).unwrap()
    }

    #[test]
    fn empty_model_places_mean_shape() {
        let b = BoundingBox::new(10, 5, 40, 60).unwrap();
        let out = predict_shape(&gradient_image(), &b, &empty_model()).unwrap();
        let expect: Vec<Point> = five_mean()
            .iter()
            .map(|p| Point::new(10.0 + p.x * 40.0, 5.0 + p.y * 60.0))
            .collect();
        assert_eq!(out.points, expect);
    }

    #[test]
    fn single_leaf_tree_adds_its_displacement() {
        let delta = vec![0.01, -0.02, 0.0, 0.05, 0.1, 0.1, -0.1, 0.0, 0.02, 0.03];
        let mut model = empty_model();
        model.nu = 1.0;
        model.stages.push(Stage {
            anchors: vec![],
            trees: vec![RegressionTree {
                splits: vec![],
                leaves: vec![delta.clone()],
            }],
        });
        let out = predict_normalized(&gradient_image(), &BoundingBox::new(0, 0, 50, 50).unwrap(), &model)
            .unwrap();
        for (i, p) in out.iter().enumerate() {
            assert_eq!(p.x, five_mean()[i].x + delta[2 * i]);
            assert_eq!(p.y, five_mean()[i].y + delta[2 * i + 1]);
        }
    }

    #[test]
    fn zero_offset_reads_landmark_pixel() {
        let img = gradient_image();
        let frame = BoundingBox::new(10, 10, 50, 40).unwrap();
        let mean = five_mean();
        let anchors: Vec<Anchor> = (0..5)
            .map(|k| Anchor {
                landmark: k,
                offset: Point::default(),
            })
            .collect();
        let got = sample_indexed_pixels(&img, &frame, &mean, &mean, &anchors);
        for (k, v) in got.iter().enumerate() {
            let x = 10 + (mean[k].x * 50.0).round() as usize;
            let y = 10 + (mean[k].y * 40.0).round() as usize;
            assert_eq!(*v, img.get(x, y, 0));
        }
    }

    #[test]
    fn offsets_follow_the_similarity_warp() {
        let mean = five_mean();
        assert_eq!(similarity_linear_part(&mean, &mean), (1.0, 0.0));
        let doubled: Vec<Point> = mean.iter().map(|&p| p * 2.0).collect();
        assert_eq!(similarity_linear_part(&mean, &doubled), (2.0, 0.0));

        // With the estimate scaled ×2 an offset of (0.1, 0) lands 0.2 away.
        let img = Image::from_fn(200, 200, |x, _| x as u8).unwrap();
        let frame = BoundingBox::new(0, 0, 100, 100).unwrap();
        let anchors = [Anchor {
            landmark: 0,
            offset: Point::new(0.1, 0.0),
        }];
        let same = sample_indexed_pixels(&img, &frame, &mean, &mean, &anchors);
        assert_eq!(same[0] as f64, ((mean[0].x + 0.1) * 100.0).round());
        let scaled = sample_indexed_pixels(&img, &frame, &doubled, &mean, &anchors);
        assert_eq!(scaled[0] as f64, ((doubled[0].x + 0.2) * 100.0).round());
    }

    #[test]
    fn out_of_image_reads_are_zero() {
        let img = Image::filled(10, 10, 1, 200).unwrap();
        let frame = BoundingBox::new(0, 0, 10, 10).unwrap();
        let mean = five_mean();
        let anchors = [Anchor {
            landmark: 0,
            offset: Point::new(-5.0, 0.0),
        }];
        assert_eq!(sample_indexed_pixels(&img, &frame, &mean, &mean, &anchors), vec![0]);
    }

    #[test]
    fn invalid_models_are_rejected() {
        let mut m = empty_model();
        m.mean_shape.pop();
        assert!(m.validate().is_err());
        let mut m = empty_model();
        m.stages.push(Stage {
            anchors: vec![],
            trees: vec![RegressionTree {
                splits: vec![Split { a: 0, b: 1, threshold: 0.0 }],
                leaves: vec![vec![0.0; 10], vec![0.0; 10]],
            }],
        });
        assert!(m.validate().is_err());
    }
}
