//! In-plane face alignment from five eye/nose landmarks.
//!
//! Coordinates put pixel centers on integers with y pointing down, so a
//! positive roll angle means the image-right eye sits lower than the left.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::imgcore::Image;
use crate::shaperegress::{LandmarkSet, Scheme};

/// Side of the aligned working frame.
pub const ALIGNED_SIZE: usize = 600;

/// Eye corners and nose tip. "Left" and "right" are as seen in the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FivePointLandmarks {
    pub left_eye_outer: Point,
    pub left_eye_inner: Point,
    pub right_eye_inner: Point,
    pub right_eye_outer: Point,
    pub nose_tip: Point,
}

impl FivePointLandmarks {
    pub fn points(&self) -> [Point; 5] {
        [
            self.left_eye_outer,
            self.left_eye_inner,
            self.right_eye_inner,
            self.right_eye_outer,
            self.nose_tip,
        ]
    }

    /// From a 5-point set (field order) or a 68-point set (36, 39, 42, 45, 30).
    pub fn from_landmarks(lm: &LandmarkSet) -> Self {
        let p = &lm.points;
        let idx = match lm.scheme {
            Scheme::FivePoint => [0, 1, 2, 3, 4],
            Scheme::SixtyEightPoint => [36, 39, 42, 45, 30],
        };
        FivePointLandmarks {
            left_eye_outer: p[idx[0]],
            left_eye_inner: p[idx[1]],
            right_eye_inner: p[idx[2]],
            right_eye_outer: p[idx[3]],
            nose_tip: p[idx[4]],
        }
    }

    fn check_inside(&self, img: &Image) -> Result<()> {
        let (w, h) = (img.width() as f64, img.height() as f64);
        for p in self.points() {
            if !p.is_finite() || p.x < -0.5 || p.y < -0.5 || p.x > w - 0.5 || p.y > h - 0.5 {
                return Err(Error::InvalidArgument(format!(
                    "landmark ({}, {}) outside the {}x{} image",
                    p.x, p.y, w, h
                )));
            }
        }
        Ok(())
    }
}

/// `p ↦ scale · R(rotation) · p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub rotation: f64,
    pub scale: f64,
    pub translation: Point,
}

impl SimilarityTransform {
    pub const IDENTITY: SimilarityTransform = SimilarityTransform {
        rotation: 0.0,
        scale: 1.0,
        translation: Point::new(0.0, 0.0),
    };

    pub fn new(rotation: f64, scale: f64, translation: Point) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) || !rotation.is_finite() || !translation.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "invalid similarity (rotation {rotation}, scale {scale})"
            )));
        }
        Ok(SimilarityTransform {
            rotation,
            scale,
            translation,
        })
    }

    #[inline]
    fn linear(&self, p: Point) -> Point {
        let (s, c) = self.rotation.sin_cos();
        Point::new(
            self.scale * (c * p.x - s * p.y),
            self.scale * (s * p.x + c * p.y),
        )
    }

    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        self.linear(p) + self.translation
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let inv = SimilarityTransform {
            rotation: -self.rotation,
            scale: 1.0 / self.scale,
            translation: Point::default(),
        };
        SimilarityTransform {
            translation: inv.linear(self.translation) * -1.0,
            ..inv
        }
    }
}

pub fn map_points(t: &SimilarityTransform, pts: &[Point]) -> Vec<Point> {
    pts.iter().map(|&p| t.apply(p)).collect()
}

/// Midpoints of each eye's two corners, `(left, right)`.
pub fn eye_centroids(lm: &FivePointLandmarks) -> (Point, Point) {
    (
        lm.left_eye_outer.midpoint(lm.left_eye_inner),
        lm.right_eye_inner.midpoint(lm.right_eye_outer),
    )
}

/// Angle of the line from `left` to `right`, radians in `(-π, π]`.
pub fn roll_angle(left: Point, right: Point) -> Result<f64> {
    if left == right {
        return Err(Error::DegenerateEyes);
    }
    Ok((right.y - left.y).atan2(right.x - left.x))
}

/// Transform that levels the eyes about their midpoint and scales the image
/// so its longer side spans `size` pixels.
pub fn alignment_transform(
    width: usize,
    height: usize,
    lm: &FivePointLandmarks,
    size: usize,
) -> Result<SimilarityTransform> {
    let (left, right) = eye_centroids(lm);
    let roll = roll_angle(left, right)?;
    let scale = size as f64 / width.max(height) as f64;
    let center = left.midpoint(right);
    // Where a plain resize would put the eye midpoint.
    let target = Point::new(scale * (center.x + 0.5) - 0.5, scale * (center.y + 0.5) - 0.5);
    let mut t = SimilarityTransform::new(-roll, scale, Point::default())?;
    t.translation = target - t.apply(center);
    Ok(t)
}

/// Resamples `img` through the inverse of `t` into a `size × size` frame.
/// Pixels that map outside the source are black.
pub fn warp(img: &Image, t: &SimilarityTransform, size: usize) -> Result<Image> {
    let inv = t.inverse();
    let (w, h, ch) = (img.width() as f64, img.height() as f64, img.channels());
    let mut data = Vec::with_capacity(size * size * ch);
    for y in 0..size {
        for x in 0..size {
            let src = inv.apply(Point::new(x as f64, y as f64));
            let inside = src.x >= -0.5 && src.y >= -0.5 && src.x <= w - 0.5 && src.y <= h - 0.5;
            for c in 0..ch {
                let v = if inside {
                    img.sample_bilinear(src.x, src.y, c).round().clamp(0.0, 255.0) as u8
                } else {
                    0
                };
                data.push(v);
            }
        }
    }
    Image::new(size, size, ch, data)
}

/// Rotates the face upright about the inter-ocular midpoint and rescales it to
/// `ALIGNED_SIZE²`. The returned transform maps input coordinates to aligned
/// ones.
pub fn align_face(img: &Image, lm: &FivePointLandmarks) -> Result<(Image, SimilarityTransform)> {
    align_face_to(img, lm, ALIGNED_SIZE)
}

pub fn align_face_to(
    img: &Image,
    lm: &FivePointLandmarks,
    size: usize,
) -> Result<(Image, SimilarityTransform)> {
    if size == 0 {
        return Err(Error::InvalidArgument("aligned size must be positive".into()));
    }
    lm.check_inside(img)?;
    let t = alignment_transform(img.width(), img.height(), lm, size)?;
    Ok((warp(img, &t, size)?, t))
}
