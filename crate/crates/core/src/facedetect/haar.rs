//! Haar-like features over an integral image and a boosted-stump cascade
//! evaluator.
//!
//! Cascade JSON schema:
//!
//! ```json
//! {
//!   "window_width": 24, "window_height": 24,
//!   "stages": [{
//!     "threshold": 0.5,
//!     "stumps": [{
//!       "feature": {"rects": [{"x": 0.0, "y": 0.0, "w": 1.0, "h": 0.5, "weight": -1.0},
//!                             {"x": 0.0, "y": 0.5, "w": 1.0, "h": 0.5, "weight": 1.0}]},
//!       "threshold": 10.0, "left": 0.0, "right": 1.0
//!     }]
//!   }]
//! }
//! ```
//!
//! Rect coordinates are fractions of the detection window. A stump compares
//! the feature value divided by the window area (a mean-intensity difference,
//! so thresholds do not depend on scale) against its threshold and emits
//! `left` when below, `right` otherwise.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{non_max_suppression, Detection, DEFAULT_NMS_IOU};
use crate::error::{Error, Result};
use crate::geom::BoundingBox;
use crate::imgcore::IntegralImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HaarRect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaarFeature {
    pub rects: Vec<HaarRect>,
}

impl HaarFeature {
    pub fn new(rects: Vec<HaarRect>) -> Result<Self> {
        let f = HaarFeature { rects };
        f.validate()?;
        Ok(f)
    }

    /// Two rects stacked vertically: `top` weight −1, `bottom` weight +1,
    /// spanning rows `[y0, y1)` and `[y1, y2)` of the unit window.
    pub fn vertical_pair(y0: f64, y1: f64, y2: f64) -> Result<Self> {
        Self::new(vec![
            HaarRect {
                x: 0.0,
                y: y0,
                w: 1.0,
                h: y1 - y0,
                weight: -1.0,
            },
            HaarRect {
                x: 0.0,
                y: y1,
                w: 1.0,
                h: y2 - y1,
                weight: 1.0,
            },
        ])
    }

    pub fn validate(&self) -> Result<()> {
        if self.rects.len() < 2 {
            return Err(Error::InvalidFeatureGeometry(format!(
                "need at least 2 rects, got {}",
                self.rects.len()
            )));
        }
        for r in &self.rects {
            let vals = [r.x, r.y, r.w, r.h, r.weight];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidFeatureGeometry("non-finite rect".into()));
            }
            let eps = 1e-9;
            if r.x < -eps || r.y < -eps || r.w <= 0.0 || r.h <= 0.0
                || r.x + r.w > 1.0 + eps
                || r.y + r.h > 1.0 + eps
            {
                return Err(Error::InvalidFeatureGeometry(format!(
                    "rect {r:?} leaves the unit window"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaarStump {
    pub feature: HaarFeature,
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaarStage {
    pub stumps: Vec<HaarStump>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaarCascade {
    pub window_width: usize,
    pub window_height: usize,
    pub stages: Vec<HaarStage>,
}

impl HaarCascade {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::EmptyCascade);
        }
        if self.window_width == 0 || self.window_height == 0 {
            return Err(Error::InvalidArgument("cascade window must be non-empty".into()));
        }
        for stage in &self.stages {
            for stump in &stage.stumps {
                stump.feature.validate()?;
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cascade: HaarCascade =
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cascade.validate()?;
        Ok(cascade)
    }

    /// Returns the summed stage scores if the window passes every stage.
    fn evaluate(&self, ii: &IntegralImage, window: &BoundingBox) -> Result<Option<f64>> {
        let area = window.area() as f64;
        let mut total = 0.0;
        for stage in &self.stages {
            let mut sum = 0.0;
            for stump in &stage.stumps {
                let v = haar_feature_value(ii, &stump.feature, window)? / area;
                sum += if v < stump.threshold {
                    stump.left
                } else {
                    stump.right
                };
            }
            if sum < stage.threshold {
                return Ok(None);
            }
            total += sum;
        }
        Ok(Some(total))
    }
}

/// Pixel span of a unit-window interval `[start, start + len)` inside a
/// window of `size` pixels.
fn scaled_span(start: f64, len: f64, size: i32) -> (i32, i32) {
    let a = (start * size as f64).round() as i32;
    let b = ((start + len) * size as f64).round() as i32;
    (a, b)
}

/// Weighted sum of rectangle sums, each rect scaled into `window`.
pub fn haar_feature_value(ii: &IntegralImage, f: &HaarFeature, window: &BoundingBox) -> Result<f64> {
    let img = BoundingBox {
        x: 0,
        y: 0,
        w: ii.width() as i32,
        h: ii.height() as i32,
    };
    if !img.contains_box(window) {
        return Err(Error::BoxOutsideImage);
    }
    let mut value = 0.0;
    for r in &f.rects {
        let (x0, x1) = scaled_span(r.x, r.w, window.w);
        let (y0, y1) = scaled_span(r.y, r.h, window.h);
        if x0 < 0 || y0 < 0 || x1 <= x0 || y1 <= y0 || x1 > window.w || y1 > window.h {
            return Err(Error::InvalidFeatureGeometry(format!(
                "rect {r:?} scales to an empty or out-of-window span in a {}x{} window",
                window.w, window.h
            )));
        }
        let sum = ii.rect_sum(
            (window.x + x0) as usize,
            (window.y + y0) as usize,
            (x1 - x0) as usize,
            (y1 - y0) as usize,
        );
        value += r.weight * sum as f64;
    }
    Ok(value)
}

/// Every window, at every scale, that passes all cascade stages (no NMS).
///
/// A scale multiplies the cascade's base window; windows that would not fit
/// in the image are skipped. Windows are visited scale-major, then row-major.
pub fn cascade_candidates(
    ii: &IntegralImage,
    cascade: &HaarCascade,
    scales: &[f64],
    step: usize,
) -> Result<Vec<Detection>> {
    cascade.validate()?;
    if scales.is_empty() {
        return Err(Error::InvalidArgument("scale list is empty".into()));
    }
    if step == 0 {
        return Err(Error::InvalidArgument("scan step must be >= 1".into()));
    }
    let mut out = Vec::new();
    for &s in scales {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid scale {s}")));
        }
        let ww = (cascade.window_width as f64 * s).round() as usize;
        let wh = (cascade.window_height as f64 * s).round() as usize;
        if ww == 0 || wh == 0 || ww > ii.width() || wh > ii.height() {
            continue;
        }
        for y in (0..=ii.height() - wh).step_by(step) {
            for x in (0..=ii.width() - ww).step_by(step) {
                let window = BoundingBox {
                    x: x as i32,
                    y: y as i32,
                    w: ww as i32,
                    h: wh as i32,
                };
                if let Some(score) = cascade.evaluate(ii, &window)? {
                    out.push(Detection {
                        bbox: window,
                        score,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Cascade scan followed by non-maximum suppression at IoU 0.3.
pub fn cascade_detect(
    ii: &IntegralImage,
    cascade: &HaarCascade,
    scales: &[f64],
    step: usize,
) -> Result<Vec<Detection>> {
    cascade_detect_with_iou(ii, cascade, scales, step, DEFAULT_NMS_IOU)
}

pub fn cascade_detect_with_iou(
    ii: &IntegralImage,
    cascade: &HaarCascade,
    scales: &[f64],
    step: usize,
    iou: f64,
) -> Result<Vec<Detection>> {
    Ok(non_max_suppression(
        cascade_candidates(ii, cascade, scales, step)?,
        iou,
    ))
}
