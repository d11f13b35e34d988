//! Coarse (Haar cascade) and refined (HOG + linear SVM) face detection.
//!
//! Models are immutable after construction and can be shared across threads.

mod haar;
mod hog;
mod svm;

pub use haar::{
    cascade_candidates, cascade_detect, haar_feature_value, HaarCascade, HaarFeature, HaarRect,
    HaarStage, HaarStump,
};
pub use hog::{hog_descriptor, hog_from_patch, hog_scan, HogConfig, HogDescriptor};
pub use svm::{
    train_linear_svm, train_linear_svm_vectors, LinearSvmModel, SvmParams, SvmTraining,
};

use serde::{Deserialize, Serialize};

use crate::geom::BoundingBox;

/// Default IoU above which two detections are merged.
pub const DEFAULT_NMS_IOU: f64 = 0.3;

/// A scored detection window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub score: f64,
}

/// Greedy non-maximum suppression.
///
/// Candidates are visited by descending score (ties keep input order); a
/// candidate is dropped when its IoU with an already kept box exceeds
/// `iou_threshold`. The result is sorted by descending score.
pub fn non_max_suppression(mut candidates: Vec<Detection>, iou_threshold: f64) -> Vec<Detection> {
    candidates.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut kept: Vec<Detection> = Vec::new();
    for c in candidates {
        if kept.iter().all(|k| k.bbox.iou(&c.bbox) <= iou_threshold) {
            kept.push(c);
        }
    }
    kept
}
