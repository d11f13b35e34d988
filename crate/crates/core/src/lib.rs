//! Facial morphometry from frontal photographs: preprocessing, face
//! detection, alignment, landmark regression, geometric features and
//! two-cohort statistics.

pub mod align;
pub mod cohortstats;
pub mod error;
pub mod facedetect;
pub mod geom;
pub mod imgcore;
pub mod morphometrics;
pub mod pipeline;
pub mod shaperegress;
pub mod synth;

pub use error::{Error, Result};
pub use geom::{BoundingBox, Point};
pub use imgcore::Image;
pub use morphometrics::{FeatureVector, LandmarkIndexMap};
pub use shaperegress::{LandmarkSet, Scheme};
