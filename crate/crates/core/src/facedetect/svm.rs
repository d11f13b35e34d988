//! Soft-margin linear SVM trained by projected sub-gradient descent on the
//! primal hinge loss.
//!
//! The objective is `½‖w‖² + C·Σ max(0, 1 − yᵢ(w·xᵢ + b))`, rescaled to the
//! equivalent `λ/2‖w‖² + mean hinge` with `λ = 1/(C·n)`. The bias is handled
//! as an extra weight on a constant feature. Each iteration takes a full-batch
//! sub-gradient step of size `1/(λt)`, projects onto the ball of radius
//! `1/√λ` that contains the optimum, and the returned model averages the
//! iterates of the second half of the run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HogConfig, HogDescriptor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub descriptor_config: HogConfig,
}

impl LinearSvmModel {
    pub fn score(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: LinearSvmModel = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let len = model.descriptor_config.descriptor_len()?;
        if model.weights.len() != len {
            return Err(Error::ModelMismatch {
                model: model.weights.len(),
                descriptor: len,
            });
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub iterations: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            iterations: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmTraining<M> {
    pub model: M,
    pub training_accuracy: f64,
}

/// Trains on raw feature vectors; returns `(weights, bias)` plus training
/// accuracy.
pub fn train_linear_svm_vectors(
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    params: SvmParams,
) -> Result<SvmTraining<(Vec<f64>, f64)>> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::InsufficientData(
            "need at least one positive and one negative example".into(),
        ));
    }
    if !(params.c > 0.0 && params.c.is_finite()) || params.iterations == 0 {
        return Err(Error::InvalidArgument(format!("invalid SVM params {params:?}")));
    }
    let dim = positives[0].len();
    if positives.iter().chain(negatives).any(|v| v.len() != dim) {
        return Err(Error::InvalidArgument("feature vectors differ in length".into()));
    }
    let same_set = |a: &[Vec<f64>], b: &[Vec<f64>]| a.iter().all(|v| b.contains(v));
    if same_set(positives, negatives) && same_set(negatives, positives) {
        return Err(Error::DegenerateTrainingData);
    }

    let samples: Vec<(&[f64], f64)> = positives
        .iter()
        .map(|v| (v.as_slice(), 1.0))
        .chain(negatives.iter().map(|v| (v.as_slice(), -1.0)))
        .collect();
    let n = samples.len() as f64;
    let lambda = 1.0 / (params.c * n);
    let radius = 1.0 / lambda.sqrt();

    // Augmented weights: w[..dim] for features, w[dim] for the bias.
    let mut w = vec![0.0; dim + 1];
    let mut avg = vec![0.0; dim + 1];
    let mut grad = vec![0.0; dim + 1];
    let average_from = params.iterations / 2 + 1;
    let mut averaged = 0usize;
    for t in 1..=params.iterations {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for &(x, y) in &samples {
            let margin = y * (dot(&w[..dim], x) + w[dim]);
            if margin < 1.0 {
                for (g, v) in grad[..dim].iter_mut().zip(x) {
                    *g -= y * v;
                }
                grad[dim] -= y;
            }
        }
        let eta = 1.0 / (lambda * t as f64);
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= eta * (lambda * *wi + gi / n);
        }
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > radius {
            let s = radius / norm;
            w.iter_mut().for_each(|v| *v *= s);
        }
        if t >= average_from {
            averaged += 1;
            let k = averaged as f64;
            for (a, wi) in avg.iter_mut().zip(&w) {
                *a += (wi - *a) / k;
            }
        }
    }

    let bias = avg[dim];
    avg.truncate(dim);
    let correct = samples
        .iter()
        .filter(|(x, y)| (dot(&avg, x) + bias) * y > 0.0)
        .count();
    Ok(SvmTraining {
        training_accuracy: correct as f64 / n,
        model: (avg, bias),
    })
}

/// Trains a face/non-face model on HOG descriptors sharing one configuration.
pub fn train_linear_svm(
    positives: &[HogDescriptor],
    negatives: &[HogDescriptor],
    params: SvmParams,
) -> Result<SvmTraining<LinearSvmModel>> {
    let config = positives
        .first()
        .or(negatives.first())
        .map(|d| d.config)
        .ok_or_else(|| Error::InsufficientData("no training descriptors".into()))?;
    if positives.iter().chain(negatives).any(|d| d.config != config) {
        return Err(Error::InvalidArgument(
            "descriptors were computed with different HOG configurations".into(),
        ));
    }
    let pos: Vec<Vec<f64>> = positives.iter().map(|d| d.vector.clone()).collect();
    let neg: Vec<Vec<f64>> = negatives.iter().map(|d| d.vector.clone()).collect();
    let trained = train_linear_svm_vectors(&pos, &neg, params)?;
    let (weights, bias) = trained.model;
    Ok(SvmTraining {
        model: LinearSvmModel {
            weights,
            bias,
            descriptor_config: config,
        },
        training_accuracy: trained.training_accuracy,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
