//! Gradient-boosted training of the regression cascade.
//!
//! Per stage: draw a pool of anchor pixels around the mean shape, read their
//! intensities once from every sample's stage-entry shape, then grow trees
//! one at a time on the current residuals. Split candidates are random
//! anchor pairs accepted with probability `exp(−λ·distance)` (distance in
//! the normalized mean-shape frame) with a threshold taken from a random
//! sample's intensity difference at that node; the candidate with the largest
//! variance reduction wins. Leaves hold the mean residual of their samples.
//!
//! Each image contributes `initializations` training rows: one starting from
//! the mean shape and the rest from other images' shapes, so later stages see
//! the kind of errors earlier stages leave behind. Prediction always starts
//! from the mean shape alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::apply_stage;
use super::{normalize_points, Anchor, LandmarkSet, RegressionTree, ShapeModel, Split, Stage};
use crate::error::{Error, Result};
use crate::geom::{BoundingBox, Point};
use crate::imgcore::{to_grayscale, Image};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapeTrainConfig {
    pub stages: usize,
    pub trees_per_stage: usize,
    pub tree_depth: usize,
    pub nu: f64,
    pub feature_pool_size: usize,
    pub lambda: f64,
    pub num_test_splits: usize,
    /// Padding around the mean shape's extent when drawing anchors, as a
    /// fraction of the normalized box.
    pub feature_pool_padding: f64,
    /// Starting shapes per training image. The first is the mean shape, the
    /// others are targets of randomly chosen other images.
    pub initializations: usize,
    pub seed: u64,
}

impl Default for ShapeTrainConfig {
    fn default() -> Self {
        ShapeTrainConfig {
            stages: 10,
            trees_per_stage: 500,
            tree_depth: 4,
            nu: 0.1,
            feature_pool_size: 400,
            lambda: 0.1,
            num_test_splits: 20,
            feature_pool_padding: 0.1,
            initializations: 20,
            seed: 0,
        }
    }
}

impl ShapeTrainConfig {
    /// Small configuration that trains in seconds.
    pub fn desk() -> Self {
        ShapeTrainConfig {
            stages: 5,
            trees_per_stage: 50,
            feature_pool_size: 64,
            initializations: 5,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu <= 1.0)
            || self.feature_pool_size < 2
            || self.num_test_splits == 0
            || self.initializations == 0
            || self.tree_depth > 16
            || !(self.lambda >= 0.0 && self.lambda.is_finite())
            || !(self.feature_pool_padding >= 0.0)
        {
            return Err(Error::InvalidArgument(format!("invalid training config {self:?}")));
        }
        Ok(())
    }
}

pub struct TrainingSample {
    pub image: Image,
    pub bbox: BoundingBox,
    pub landmarks: LandmarkSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeTraining {
    pub model: ShapeModel,
    /// Mean squared normalized residual per landmark coordinate: entry 0 is
    /// the mean-shape start, entry `t` follows stage `t`.
    pub stage_losses: Vec<f64>,
}

pub fn train_shape_model(dataset: &[TrainingSample], config: &ShapeTrainConfig) -> Result<ShapeModel> {
    Ok(train_shape_model_with_history(dataset, config)?.model)
}

pub fn train_shape_model_with_history(
    dataset: &[TrainingSample],
    config: &ShapeTrainConfig,
) -> Result<ShapeTraining> {
    if dataset.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 training examples, got {}",
            dataset.len()
        )));
    }
    config.validate()?;
    let scheme = dataset[0].landmarks.scheme;
    for s in dataset {
        if s.landmarks.scheme != scheme {
            return Err(Error::SchemeMismatch {
                expected: scheme.to_string(),
                found: s.landmarks.scheme.to_string(),
            });
        }
        s.landmarks.validate()?;
    }
    let n_points = scheme.len();
    let images: Vec<Image> = dataset.iter().map(|s| to_grayscale(&s.image)).collect();
    let targets: Vec<Vec<Point>> = dataset
        .iter()
        .map(|s| normalize_points(&s.landmarks.points, &s.bbox))
        .collect();

    let mut mean = targets[0].clone();
    for (k, t) in targets.iter().enumerate().skip(1) {
        let w = 1.0 / (k + 1) as f64;
        for (m, p) in mean.iter_mut().zip(t) {
            m.x += (p.x - m.x) * w;
            m.y += (p.y - m.y) * w;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // Training rows: (image index, current shape). Row order is image-major.
    let mut owner = Vec::with_capacity(dataset.len() * config.initializations);
    let mut shapes: Vec<Vec<Point>> = Vec::with_capacity(owner.capacity());
    for i in 0..dataset.len() {
        for r in 0..config.initializations {
            owner.push(i);
            shapes.push(if r == 0 {
                mean.clone()
            } else {
                let mut j = rng.gen_range(0..dataset.len() - 1);
                if j >= i {
                    j += 1;
                }
                targets[j].clone()
            });
        }
    }
    let row_targets: Vec<&[Point]> = owner.iter().map(|&i| targets[i].as_slice()).collect();
    let mut stages = Vec::with_capacity(config.stages);
    let mut stage_losses = vec![mean_squared_residual(&shapes, &row_targets)];

    for _ in 0..config.stages {
        let anchors = draw_anchors(&mean, config, &mut rng);
        let anchor_pos: Vec<Point> = anchors.iter().map(|a| mean[a.landmark] + a.offset).collect();
        let intensities: Vec<Vec<u8>> = owner
            .iter()
            .zip(&shapes)
            .map(|(&i, shape)| {
                super::sample_indexed_pixels(&images[i], &dataset[i].bbox, shape, &mean, &anchors)
            })
            .collect();
        let mut residuals: Vec<Vec<f64>> = shapes
            .iter()
            .zip(&row_targets)
            .map(|(s, t)| {
                s.iter()
                    .zip(t.iter())
                    .flat_map(|(p, q)| [q.x - p.x, q.y - p.y])
                    .collect()
            })
            .collect();

        let mut trees = Vec::with_capacity(config.trees_per_stage);
        for _ in 0..config.trees_per_stage {
            let tree = fit_tree(&intensities, &residuals, &anchor_pos, n_points, config, &mut rng);
            for (r, x) in residuals.iter_mut().zip(&intensities) {
                for (ri, li) in r.iter_mut().zip(tree.leaf(x)) {
                    *ri -= config.nu * li;
                }
            }
            trees.push(tree);
        }
        let stage = Stage { anchors, trees };
        for (&i, shape) in owner.iter().zip(shapes.iter_mut()) {
            apply_stage(&images[i], &dataset[i].bbox, shape, &mean, &stage, config.nu);
        }
        stage_losses.push(mean_squared_residual(&shapes, &row_targets));
        stages.push(stage);
    }

    let model = ShapeModel {
        scheme,
        mean_shape: mean,
        nu: config.nu,
        stages,
    };
    model.validate()?;
    Ok(ShapeTraining {
        model,
        stage_losses,
    })
}

fn mean_squared_residual(shapes: &[Vec<Point>], targets: &[&[Point]]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (s, t) in shapes.iter().zip(targets) {
        for (p, q) in s.iter().zip(t.iter()) {
            sum += (p.x - q.x).powi(2) + (p.y - q.y).powi(2);
            count += 2;
        }
    }
    sum / count as f64
}

/// Uniform positions over the padded extent of the mean shape, each tied to
/// its nearest landmark.
fn draw_anchors(mean: &[Point], config: &ShapeTrainConfig, rng: &mut ChaCha8Rng) -> Vec<Anchor> {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in mean {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let pad = config.feature_pool_padding;
    let (x0, y0, x1, y1) = (x0 - pad, y0 - pad, x1 + pad, y1 + pad);
    (0..config.feature_pool_size)
        .map(|_| {
            let pos = Point::new(rng.gen_range(x0..=x1), rng.gen_range(y0..=y1));
            let landmark = mean
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.distance(pos).total_cmp(&b.1.distance(pos)))
                .map(|(i, _)| i)
                .unwrap_or(0);
            Anchor {
                landmark,
                offset: pos - mean[landmark],
            }
        })
        .collect()
}

fn random_split(
    samples: &[usize],
    intensities: &[Vec<u8>],
    anchor_pos: &[Point],
    lambda: f64,
    rng: &mut ChaCha8Rng,
) -> Split {
    let n = anchor_pos.len();
    let (a, b) = loop {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        let accept = (-lambda * anchor_pos[a].distance(anchor_pos[b])).exp();
        if rng.gen::<f64>() < accept {
            break (a, b);
        }
    };
    let threshold = if samples.is_empty() {
        0.0
    } else {
        let s = samples[rng.gen_range(0..samples.len())];
        // Just below the drawn sample's difference so the split is never empty.
        intensities[s][a] as f64 - intensities[s][b] as f64 - 0.5
    };
    Split { a, b, threshold }
}

fn fit_tree(
    intensities: &[Vec<u8>],
    residuals: &[Vec<f64>],
    anchor_pos: &[Point],
    n_points: usize,
    config: &ShapeTrainConfig,
    rng: &mut ChaCha8Rng,
) -> RegressionTree {
    let dim = 2 * n_points;
    let n_splits = (1usize << config.tree_depth) - 1;
    let mut splits = Vec::with_capacity(n_splits);
    // Samples reaching each node of the current level.
    let mut level: Vec<Vec<usize>> = vec![(0..intensities.len()).collect()];
    let mut left_sum = vec![0.0; dim];

    for _ in 0..config.tree_depth {
        let mut next = Vec::with_capacity(level.len() * 2);
        for node in &level {
            let total: Vec<f64> = sum_residuals(node, residuals, dim);
            let mut best: Option<(f64, Split)> = None;
            for _ in 0..config.num_test_splits {
                let split = random_split(node, intensities, anchor_pos, config.lambda, rng);
                left_sum.iter_mut().for_each(|v| *v = 0.0);
                let mut n_left = 0usize;
                for &i in node {
                    if goes_left(&split, &intensities[i]) {
                        n_left += 1;
                        for (s, r) in left_sum.iter_mut().zip(&residuals[i]) {
                            *s += r;
                        }
                    }
                }
                let n_right = node.len() - n_left;
                let mut score = 0.0;
                if n_left > 0 {
                    score += left_sum.iter().map(|v| v * v).sum::<f64>() / n_left as f64;
                }
                if n_right > 0 {
                    score += left_sum
                        .iter()
                        .zip(&total)
                        .map(|(l, t)| (t - l) * (t - l))
                        .sum::<f64>()
                        / n_right as f64;
                }
                if best.as_ref().is_none_or(|(b, _)| score > *b) {
                    best = Some((score, split));
                }
            }
            let (_, split) = best.expect("num_test_splits >= 1");
            let (l, r): (Vec<usize>, Vec<usize>) =
                node.iter().partition(|&&i| goes_left(&split, &intensities[i]));
            splits.push(split);
            next.push(l);
            next.push(r);
        }
        level = next;
    }

    let leaves = level
        .iter()
        .map(|node| {
            if node.is_empty() {
                return vec![0.0; dim];
            }
            let mut sum = sum_residuals(node, residuals, dim);
            let k = node.len() as f64;
            sum.iter_mut().for_each(|v| *v /= k);
            sum
        })
        .collect();
    RegressionTree { splits, leaves }
}

#[inline]
fn goes_left(split: &Split, x: &[u8]) -> bool {
    x[split.a] as f64 - x[split.b] as f64 > split.threshold
}

fn sum_residuals(node: &[usize], residuals: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    for &i in node {
        for (s, r) in sum.iter_mut().zip(&residuals[i]) {
            *s += r;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shaperegress::{predict_normalized, Scheme};

    fn five(points: &[(f64, f64)]) -> LandmarkSet {
        LandmarkSet::new(
            Scheme::FivePoint,
            points.iter().map(|&(x, y)| Point::new(x, y)).collect(),
        )
        .unwrap()
    }

    fn tiny_config() -> ShapeTrainConfig {
        ShapeTrainConfig {
            stages: 3,
            trees_per_stage: 10,
            tree_depth: 2,
            feature_pool_size: 16,
            ..ShapeTrainConfig::default()
        }
    }

    #[test]
    fn too_few_examples() {
        let s = TrainingSample {
            image: Image::filled(10, 10, 1, 0).unwrap(),
            bbox: BoundingBox::new(0, 0, 10, 10).unwrap(),
            landmarks: five(&[(1.0, 1.0); 5]),
        };
        assert!(matches!(
            train_shape_model(&[s], &tiny_config()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn identical_shapes_give_zero_leaves() {
        let lm = five(&[(2.0, 3.0), (4.0, 3.0), (6.0, 3.0), (8.0, 3.0), (5.0, 7.0)]);
        let data: Vec<TrainingSample> = (0..4)
            .map(|k| TrainingSample {
                image: Image::from_fn(12, 12, |x, y| ((x * 17 + y * 5 + k * 31) % 256) as u8).unwrap(),
                bbox: BoundingBox::new(0, 0, 10, 10).unwrap(),
                landmarks: lm.clone(),
            })
            .collect();
        let model = train_shape_model(&data, &tiny_config()).unwrap();
        for stage in &model.stages {
            for tree in &stage.trees {
                assert!(tree.leaves.iter().flatten().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn two_examples_with_a_brightness_cue_are_fit() {
        // The landmarks shift right when the image is bright.
        let dark = Image::filled(40, 40, 1, 20).unwrap();
        let bright = Image::from_fn(40, 40, |x, _| if x < 20 { 20 } else { 230 }).unwrap();
        let base = [(10.0, 10.0), (15.0, 10.0), (25.0, 10.0), (30.0, 10.0), (20.0, 25.0)];
        let shifted: Vec<(f64, f64)> = base.iter().map(|&(x, y)| (x + 4.0, y)).collect();
        let bbox = BoundingBox::new(0, 0, 40, 40).unwrap();
        let data = vec![
            TrainingSample { image: dark, bbox, landmarks: five(&base) },
            TrainingSample { image: bright, bbox, landmarks: five(&shifted) },
        ];
        let config = ShapeTrainConfig {
            stages: 10,
            trees_per_stage: 50,
            tree_depth: 2,
            feature_pool_size: 32,
            initializations: 1,
            ..ShapeTrainConfig::default()
        };
        let trained = train_shape_model_with_history(&data, &config).unwrap();
        let losses = &trained.stage_losses;
        assert!(losses[0] > 0.0);
        assert!(*losses.last().unwrap() < 1e-6 * losses[0], "{losses:?}");
        for s in &data {
            let p = predict_normalized(&s.image, &s.bbox, &trained.model).unwrap();
            let t = normalize_points(&s.landmarks.points, &s.bbox);
            for (a, b) in p.iter().zip(&t) {
                assert!(a.distance(*b) < 1e-3);
            }
        }
    }
}
