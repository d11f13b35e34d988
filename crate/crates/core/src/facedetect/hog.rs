//! Histogram of oriented gradients over a square detection window and a
//! sliding-window linear-SVM scan.
//!
//! Layout follows the usual Dalal–Triggs arrangement: centered `[-1, 0, 1]`
//! gradients (edge-replicated at the window border), unsigned orientations
//! with bin `k` centered on `k·180°/bins`, magnitude votes split linearly
//! between the two nearest bins, overlapping blocks of cells normalized with
//! L2-hys, concatenated block-major.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{non_max_suppression, Detection, LinearSvmModel, DEFAULT_NMS_IOU};
use crate::error::{Error, Result};
use crate::geom::BoundingBox;
use crate::imgcore::Image;

const L2HYS_CLIP: f64 = 0.2;
const NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HogConfig {
    /// Side of the square window, pixels.
    pub window_size: usize,
    /// Side of a cell, pixels.
    pub cell_size: usize,
    /// Side of a block, cells.
    pub block_size: usize,
    /// Block step, cells.
    pub block_stride: usize,
    pub bins: usize,
}

impl Default for HogConfig {
    fn default() -> Self {
        HogConfig {
            window_size: 64,
            cell_size: 8,
            block_size: 2,
            block_stride: 1,
            bins: 9,
        }
    }
}

impl HogConfig {
    fn validate(&self) -> Result<()> {
        if self.cell_size == 0 || self.block_size == 0 || self.block_stride == 0 || self.bins == 0 {
            return Err(Error::InvalidArgument(format!("invalid HOG config {self:?}")));
        }
        if self.window_size < self.cell_size * self.block_size {
            return Err(Error::WindowTooSmall);
        }
        Ok(())
    }

    pub fn cells_per_side(&self) -> usize {
        self.window_size / self.cell_size
    }

    pub fn blocks_per_side(&self) -> usize {
        (self.cells_per_side() - self.block_size) / self.block_stride + 1
    }

    /// Descriptor length: `blocks² · block² · bins`.
    pub fn descriptor_len(&self) -> Result<usize> {
        self.validate()?;
        let blocks = self.blocks_per_side();
        Ok(blocks * blocks * self.block_size * self.block_size * self.bins)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HogDescriptor {
    pub config: HogConfig,
    pub vector: Vec<f64>,
}

/// HOG of a `window_size²` patch given as row-major intensities.
pub fn hog_from_patch(patch: &[f64], config: &HogConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let n = config.window_size;
    if patch.len() != n * n {
        return Err(Error::InvalidArgument(format!(
            "patch has {} values, expected {}",
            patch.len(),
            n * n
        )));
    }
    let cells = config.cells_per_side();
    let bins = config.bins;
    let bin_width = 180.0 / bins as f64;
    let mut hist = vec![0.0; cells * cells * bins];
    let px = |x: usize, y: usize| patch[y * n + x];

    for y in 0..cells * config.cell_size {
        let (ym, yp) = (y.saturating_sub(1), (y + 1).min(n - 1));
        let cy = y / config.cell_size;
        for x in 0..cells * config.cell_size {
            let (xm, xp) = (x.saturating_sub(1), (x + 1).min(n - 1));
            let gx = px(xp, y) - px(xm, y);
            let gy = px(x, yp) - px(x, ym);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).to_degrees().rem_euclid(180.0);
            let pos = angle / bin_width;
            let lo_f = pos.floor();
            let frac = pos - lo_f;
            let lo = (lo_f as usize) % bins;
            let hi = (lo + 1) % bins;
            let base = (cy * cells + x / config.cell_size) * bins;
            hist[base + lo] += mag * (1.0 - frac);
            hist[base + hi] += mag * frac;
        }
    }

    let blocks = config.blocks_per_side();
    let bs = config.block_size;
    let mut out = Vec::with_capacity(blocks * blocks * bs * bs * bins);
    let mut block = Vec::with_capacity(bs * bs * bins);
    for by in 0..blocks {
        for bx in 0..blocks {
            block.clear();
            for cy in 0..bs {
                for cx in 0..bs {
                    let cell = (by * config.block_stride + cy) * cells + bx * config.block_stride + cx;
                    block.extend_from_slice(&hist[cell * bins..(cell + 1) * bins]);
                }
            }
            l2_hys(&mut block);
            out.extend_from_slice(&block);
        }
    }
    Ok(out)
}

fn l2_hys(v: &mut [f64]) {
    let norm = (v.iter().map(|x| x * x).sum::<f64>() + NORM_EPS * NORM_EPS).sqrt();
    for x in v.iter_mut() {
        *x = (*x / norm).min(L2HYS_CLIP);
    }
    let norm = (v.iter().map(|x| x * x).sum::<f64>() + NORM_EPS * NORM_EPS).sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }
}

/// Extracts the window as a `window_size²` float patch, resampling
/// bilinearly when the window has a different size.
fn window_patch(img: &Image, window: &BoundingBox, n: usize) -> Vec<f64> {
    if window.w as usize == n && window.h as usize == n {
        let mut patch = Vec::with_capacity(n * n);
        for y in 0..n {
            for x in 0..n {
                patch.push(img.get(window.x as usize + x, window.y as usize + y, 0) as f64);
            }
        }
        return patch;
    }
    let sx = window.w as f64 / n as f64;
    let sy = window.h as f64 / n as f64;
    let mut patch = Vec::with_capacity(n * n);
    for y in 0..n {
        let src_y = window.y as f64 + (y as f64 + 0.5) * sy - 0.5;
        for x in 0..n {
            let src_x = window.x as f64 + (x as f64 + 0.5) * sx - 0.5;
            patch.push(img.sample_bilinear(src_x, src_y, 0));
        }
    }
    patch
}

pub fn hog_descriptor(img: &Image, window: &BoundingBox, config: &HogConfig) -> Result<HogDescriptor> {
    config.validate()?;
    if img.channels() != 1 {
        return Err(Error::InvalidArgument("HOG needs a single-channel image".into()));
    }
    let min_side = (config.cell_size * config.block_size) as i32;
    if window.w < min_side || window.h < min_side {
        return Err(Error::WindowTooSmall);
    }
    if !img.bounds().contains_box(window) {
        return Err(Error::BoxOutsideImage);
    }
    let patch = window_patch(img, window, config.window_size);
    Ok(HogDescriptor {
        config: *config,
        vector: hog_from_patch(&patch, config)?,
    })
}

/// Slides the model's window over the image at each scale and returns the
/// positively scored windows after NMS, best first.
///
/// At scale `s` the window side is `round(window_size · s)` and the window is
/// resampled to `window_size` before description. Windows are evaluated in
/// parallel; the result does not depend on thread count.
pub fn hog_scan(
    img: &Image,
    model: &LinearSvmModel,
    stride: usize,
    scales: &[f64],
) -> Result<Vec<Detection>> {
    let config = model.descriptor_config;
    let len = config.descriptor_len()?;
    if model.weights.len() != len {
        return Err(Error::ModelMismatch {
            model: model.weights.len(),
            descriptor: len,
        });
    }
    if stride == 0 {
        return Err(Error::InvalidArgument("scan stride must be >= 1".into()));
    }
    if scales.is_empty() {
        return Err(Error::InvalidArgument("scale list is empty".into()));
    }
    let gray;
    let img = if img.channels() == 1 {
        img
    } else {
        gray = crate::imgcore::to_grayscale(img);
        &gray
    };

    let mut windows = Vec::new();
    for &s in scales {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid scale {s}")));
        }
        let side = (config.window_size as f64 * s).round() as usize;
        if side < config.cell_size * config.block_size || side > img.width() || side > img.height() {
            continue;
        }
        for y in (0..=img.height() - side).step_by(stride) {
            for x in (0..=img.width() - side).step_by(stride) {
                windows.push(BoundingBox {
                    x: x as i32,
                    y: y as i32,
                    w: side as i32,
                    h: side as i32,
                });
            }
        }
    }

    let scored: Vec<Detection> = windows
        .par_iter()
        .map(|w| {
            let d = hog_descriptor(img, w, &config)?;
            Ok(Detection {
                bbox: *w,
                score: model.score(&d.vector),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let positive = scored.into_iter().filter(|d| d.score > 0.0).collect();
    Ok(non_max_suppression(positive, DEFAULT_NMS_IOU))
}
