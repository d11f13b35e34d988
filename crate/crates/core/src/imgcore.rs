//! Image container and the first-stage photometric pre-processing primitives.
//!
//! Everything here is a pure function of its inputs. Pixel data is 8-bit,
//! row-major, channel-interleaved.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::BoundingBox;

/// 8-bit raster with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "expected 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Single-channel image from a per-pixel function of `(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, 1, data)
    }

    /// Decodes a JPEG or PNG file. Gray files stay single-channel, everything
    /// else is converted to 8-bit RGB.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let decoded = image::open(path).map_err(|source| Error::Decode {
            path: path.to_path_buf(),
            source,
        })?;
        match decoded {
            image::DynamicImage::ImageLuma8(gray) => {
                let (w, h) = gray.dimensions();
                Self::new(w as usize, h as usize, 1, gray.into_raw())
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = rgb.dimensions();
                Self::new(w as usize, h as usize, 3, rgb.into_raw())
            }
        }
    }

    /// Encodes to PNG (format chosen from the extension by the codec).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            color,
        )
        .map_err(|source| Error::Decode {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn bounds(&self) -> BoundingBox {
        BoundingBox {
            x: 0,
            y: 0,
            w: self.width as i32,
            h: self.height as i32,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Channel-0 intensity at `(x, y)`, or 0 when outside the raster.
    #[inline]
    pub fn get_or_zero(&self, x: i64, y: i64) -> u8 {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            0
        } else {
            self.get(x as usize, y as usize, 0)
        }
    }

    /// Bilinear sample of channel `c` at continuous pixel-center coordinates,
    /// clamping at the borders.
    pub fn sample_bilinear(&self, x: f64, y: f64, c: usize) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0, c) as f64 * (1.0 - fx) + self.get(x1, y0, c) as f64 * fx;
        let bottom = self.get(x0, y1, c) as f64 * (1.0 - fx) + self.get(x1, y1, c) as f64 * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

#[inline]
fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

#[inline]
fn luma(r: u8, g: u8, b: u8) -> f64 {
    0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
}

/// ITU-R 601 luma. Single-channel input is returned unchanged.
pub fn to_grayscale(img: &Image) -> Image {
    if img.channels == 1 {
        return img.clone();
    }
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| clamp_u8(luma(p[0], p[1], p[2])))
        .collect();
    Image {
        width: img.width,
        height: img.height,
        channels: 1,
        data,
    }
}

/// Lookup table mapping each level through the cumulative histogram, or
/// `None` for a constant image where the mapping is 0/0.
fn equalization_lut(values: impl Iterator<Item = u8>) -> Option<[u8; 256]> {
    let mut hist = [0u64; 256];
    let mut n = 0u64;
    for v in values {
        hist[v as usize] += 1;
        n += 1;
    }
    let mut cdf = [0u64; 256];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc;
    }
    let cdf_min = cdf.iter().copied().find(|&c| c > 0)?;
    if cdf_min == n {
        return None;
    }
    let denom = (n - cdf_min) as f64;
    let mut lut = [0u8; 256];
    for (slot, &c) in lut.iter_mut().zip(&cdf) {
        *slot = clamp_u8(c.saturating_sub(cdf_min) as f64 / denom * 255.0);
    }
    Some(lut)
}

/// Global histogram equalization.
///
/// Gray images are remapped directly. RGB images are converted to YCbCr, the
/// luma plane is equalized and the result converted back, so hue is kept.
/// A constant image is returned unchanged.
pub fn equalize_histogram(img: &Image) -> Image {
    if img.channels == 1 {
        let Some(lut) = equalization_lut(img.data.iter().copied()) else {
            return img.clone();
        };
        return Image {
            data: img.data.iter().map(|&v| lut[v as usize]).collect(),
            ..img.clone()
        };
    }

    let ycc: Vec<[f64; 3]> = img
        .data
        .chunks_exact(3)
        .map(|p| {
            let (r, g, b) = (p[0] as f64, p[1] as f64, p[2] as f64);
            [
                luma(p[0], p[1], p[2]),
                128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b,
                128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b,
            ]
        })
        .collect();
    let Some(lut) = equalization_lut(ycc.iter().map(|p| clamp_u8(p[0]))) else {
        return img.clone();
    };
    let mut data = Vec::with_capacity(img.data.len());
    for [y, cb, cr] in ycc {
        let y = lut[clamp_u8(y) as usize] as f64;
        data.push(clamp_u8(y + 1.402 * (cr - 128.0)));
        data.push(clamp_u8(y - 0.344136 * (cb - 128.0) - 0.714136 * (cr - 128.0)));
        data.push(clamp_u8(y + 1.772 * (cb - 128.0)));
    }
    Image {
        data,
        ..img.clone()
    }
}

/// Median over the `(2r+1)²` neighborhood with edge replication, per channel.
pub fn median_filter(img: &Image, radius: usize) -> Result<Image> {
    if radius == 0 {
        return Err(Error::InvalidArgument("median radius must be >= 1".into()));
    }
    if radius >= img.width.min(img.height) {
        return Err(Error::KernelTooLarge);
    }
    let (w, h, ch) = (img.width, img.height, img.channels);
    let r = radius as i64;
    let side = 2 * radius + 1;
    let mid = side * side / 2;
    let mut out = img.clone();
    let mut window = Vec::with_capacity(side * side);
    for c in 0..ch {
        for y in 0..h {
            for x in 0..w {
                window.clear();
                for dy in -r..=r {
                    let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    for dx in -r..=r {
                        let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                        window.push(img.get(xx, yy, c));
                    }
                }
                let (_, m, _) = window.select_nth_unstable(mid);
                out.set(x, y, c, *m);
            }
        }
    }
    Ok(out)
}

/// Region that `crop_with_margin` extracts: `bbox` grown by `margin` on every
/// side, clipped to the image.
pub fn crop_region(img: &Image, bbox: &BoundingBox, margin: i32) -> Result<BoundingBox> {
    if margin < 0 {
        return Err(Error::InvalidArgument("margin must be >= 0".into()));
    }
    bbox.grow(margin)
        .intersection(&img.bounds())
        .ok_or(Error::BoxOutsideImage)
}

/// Extracts an in-bounds rectangle.
pub fn crop(img: &Image, region: &BoundingBox) -> Result<Image> {
    if !img.bounds().contains_box(region) {
        return Err(Error::BoxOutsideImage);
    }
    let (x0, y0) = (region.x as usize, region.y as usize);
    let (w, h) = (region.w as usize, region.h as usize);
    let row_len = w * img.channels;
    let mut data = Vec::with_capacity(row_len * h);
    for y in y0..y0 + h {
        let start = (y * img.width + x0) * img.channels;
        data.extend_from_slice(&img.data[start..start + row_len]);
    }
    Image::new(w, h, img.channels, data)
}

pub fn crop_with_margin(img: &Image, bbox: &BoundingBox, margin: i32) -> Result<Image> {
    crop(img, &crop_region(img, bbox, margin)?)
}

/// Bilinear resize with pixel-center alignment. Aspect ratio is not preserved.
pub fn resize(img: &Image, new_w: usize, new_h: usize) -> Result<Image> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::InvalidArgument(format!(
            "target size must be positive, got {new_w}x{new_h}"
        )));
    }
    if new_w == img.width && new_h == img.height {
        return Ok(img.clone());
    }
    let sx = img.width as f64 / new_w as f64;
    let sy = img.height as f64 / new_h as f64;
    let mut data = Vec::with_capacity(new_w * new_h * img.channels);
    for y in 0..new_h {
        let src_y = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..new_w {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            for c in 0..img.channels {
                data.push(clamp_u8(img.sample_bilinear(src_x, src_y, c)));
            }
        }
    }
    Image::new(new_w, new_h, img.channels, data)
}

/// Summed-area table with a zero first row and column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    table: Vec<u64>,
}

impl IntegralImage {
    /// Width of the source image (the table is one wider).
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Table entry `(x, y)`: sum of all pixels strictly above and left of it.
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u64 {
        self.table[y * (self.width + 1) + x]
    }

    /// Sum of pixels in columns `x..x + w`, rows `y..y + h`.
    ///
    /// Panics if the rectangle leaves the image.
    #[inline]
    pub fn rect_sum(&self, x: usize, y: usize, w: usize, h: usize) -> u64 {
        let (x1, y1) = (x + w, y + h);
        assert!(x1 <= self.width && y1 <= self.height, "rectangle outside image");
        self.at(x1, y1) + self.at(x, y) - self.at(x1, y) - self.at(x, y1)
    }
}

/// Integral image of the luma plane (RGB input is converted first).
pub fn integral_image(img: &Image) -> IntegralImage {
    let gray = to_grayscale(img);
    let (w, h) = (gray.width, gray.height);
    let stride = w + 1;
    let mut table = vec![0u64; stride * (h + 1)];
    for y in 0..h {
        let mut row = 0u64;
        for x in 0..w {
            row += gray.data[y * w + x] as u64;
            table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row;
        }
    }
    IntegralImage {
        width: w,
        height: h,
        table,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gray(w: usize, h: usize, data: &[u8]) -> Image {
        Image::new(w, h, 1, data.to_vec()).unwrap()
    }

    fn random_gray(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |_, _| rng.gen()).unwrap()
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(Image::new(0, 3, 1, vec![]).is_err());
        assert!(Image::new(2, 2, 2, vec![0; 8]).is_err());
        assert!(Image::new(2, 2, 1, vec![0; 5]).is_err());
    }

    #[test]
    fn grayscale_reference_pixels() {
        let img = Image::new(3, 1, 3, vec![255, 255, 255, 0, 0, 0, 255, 0, 0]).unwrap();
        assert_eq!(to_grayscale(&img).data(), &[255, 0, 76]);
        let g = gray(2, 1, &[3, 9]);
        assert_eq!(to_grayscale(&g), g);
    }

    #[test]
    fn equalize_constant_is_identity() {
        let img = Image::filled(5, 4, 1, 37).unwrap();
        assert_eq!(equalize_histogram(&img), img);
        let rgb = Image::filled(3, 3, 3, 90).unwrap();
        assert_eq!(equalize_histogram(&rgb), rgb);
    }

    #[test]
    fn equalize_extremes_and_cdf_formula() {
        assert_eq!(equalize_histogram(&gray(2, 1, &[0, 255])).data(), &[0, 255]);
        // cdf: 52 -> 2, 154 -> 3, 200 -> 4; cdf_min = 2, N = 4.
        // (2-2)/2*255 = 0, (3-2)/2*255 = 127.5 -> 128, (4-2)/2*255 = 255.
        let out = equalize_histogram(&gray(4, 1, &[52, 52, 154, 200]));
        assert_eq!(out.data(), &[0, 0, 128, 255]);
    }

    #[test]
    fn equalize_rgb_keeps_gray_pixels_gray() {
        let data: Vec<u8> = [10u8, 10, 10, 80, 80, 80, 200, 200, 200, 120, 120, 120]
            .to_vec();
        let out = equalize_histogram(&Image::new(4, 1, 3, data).unwrap());
        for p in out.data().chunks(3) {
            assert!((p[0] as i32 - p[1] as i32).abs() <= 1);
            assert!((p[1] as i32 - p[2] as i32).abs() <= 1);
        }
        assert_eq!(out.get(0, 0, 0), 0);
        assert_eq!(out.get(2, 0, 0), 255);
    }

    #[test]
    fn median_removes_salt_pixel() {
        let mut img = Image::filled(5, 5, 1, 0).unwrap();
        img.set(2, 2, 0, 255);
        let out = median_filter(&img, 1).unwrap();
        assert!(out.data().iter().all(|&v| v == 0));
        let c = Image::filled(4, 6, 1, 9).unwrap();
        assert_eq!(median_filter(&c, 1).unwrap(), c);
    }

    #[test]
    fn median_matches_sorting_oracle() {
        let img = random_gray(7, 7, 11);
        let out = median_filter(&img, 1).unwrap();
        for y in 0..7i64 {
            for x in 0..7i64 {
                let mut v = Vec::new();
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let xx = (x + dx).clamp(0, 6) as usize;
                        let yy = (y + dy).clamp(0, 6) as usize;
                        v.push(img.get(xx, yy, 0));
                    }
                }
                v.sort();
                assert_eq!(out.get(x as usize, y as usize, 0), v[4], "at ({x},{y})");
            }
        }
    }

    #[test]
    fn median_kernel_too_large() {
        let img = Image::filled(3, 8, 1, 0).unwrap();
        assert!(matches!(median_filter(&img, 3), Err(Error::KernelTooLarge)));
        assert!(median_filter(&img, 0).is_err());
    }

    #[test]
    fn crop_identity_and_clipping() {
        let img = random_gray(100, 100, 3);
        assert_eq!(crop_with_margin(&img, &img.bounds(), 0).unwrap(), img);

        let b = BoundingBox::from_corners(10, 10, 20, 20).unwrap();
        let region = crop_region(&img, &b, 30).unwrap();
        assert_eq!(region, BoundingBox::from_corners(0, 0, 50, 50).unwrap());

        let interior = BoundingBox::new(40, 40, 10, 12).unwrap();
        let out = crop_with_margin(&img, &interior, 30).unwrap();
        assert_eq!((out.width(), out.height()), (70, 72));
        assert_eq!(out.get(0, 0, 0), img.get(10, 10, 0));

        let outside = BoundingBox::new(300, 300, 10, 10).unwrap();
        assert!(matches!(
            crop_with_margin(&img, &outside, 30),
            Err(Error::BoxOutsideImage)
        ));
    }

    #[test]
    fn resize_reference_cases() {
        let img = random_gray(9, 5, 4);
        assert_eq!(resize(&img, 9, 5).unwrap(), img);
        let checker = gray(2, 2, &[0, 255, 255, 0]);
        assert_eq!(resize(&checker, 1, 1).unwrap().data(), &[128]);
        let c = Image::filled(7, 3, 3, 77).unwrap();
        let out = resize(&c, 13, 29).unwrap();
        assert!(out.data().iter().all(|&v| v == 77));
        assert_eq!(out.channels(), 3);
    }

    #[test]
    fn integral_reference_cases() {
        let ones = Image::filled(4, 4, 1, 1).unwrap();
        let ii = integral_image(&ones);
        assert_eq!(ii.rect_sum(0, 0, 4, 4), 16);
        let img = random_gray(8, 8, 5);
        let ii = integral_image(&img);
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(ii.rect_sum(x, y, 1, 1), img.get(x, y, 0) as u64);
            }
        }
        for i in 0..=8 {
            assert_eq!(ii.at(i, 0), 0);
            assert_eq!(ii.at(0, i), 0);
        }
    }

    proptest! {
        #[test]
        fn equalize_idempotent_within_one_level(data in proptest::collection::vec(any::<u8>(), 64)) {
            let img = gray(8, 8, &data);
            let once = equalize_histogram(&img);
            let twice = equalize_histogram(&once);
            for (a, b) in once.data().iter().zip(twice.data()) {
                prop_assert!((*a as i32 - *b as i32).abs() <= 1);
            }
        }

        #[test]
        fn median_creates_no_new_values(data in proptest::collection::vec(any::<u8>(), 48), r in 1usize..3) {
            let img = gray(8, 6, &data);
            let out = median_filter(&img, r).unwrap();
            for v in out.data() {
                prop_assert!(data.contains(v));
            }
        }

        #[test]
        fn integral_rect_sum_matches_brute_force(seed in any::<u64>(), w in 1usize..12, h in 1usize..12) {
            let img = random_gray(w, h, seed);
            let ii = integral_image(&img);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
            for _ in 0..20 {
                let x = rng.gen_range(0..w);
                let y = rng.gen_range(0..h);
                let rw = rng.gen_range(1..=w - x);
                let rh = rng.gen_range(1..=h - y);
                let mut brute = 0u64;
                for yy in y..y + rh {
                    for xx in x..x + rw {
                        brute += img.get(xx, yy, 0) as u64;
                    }
                }
                prop_assert_eq!(ii.rect_sum(x, y, rw, rh), brute);
            }
        }

        #[test]
        fn integral_table_is_monotone(seed in any::<u64>()) {
            let img = random_gray(6, 5, seed);
            let ii = integral_image(&img);
            for y in 0..=5 {
                for x in 0..6 {
                    prop_assert!(ii.at(x, y) <= ii.at(x + 1, y));
                }
            }
            for x in 0..=6 {
                for y in 0..5 {
                    prop_assert!(ii.at(x, y) <= ii.at(x, y + 1));
                }
            }
        }

        #[test]
        fn recrop_with_full_box_is_identity(seed in any::<u64>(), x in 0i32..20, y in 0i32..20, m in 0i32..10) {
            let img = random_gray(30, 30, seed);
            let b = BoundingBox::new(x, y, 5, 7).unwrap();
            let first = crop_with_margin(&img, &b, m).unwrap();
            let again = crop_with_margin(&first, &first.bounds(), 0).unwrap();
            prop_assert_eq!(again, first);
        }
    }
}
