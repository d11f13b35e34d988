//! Points and axis-aligned pixel boxes shared by every pipeline stage.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2-D point in pixel coordinates, y pointing down. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn midpoint(self, other: Point) -> Point {
        Point::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Axis-aligned box in integer pixel coordinates: top-left `(x, y)`, size `w × h`.
///
/// The box covers columns `x..x + w` and rows `y..y + h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
}

impl BoundingBox {
    pub fn new(x: i32, y: i32, w: i32, h: i32) -> Result<Self> {
        if w <= 0 || h <= 0 {
            return Err(Error::InvalidArgument(format!(
                "bounding box must have positive size, got {w}x{h}"
            )));
        }
        Ok(BoundingBox { x, y, w, h })
    }

    /// Box spanning `[x0, x1) × [y0, y1)`.
    pub fn from_corners(x0: i32, y0: i32, x1: i32, y1: i32) -> Result<Self> {
        Self::new(x0, y0, x1 - x0, y1 - y0)
    }

    /// Smallest integer box containing every point (at least 1×1).
    pub fn enclosing(points: &[Point]) -> Result<Self> {
        if points.is_empty() || points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(
                "cannot enclose an empty or non-finite point set".into(),
            ));
        }
        let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
        let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        let (x0, y0) = (x0.floor() as i32, y0.floor() as i32);
        let (x1, y1) = (x1.ceil() as i32, y1.ceil() as i32);
        Self::from_corners(x0, y0, x1.max(x0 + 1), y1.max(y0 + 1))
    }

    pub fn right(&self) -> i32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> i32 {
        self.y + self.h
    }

    pub fn area(&self) -> i64 {
        self.w as i64 * self.h as i64
    }

    pub fn grow(&self, margin: i32) -> BoundingBox {
        BoundingBox {
            x: self.x - margin,
            y: self.y - margin,
            w: self.w + 2 * margin,
            h: self.h + 2 * margin,
        }
    }

    pub fn intersection(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| BoundingBox {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        })
    }

    /// Intersection-over-union.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection(other).map_or(0, |b| b.area());
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn contains_box(&self, other: &BoundingBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn translated(&self, dx: i32, dy: i32) -> BoundingBox {
        BoundingBox {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    pub fn center(&self) -> Point {
        Point::new(
            self.x as f64 + 0.5 * self.w as f64,
            self.y as f64 + 0.5 * self.h as f64,
        )
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x, self.y, self.w, self.h)
    }
}

/// Parses `x,y,w,h`.
impl FromStr for BoundingBox {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::InvalidArgument(format!(
                "expected x,y,w,h but got {s:?}"
            )));
        }
        let mut v = [0i32; 4];
        for (slot, part) in v.iter_mut().zip(&parts) {
            *slot = part
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("not an integer: {part:?}")))?;
        }
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        let b: BoundingBox = "10, 20,30,40".parse().unwrap();
        assert_eq!(b, BoundingBox::new(10, 20, 30, 40).unwrap());
        assert_eq!(b.to_string(), "10,20,30,40");
        assert!("1,2,3".parse::<BoundingBox>().is_err());
        assert!("1,2,0,3".parse::<BoundingBox>().is_err());
    }

    #[test]
    fn iou_of_identical_and_disjoint_boxes() {
        let a = BoundingBox::new(0, 0, 10, 10).unwrap();
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&a.translated(20, 0)), 0.0);
        let half = a.translated(5, 0);
        assert!((a.iou(&half) - 50.0 / 150.0).abs() < 1e-15);
    }

    #[test]
    fn point_serializes_as_pair() {
        let s = serde_json::to_string(&Point::new(1.5, -2.0)).unwrap();
        assert_eq!(s, "[1.5,-2.0]");
        let p: Point = serde_json::from_str(&s).unwrap();
        assert_eq!(p, Point::new(1.5, -2.0));
    }
}
