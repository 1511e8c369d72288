//! Axis-aligned bounding-box arithmetic.
//!
//! Boxes use continuous (real-valued) geometry in `(x, y, w, h)` format with
//! a top-left origin, the dominant tracking-benchmark convention. All
//! operations are pure functions on immutable values and safe for
//! unrestricted parallel use.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("non-finite box coordinate: ({x}, {y}, {w}, {h})")]
    NonFinite { x: f64, y: f64, w: f64, h: f64 },
    #[error("negative box dimensions: w={w}, h={h}")]
    NegativeSize { w: f64, h: f64 },
    #[error("zero-area ground-truth box cannot normalize a center distance")]
    DegenerateGroundTruth,
    #[error("frame dimensions must be positive: {width}x{height}")]
    EmptyFrame { width: u32, height: u32 },
}

/// Axis-aligned box: `x`/`y` is the top-left corner, `w`/`h` the extent.
///
/// A box with `w == 0` or `h == 0` is valid and has zero area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(GeometryError::NonFinite { x, y, w, h });
        }
        if w < 0.0 || h < 0.0 {
            return Err(GeometryError::NegativeSize { w, h });
        }
        Ok(Self { x, y, w, h })
    }

    /// Builds a box from opposite corners `(x1, y1)`–`(x2, y2)`.
    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        Self::new(x1.min(x2), y1.min(y2), (x2 - x1).abs(), (y2 - y1).abs())
    }

    /// Returns `(x1, y1, x2, y2)` corners.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (self.x, self.y, self.x + self.w, self.y + self.h)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Center point `(x + w/2, y + h/2)`.
    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            w: self.w,
            h: self.h,
        }
    }

    /// Scales all four components by `s` (about the origin).
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            x: self.x * s,
            y: self.y * s,
            w: self.w * s,
            h: self.h * s,
        }
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = GeometryError;
    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> [f64; 4] {
        [b.x, b.y, b.w, b.h]
    }
}

/// Pixel dimensions of a video frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSize {
    pub width: u32,
    pub height: u32,
}

impl FrameSize {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::EmptyFrame { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn diagonal(&self) -> f64 {
        let w = self.width as f64;
        let h = self.height as f64;
        (w * w + h * h).sqrt()
    }

    /// True when `b` lies inside the frame (touching edges allowed).
    pub fn contains(&self, b: &BoundingBox) -> bool {
        b.x >= 0.0
            && b.y >= 0.0
            && b.x + b.w <= self.width as f64
            && b.y + b.h <= self.height as f64
    }
}

/// Intersection-over-union of two boxes. Returns 0 when the union has zero
/// area, keeping metric aggregation total.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax1, ay1, ax2, ay2) = a.corners();
    let (bx1, by1, bx2, by2) = b.corners();
    let ix = ax2.min(bx2) - ax1.max(bx1);
    let iy = ay2.min(by2) - ay1.max(by1);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    // Areas from the same corner differences as the intersection, so
    // identical boxes give exactly 1.
    let area_a = (ax2 - ax1) * (ay2 - ay1);
    let area_b = (bx2 - bx1) * (by2 - by1);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Euclidean distance between box centers, in pixels.
pub fn center_distance(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    let dx = ax - bx;
    let dy = ay - by;
    (dx * dx + dy * dy).sqrt()
}

/// Center offset scaled by the ground-truth box dimensions:
/// `sqrt((dx/gt.w)^2 + (dy/gt.h)^2)`.
///
/// Errors when the ground-truth box has zero width or height.
pub fn normalized_center_distance(
    pred: &BoundingBox,
    gt: &BoundingBox,
) -> Result<f64, GeometryError> {
    if gt.w <= 0.0 || gt.h <= 0.0 {
        return Err(GeometryError::DegenerateGroundTruth);
    }
    let (px, py) = pred.center();
    let (gx, gy) = gt.center();
    let dx = (px - gx) / gt.w;
    let dy = (py - gy) / gt.h;
    Ok((dx * dx + dy * dy).sqrt())
}
