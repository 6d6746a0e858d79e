//! Real-valued boxes and points, plus the box metrics used for evaluation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid box ({x}, {y}, {w}, {h}): extent must be positive and finite")]
    InvalidBox { x: f64, y: f64, w: f64, h: f64 },
    #[error("empty point set")]
    EmptyPointSet,
    #[error("minimum box dimension must be positive, got {0}")]
    InvalidMinDim(f64),
}

/// Sub-pixel image coordinate. Pixel `(col, row)` spans `[col, col + 1) x [row, row + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Center of the pixel at column `col`, row `row`.
    pub fn pixel_center(col: usize, row: usize) -> Self {
        Self::new(col as f64 + 0.5, row as f64 + 0.5)
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Clamp into `[0, width] x [0, height]`.
    pub fn clamped(self, width: usize, height: usize) -> Self {
        Self::new(
            self.x.clamp(0.0, width as f64),
            self.y.clamp(0.0, height as f64),
        )
    }

    /// Pixel containing this point, or `None` when outside the raster.
    pub fn pixel(&self, width: usize, height: usize) -> Option<(usize, usize)> {
        if !(self.x >= 0.0 && self.y >= 0.0) {
            return None;
        }
        let (col, row) = (self.x.floor() as usize, self.y.floor() as usize);
        (col < width && row < height).then_some((col, row))
    }
}

/// Axis-aligned box with real-valued top-left corner and extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        let finite = x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite();
        if !finite || w <= 0.0 || h <= 0.0 {
            return Err(GeometryError::InvalidBox { x, y, w, h });
        }
        Ok(Self { x, y, w, h })
    }

    /// Box of the given extent centered on `center`.
    pub fn centered(center: Point, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new(center.x - w / 2.0, center.y - h / 2.0, w, h)
    }

    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn right(&self) -> f64 {
        self.x + self.w
    }
    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }
    pub fn area(&self) -> f64 {
        self.w * self.h
    }
    pub fn min_dim(&self) -> f64 {
        self.w.min(self.h)
    }

    pub fn center(&self) -> Point {
        Point::new(self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    /// Scale extent by `factor` about the box center.
    pub fn scaled_about_center(&self, factor: f64) -> Result<Self, GeometryError> {
        Self::centered(self.center(), self.w * factor, self.h * factor)
    }

    /// Half-open containment, the rule used for rasterization.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x && p.x < self.right() && p.y >= self.y && p.y < self.bottom()
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = GeometryError;

    fn try_from([x, y, w, h]: [f64; 4]) -> Result<Self, Self::Error> {
        Self::new(x, y, w, h)
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.as_array()
    }
}

impl std::str::FromStr for BoundingBox {
    type Err = String;

    /// Parses `x,y,w,h`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format!("bad box {s:?}: {e}"))?;
        let arr: [f64; 4] = parts
            .try_into()
            .map_err(|_| format!("bad box {s:?}: expected x,y,w,h"))?;
        Self::try_from(arr).map_err(|e| e.to_string())
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Euclidean distance between box centers.
pub fn center_distance(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.center().distance(&b.center())
}

/// Tightest box over `points`, each dimension then grown symmetrically to at least `min_dim`.
pub fn bbox_from_points(points: &[Point], min_dim: f64) -> Result<BoundingBox, GeometryError> {
    if !(min_dim > 0.0) {
        return Err(GeometryError::InvalidMinDim(min_dim));
    }
    let first = points.first().ok_or(GeometryError::EmptyPointSet)?;
    let (mut x0, mut y0, mut x1, mut y1) = (first.x, first.y, first.x, first.y);
    for p in &points[1..] {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let (mut w, mut h) = (x1 - x0, y1 - y0);
    if w < min_dim {
        x0 -= (min_dim - w) / 2.0;
        w = min_dim;
    }
    if h < min_dim {
        y0 -= (min_dim - h) / 2.0;
        h = min_dim;
    }
    BoundingBox::new(x0, y0, w, h)
}
