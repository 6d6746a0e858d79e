//! Frames, binary masks and overlap heatmaps.
//!
//! All rasters are row-major. A pixel at column `col`, row `row` covers the unit square
//! `[col, col + 1) x [row, row + 1)`; a real-valued shape covers a pixel when it contains
//! the pixel center.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crop::CropTransform;
use crate::geometry::{BoundingBox, Point};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RasterError {
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("raster dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("heatmap has no consensus (all counts are zero)")]
    NoConsensus,
    #[error("empty mask")]
    EmptyMask,
    #[error("invalid run-length encoding: {0}")]
    InvalidRle(String),
}

/// Integer pixel coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pixel {
    pub col: usize,
    pub row: usize,
}

impl Pixel {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }

    pub fn center(&self) -> Point {
        Point::pixel_center(self.col, self.row)
    }
}

/// One video frame: 8 bits per channel, 1 (gray) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    index: usize,
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
    /// Set when this frame is a resampled crop of the source frame with the same index.
    crop: Option<CropTransform>,
}

impl Frame {
    pub fn new(
        index: usize,
        width: usize,
        height: usize,
        channels: usize,
        pixels: Vec<u8>,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidFrame(format!(
                "frame {index} has zero extent {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(RasterError::InvalidFrame(format!(
                "frame {index} has {channels} channels, expected 1 or 3"
            )));
        }
        if pixels.len() != width * height * channels {
            return Err(RasterError::InvalidFrame(format!(
                "frame {index}: buffer holds {} bytes, expected {}",
                pixels.len(),
                width * height * channels
            )));
        }
        Ok(Self {
            index,
            width,
            height,
            channels,
            pixels,
            crop: None,
        })
    }

    pub fn gray(index: usize, width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, RasterError> {
        Self::new(index, width, height, 1, pixels)
    }

    pub(crate) fn with_crop(mut self, crop: CropTransform) -> Self {
        self.crop = Some(crop);
        self
    }

    pub fn index(&self) -> usize {
        self.index
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
    pub fn crop(&self) -> Option<&CropTransform> {
        self.crop.as_ref()
    }

    /// Channel `c` of the pixel at (`col`, `row`).
    #[inline]
    pub fn sample(&self, col: usize, row: usize, c: usize) -> u8 {
        self.pixels[(row * self.width + col) * self.channels + c]
    }

    pub fn bounds(&self) -> BoundingBox {
        BoundingBox::new(0.0, 0.0, self.width as f64, self.height as f64)
            .expect("frame extent is positive")
    }
}

/// Ordered frames of one sequence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VideoSequence {
    pub id: String,
    pub frames: Vec<Frame>,
}

impl VideoSequence {
    pub fn new(id: impl Into<String>, frames: Vec<Frame>) -> Self {
        Self {
            id: id.into(),
            frames,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Binary object-membership raster.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl std::fmt::Debug for Mask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Mask({}x{}, area {})", self.width, self.height, self.area())
    }
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, RasterError> {
        if bits.len() != width * height {
            return Err(RasterError::InvalidFrame(format!(
                "mask buffer holds {} bits, expected {}",
                bits.len(),
                width * height
            )));
        }
        Ok(Self { width, height, bits })
    }

    /// Builds a mask from `f(col, row)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                bits.push(f(col, row));
            }
        }
        Self { width, height, bits }
    }

    /// Pixels whose centers lie inside `b` (half-open).
    pub fn from_box(width: usize, height: usize, b: &BoundingBox) -> Self {
        Self::from_fn(width, height, |col, row| b.contains(Point::pixel_center(col, row)))
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> bool {
        self.bits[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn contains_pixel(&self, p: Pixel) -> bool {
        p.col < self.width && p.row < self.height && self.get(p.col, p.row)
    }

    /// Whether the pixel under `p` is set; points outside the raster are not.
    pub fn contains_point(&self, p: Point) -> bool {
        p.pixel(self.width, self.height)
            .is_some_and(|(col, row)| self.get(col, row))
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_blank(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Set pixels in row-major order.
    pub fn set_pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| Pixel::new(i % w, i / w))
    }

    pub fn intersects(&self, other: &Mask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).any(|(&a, &b)| a && b)
    }

    /// Morphological erosion with a `(2r+1)^2` square; pixels outside the raster count as unset.
    pub fn eroded(&self, radius: usize) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        let rows = self.square_filter(radius, true);
        rows.transposed_filter(radius, true)
    }

    /// Morphological dilation with a `(2r+1)^2` square.
    pub fn dilated(&self, radius: usize) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        let rows = self.square_filter(radius, false);
        rows.transposed_filter(radius, false)
    }

    // Horizontal pass of a separable min (erode) / max (dilate) filter.
    fn square_filter(&self, radius: usize, erode: bool) -> Mask {
        Mask::from_fn(self.width, self.height, |col, row| {
            let lo = col as isize - radius as isize;
            let hi = col + radius;
            if erode {
                lo >= 0 && hi < self.width && (lo as usize..=hi).all(|c| self.get(c, row))
            } else {
                (lo.max(0) as usize..=hi.min(self.width - 1)).any(|c| self.get(c, row))
            }
        })
    }

    // Vertical pass.
    fn transposed_filter(&self, radius: usize, erode: bool) -> Mask {
        Mask::from_fn(self.width, self.height, |col, row| {
            let lo = row as isize - radius as isize;
            let hi = row + radius;
            if erode {
                lo >= 0 && hi < self.height && (lo as usize..=hi).all(|r| self.get(col, r))
            } else {
                (lo.max(0) as usize..=hi.min(self.height - 1)).any(|r| self.get(col, r))
            }
        })
    }
}

/// Per-pixel count of covering masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Heatmap {
    width: usize,
    height: usize,
    counts: Vec<u32>,
}

impl Heatmap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            counts: vec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> u32 {
        self.counts[row * self.width + col]
    }

    pub fn max_count(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// Adds one to every pixel covered by `mask`.
    pub fn add(&mut self, mask: &Mask) -> Result<(), RasterError> {
        if mask.dims() != (self.width, self.height) {
            return Err(RasterError::DimensionMismatch {
                expected: (self.width, self.height),
                got: mask.dims(),
            });
        }
        for (c, &b) in self.counts.iter_mut().zip(&mask.bits) {
            *c += b as u32;
        }
        Ok(())
    }
}

/// Sums masks pixel-wise. An empty list yields a zero heatmap of the given size.
pub fn aggregate_heatmap(width: usize, height: usize, masks: &[Mask]) -> Result<Heatmap, RasterError> {
    let mut heat = Heatmap::zeros(width, height);
    for m in masks {
        heat.add(m)?;
    }
    Ok(heat)
}

/// Result of [`consensus_region`].
#[derive(Debug, Clone, PartialEq)]
pub struct Consensus {
    pub peak: Pixel,
    pub region: Mask,
    pub peak_count: u32,
}

impl Consensus {
    /// Count threshold used to grow the region.
    pub fn threshold(&self) -> u32 {
        self.peak_count.div_ceil(2)
    }
}

/// Locates the pixel where the most masks overlap and the 4-connected area around it.
///
/// The peak is the first maximum in row-major order. The region holds every pixel reachable
/// from the peak through 4-neighbours whose count is at least `ceil(peak_count / 2)`.
pub fn consensus_region(heat: &Heatmap) -> Result<Consensus, RasterError> {
    let (w, h) = (heat.width, heat.height);
    let mut best = 0u32;
    let mut peak_idx = None;
    for (i, &c) in heat.counts.iter().enumerate() {
        if c > best {
            best = c;
            peak_idx = Some(i);
        }
    }
    let peak_idx = peak_idx.ok_or(RasterError::NoConsensus)?;
    let threshold = best.div_ceil(2);

    let mut region = Mask::new(w, h);
    let mut stack = vec![peak_idx];
    region.bits[peak_idx] = true;
    while let Some(i) = stack.pop() {
        let (col, row) = (i % w, i / w);
        let mut visit = |j: usize| {
            if !region.bits[j] && heat.counts[j] >= threshold {
                region.bits[j] = true;
                stack.push(j);
            }
        };
        if col > 0 {
            visit(i - 1);
        }
        if col + 1 < w {
            visit(i + 1);
        }
        if row > 0 {
            visit(i - w);
        }
        if row + 1 < h {
            visit(i + w);
        }
    }

    Ok(Consensus {
        peak: Pixel::new(peak_idx % w, peak_idx / w),
        region,
        peak_count: best,
    })
}

/// Tightest box over the set pixels (whole-pixel extents).
pub fn bbox_from_mask(mask: &Mask) -> Result<BoundingBox, RasterError> {
    let mut extent: Option<(usize, usize, usize, usize)> = None;
    for p in mask.set_pixels() {
        extent = Some(match extent {
            None => (p.col, p.row, p.col, p.row),
            Some((c0, r0, c1, r1)) => (c0.min(p.col), r0.min(p.row), c1.max(p.col), r1.max(p.row)),
        });
    }
    let (c0, r0, c1, r1) = extent.ok_or(RasterError::EmptyMask)?;
    Ok(BoundingBox::new(
        c0 as f64,
        r0 as f64,
        (c1 - c0 + 1) as f64,
        (r1 - r0 + 1) as f64,
    )
    .expect("pixel extent is positive"))
}

/// Column-major run lengths starting with a run of zeros, as used by COCO.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rle {
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u32>,
}

impl Rle {
    pub fn encode(mask: &Mask) -> Self {
        let mut counts = Vec::new();
        let (mut current, mut run) = (false, 0u32);
        for col in 0..mask.width {
            for row in 0..mask.height {
                let v = mask.get(col, row);
                if v != current {
                    counts.push(run);
                    run = 0;
                    current = v;
                }
                run += 1;
            }
        }
        counts.push(run);
        Self {
            width: mask.width,
            height: mask.height,
            counts,
        }
    }

    pub fn decode(&self) -> Result<Mask, RasterError> {
        let n = self.width * self.height;
        let total: u64 = self.counts.iter().map(|&c| c as u64).sum();
        if total != n as u64 {
            return Err(RasterError::InvalidRle(format!(
                "run lengths sum to {total}, expected {n}"
            )));
        }
        let mut mask = Mask::new(self.width, self.height);
        let mut idx = 0usize;
        let mut value = false;
        for &c in &self.counts {
            for k in idx..idx + c as usize {
                // column-major index k
                let (col, row) = (k / self.height, k % self.height);
                mask.set(col, row, value);
            }
            idx += c as usize;
            value = !value;
        }
        Ok(mask)
    }

    /// Compressed COCO string form: 5-bit groups offset by 48, with runs after the third
    /// delta-coded against the run two places earlier.
    pub fn to_coco_string(&self) -> String {
        let mut s = String::new();
        for (i, &cnt) in self.counts.iter().enumerate() {
            let mut x = cnt as i64;
            if i > 2 {
                x -= self.counts[i - 2] as i64;
            }
            loop {
                let mut c = (x & 0x1f) as u8;
                x >>= 5;
                let more = if c & 0x10 != 0 { x != -1 } else { x != 0 };
                if more {
                    c |= 0x20;
                }
                s.push((c + 48) as char);
                if !more {
                    break;
                }
            }
        }
        s
    }

    pub fn from_coco_string(s: &str, width: usize, height: usize) -> Result<Self, RasterError> {
        let bytes = s.as_bytes();
        let mut counts: Vec<u32> = Vec::new();
        let mut i = 0;
        while i < bytes.len() {
            let mut x: i64 = 0;
            let mut shift = 0;
            let mut more = true;
            while more {
                let b = *bytes
                    .get(i)
                    .ok_or_else(|| RasterError::InvalidRle("truncated run".into()))?;
                if !(48..48 + 64).contains(&b) || shift > 55 {
                    return Err(RasterError::InvalidRle(format!("bad byte {b:#x} at {i}")));
                }
                let c = (b - 48) as i64;
                i += 1;
                x |= (c & 0x1f) << shift;
                more = c & 0x20 != 0;
                shift += 5;
            }
            if x & (1 << (shift - 1)) != 0 {
                x |= !0i64 << shift;
            }
            if counts.len() > 2 {
                x += counts[counts.len() - 2] as i64;
            }
            let x = u32::try_from(x)
                .map_err(|_| RasterError::InvalidRle(format!("run length {x} out of range")))?;
            counts.push(x);
        }
        Ok(Self {
            width,
            height,
            counts,
        })
    }
}
